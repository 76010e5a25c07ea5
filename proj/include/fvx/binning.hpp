#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fvx/domain.hpp"
#include "fvx/geometry.hpp"

namespace fvx {

struct BinLevel {
    int level = 0;
    int dim = 3;
    int density = 1;    // bins per axis
    double width = 1.0; // bin edge length
    std::vector<int> face_ids;
    std::vector<int> counts;
    std::vector<int> offsets; // -1 where counts is 0

    std::size_t num_bins() const { return counts.size(); }
    long bin_index(const Vec3& p) const;
    std::span<const int> faces(long bin) const {
        if (bin < 0 || counts[bin] == 0) return {};
        return {face_ids.data() + offsets[bin], static_cast<std::size_t>(counts[bin])};
    }
};

struct FilterMap {
    std::vector<std::uint8_t> indicators;
    std::vector<int> compact_map;
};

enum class RayMode { AxisOnly, AllDirections };

struct BinParams {
    int bin_density = 0; // root bins per axis; 0 matches the root block count
    int n_spec = 2;
    bool filter = true;
    double eps_slab = 1e-9;
};

std::vector<std::uint8_t> compute_ray_indicators(const TriangleMesh& mesh, const Domain& dom, int level, RayMode mode,
                                                 double eps_slab);
FilterMap compact_filtered_faces(const std::vector<std::uint8_t>& indicators);

using BinPair = std::pair<long, int>; // (bin, face)

// filter may be null, in which case every face participates.
std::vector<BinPair> compute_bin_pairs(const TriangleMesh& mesh, const FilterMap* filter, const Domain& dom, int level,
                                       int bin_density, int n_spec);
BinLevel assemble_bins(const std::vector<BinPair>& pairs, long n_bins);

BinLevel build_bin_level(const TriangleMesh& mesh, const Domain& dom, int level, RayMode mode, const BinParams& p);
std::vector<BinLevel> build_bin_hierarchy(const TriangleMesh& mesh, const Domain& dom, int levels, RayMode mode,
                                          const BinParams& p);

inline int root_bin_density(const Domain& dom, const BinParams& p) {
    return p.bin_density > 0 ? p.bin_density : dom.blocks_per_axis();
}

} // namespace fvx
