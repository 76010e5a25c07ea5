#pragma once

#include <functional>
#include <vector>

#include "fvx/binning.hpp"
#include "fvx/forest.hpp"
#include "fvx/geometry.hpp"

namespace fvx {

struct VoxelConfig {
    double d_spec = 0.0; // near-wall refinement distance, domain units
    int l_max = 1;       // number of levels
    BinParams bins;
    int capacity_multiplier = 8;
    bool refine_mesh = true; // split faces down to the bin cover bound before binning
};

// Normalized link lengths per boundary-block cell and direction, -1 where none.
struct LinkTable {
    int q = 27;
    int mb = 64;
    int num_blocks = 0;
    std::vector<double> lengths;
    std::vector<int> bc_ids;          // reserved, all zero (no-slip)
    std::vector<int> contraction_map; // per block id: slot in the table or -1

    std::size_t index(int slot, int t, int k) const {
        return (static_cast<std::size_t>(slot) * mb + t) * q + k;
    }
    double get(int block, int t, int k) const {
        const int s = contraction_map[block];
        return s < 0 ? -1.0 : lengths[index(s, t, k)];
    }
};

void partial_surface_voxelize(ForestGrid& g, int level, const BinLevel& bins, const TriangleMesh& mesh, double eps_slab);
// dir is +1 or -1
void propagate_external(ForestGrid& g, int level, int dir);
void finalize_masks(ForestGrid& g, int level);

int near_wall_layers(const Domain& dom, int level, double d_spec);
void mark_near_wall_refinement(ForestGrid& g, int level, double d_spec);

// Missing same-level neighbors whose covering coarse leaf is entirely solid get kSolidNbr.
void assign_solid_neighbor_codes(ForestGrid& g, int level);

// Fluid cells next to a solid cell become Boundary. Returns per-block boundary counts.
std::vector<int> identify_boundary_cells(ForestGrid& g);
LinkTable build_boundary_tables(const ForestGrid& g, const std::vector<int>& counts);
// bins[L] built with RayMode::AllDirections for each level that has mapped blocks.
void compute_link_lengths(const ForestGrid& g, const std::vector<BinLevel>& bins, const TriangleMesh& mesh,
                          double eps_slab, LinkTable& table);

struct EmbedTimes {
    double refine = 0.0; // marking and adapt
    double binning = 0.0;
    double voxelize = 0.0;
};

struct EmbedResult {
    LinkTable links;
    TriangleMesh mesh; // the mesh after face refinement
    EmbedTimes times;
};

// Called after each level is finalized (and after adapt when the level refines).
using LevelHook = std::function<void(const ForestGrid&, int level)>;

EmbedResult embed_geometry(ForestGrid& g, const TriangleMesh& mesh, const VoxelConfig& cfg,
                           const LevelHook& hook = {});

} // namespace fvx
