#include "fvx/binning.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fvx/errors.hpp"
#include "fvx/lattice.hpp"
#include "fvx/parallel.hpp"

namespace fvx {

namespace {

long clampl(long v, long lo, long hi) { return std::min(std::max(v, lo), hi); }

bool outside_domain(const Aabb& b, const Domain& dom) {
    for (int d = 0; d < dom.dim; ++d)
        if (b.hi[d] < 0.0 || b.lo[d] > dom.length) return true;
    return false;
}

} // namespace

long BinLevel::bin_index(const Vec3& p) const {
    long idx = 0, stride = 1;
    for (int d = 0; d < dim; ++d) {
        const long i = clampl(static_cast<long>(std::floor(p[d] / width)), 0, density - 1);
        idx += i * stride;
        stride *= density;
    }
    return idx;
}

std::vector<std::uint8_t> compute_ray_indicators(const TriangleMesh& mesh, const Domain& dom, int level, RayMode mode,
                                                 double eps_slab) {
    const std::size_t nf = mesh.num_faces();
    std::vector<std::uint8_t> ind(nf, 0);
    const double dx = dom.dx(level);
    const long n = dom.cells_per_axis(level);
    const int dim = dom.dim;
    const VelocitySet& vs = VelocitySet::get(dim);

    parallel_for(nf, [&](std::size_t f) {
        const Aabb fb = face_aabb(mesh, f);
        long lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
        const int pad = mode == RayMode::AxisOnly ? 0 : 1;
        for (int d = 0; d < dim; ++d) {
            lo[d] = clampl(static_cast<long>(std::floor((fb.lo[d] - eps_slab) / dx - 0.5)) - pad, 0, n - 1);
            hi[d] = clampl(static_cast<long>(std::ceil((fb.hi[d] + eps_slab) / dx - 0.5)) + pad, 0, n - 1);
        }
        if (mode == RayMode::AxisOnly) {
            // thin box spanning the domain along x through each node row
            for (long k = lo[2]; k <= hi[2]; ++k)
                for (long j = lo[1]; j <= hi[1]; ++j) {
                    const double y = (j + 0.5) * dx;
                    const double z = dim == 3 ? (k + 0.5) * dx : 0.0;
                    const Aabb box{{0.0, y - eps_slab, z - eps_slab}, {dom.length, y + eps_slab, z + eps_slab}};
                    if (face_aabb_overlap(mesh, f, box)) {
                        ind[f] = 1;
                        return;
                    }
                }
            return;
        }
        for (int q = 1; q < vs.q; q += 2) {
            const Vec3 c = vs.dir(q);
            for (long k = lo[2]; k <= hi[2]; ++k)
                for (long j = lo[1]; j <= hi[1]; ++j)
                    for (long i = lo[0]; i <= hi[0]; ++i) {
                        const Vec3 v{(i + 0.5) * dx, (j + 0.5) * dx, dim == 3 ? (k + 0.5) * dx : 0.0};
                        const auto hit = ray_face_distance(v, c, mesh, f);
                        if (!hit || std::fabs(hit->d) * dx > dx * (1.0 + 1e-9)) continue;
                        if (point_in_face(mesh, f, hit->point, eps_slab)) {
                            ind[f] = 1;
                            return;
                        }
                    }
        }
    });
    return ind;
}

FilterMap compact_filtered_faces(const std::vector<std::uint8_t>& indicators) {
    FilterMap m;
    m.indicators = indicators;
    for (std::size_t f = 0; f < indicators.size(); ++f)
        if (indicators[f]) m.compact_map.push_back(static_cast<int>(f));
    return m;
}

std::vector<BinPair> compute_bin_pairs(const TriangleMesh& mesh, const FilterMap* filter, const Domain& dom, int level,
                                       int bin_density, int n_spec) {
    const int dim = dom.dim;
    const long B = static_cast<long>(bin_density) << level;
    const double w = dom.length / static_cast<double>(B);
    const double dx = dom.dx(level);
    const long n_lim = static_cast<long>(std::pow(2 + n_spec, dim));
    const std::size_t nf = filter ? filter->compact_map.size() : mesh.num_faces();

    // fixed slots of n_lim per face keep the output independent of scheduling
    std::vector<BinPair> slots(nf * n_lim, BinPair{-1, -1});
    std::vector<int> overflow(nf, 0);
    parallel_for(nf, [&](std::size_t i) {
        const int f = filter ? filter->compact_map[i] : static_cast<int>(i);
        const Aabb fb = face_aabb(mesh, f);
        if (outside_domain(fb, dom)) return;
        long lo[3] = {0, 0, 0}, hi[3] = {0, 0, 0};
        for (int d = 0; d < dim; ++d) {
            lo[d] = clampl(static_cast<long>(std::floor(fb.lo[d] / w)) - 1, 0, B - 1);
            hi[d] = clampl(static_cast<long>(std::floor(fb.hi[d] / w)) + 1, 0, B - 1);
        }
        long v = 0;
        for (long k = lo[2]; k <= hi[2]; ++k)
            for (long j = lo[1]; j <= hi[1]; ++j)
                for (long ii = lo[0]; ii <= hi[0]; ++ii) {
                    const long idx[3] = {ii, j, k};
                    Aabb box;
                    for (int d = 0; d < 3; ++d) {
                        if (d < dim) {
                            box.lo[d] = idx[d] * w - dx;
                            box.hi[d] = (idx[d] + 1) * w + dx;
                        } else {
                            box.lo[d] = -1.0;
                            box.hi[d] = 1.0;
                        }
                    }
                    if (!face_aabb_overlap(mesh, f, box)) continue;
                    if (v >= n_lim) {
                        overflow[i] = 1;
                        continue;
                    }
                    slots[i * n_lim + v++] = {ii + B * (j + B * k), f};
                }
    });
    for (std::size_t i = 0; i < nf; ++i)
        if (overflow[i])
            throw InternalError(fmt::format("face {} exceeds the bin cover limit {} on level {}",
                                            filter ? filter->compact_map[i] : static_cast<int>(i), n_lim, level));
    std::vector<BinPair> out;
    for (const auto& p : slots)
        if (p.first >= 0) out.push_back(p);
    return out;
}

BinLevel assemble_bins(const std::vector<BinPair>& pairs, long n_bins) {
    BinLevel b;
    std::vector<BinPair> sorted = pairs;
    std::stable_sort(sorted.begin(), sorted.end(), [](const BinPair& a, const BinPair& c) { return a.first < c.first; });
    b.counts.assign(n_bins, 0);
    b.offsets.assign(n_bins, -1);
    b.face_ids.resize(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const long bin = sorted[i].first;
        if (b.counts[bin] == 0) b.offsets[bin] = static_cast<int>(i);
        ++b.counts[bin];
        b.face_ids[i] = sorted[i].second;
    }
    return b;
}

BinLevel build_bin_level(const TriangleMesh& mesh, const Domain& dom, int level, RayMode mode, const BinParams& p) {
    const int B0 = root_bin_density(dom, p);
    FilterMap fm;
    if (p.filter) fm = compact_filtered_faces(compute_ray_indicators(mesh, dom, level, mode, p.eps_slab));
    const auto pairs = compute_bin_pairs(mesh, p.filter ? &fm : nullptr, dom, level, B0, p.n_spec);
    const long B = static_cast<long>(B0) << level;
    long n_bins = 1;
    for (int d = 0; d < dom.dim; ++d) n_bins *= B;
    BinLevel bl = assemble_bins(pairs, n_bins);
    bl.level = level;
    bl.dim = dom.dim;
    bl.density = static_cast<int>(B);
    bl.width = dom.length / static_cast<double>(B);
    return bl;
}

std::vector<BinLevel> build_bin_hierarchy(const TriangleMesh& mesh, const Domain& dom, int levels, RayMode mode,
                                          const BinParams& p) {
    std::vector<BinLevel> out;
    for (int L = 0; L < levels; ++L) out.push_back(build_bin_level(mesh, dom, L, mode, p));
    return out;
}

} // namespace fvx
