#include "fvx/voxelizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "fvx/errors.hpp"
#include "fvx/lattice.hpp"
#include "fvx/parallel.hpp"

namespace fvx {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

const std::vector<int>& level_ids(const ForestGrid& g, int level) {
    static const std::vector<int> none;
    return level < g.num_levels() ? g.id_sets[level] : none;
}

bool has_missing_neighbor(const ForestGrid& g, int b) {
    for (int s = 0; s < g.nq; ++s)
        if (missing_same_level(g.neighbor(b, s))) return true;
    return false;
}

// Start of an x-chain: the upstream neighbor is absent or reached by periodic wrap.
bool chain_start(const ForestGrid& g, int b, int dir) {
    const int up = g.neighbor(b, g.slot(-dir, 0, 0));
    if (up < 0) return true;
    return (g.origin[up].x - g.origin[b].x) * dir > 0;
}

} // namespace

void partial_surface_voxelize(ForestGrid& g, int level, const BinLevel& bins, const TriangleMesh& mesh,
                              double eps_slab) {
    const auto& ids = level_ids(g, level);
    const Vec3 ex{1.0, 0.0, 0.0};
    const int mb = g.mb;
    parallel_for(ids.size(), [&](std::size_t ii) {
        const int b = ids[ii];
        std::uint8_t types[64];
        bool any = false;
        for (int t = 0; t < mb; ++t) {
            types[t] = static_cast<std::uint8_t>(cell::type(g.mask(b, t)));
            const Vec3 v = g.cell_center(b, t);
            double best = std::numeric_limits<double>::infinity(), best_d = 0.0;
            int best_f = -1;
            for (int f : bins.faces(bins.bin_index(v))) {
                const auto hit = ray_face_distance(v, ex, mesh, f);
                if (!hit || !(std::fabs(hit->d) < best)) continue;
                if (!point_in_face(mesh, f, hit->point, eps_slab)) continue;
                best = std::fabs(hit->d);
                best_d = hit->d;
                best_f = f;
            }
            if (best_f < 0) continue;
            any = true;
            types[t] = mesh.normals[best_f].x * best_d > 0.0 ? cell::Solid : cell::Guard;
        }
        if (!any) return;
        std::uint8_t next[64];
        for (int sweep = 0; sweep < 3; ++sweep) {
            for (int t = 0; t < mb; ++t) {
                const int i = t & 3;
                const int left = i > 0 ? types[t - 1] : -1;
                const int right = i < 3 ? types[t + 1] : -1;
                next[t] = types[t];
                if (types[t] == cell::Fluid && (left == cell::Guard || right == cell::Guard))
                    next[t] = cell::Guard;
                else if (types[t] != cell::Guard && (left == cell::Solid || right == cell::Solid))
                    next[t] = cell::Solid;
            }
            std::copy(next, next + mb, types);
        }
        for (int t = 0; t < mb; ++t) g.mask(b, t) = cell::with_type(g.mask(b, t), types[t]);
    });
}

void propagate_external(ForestGrid& g, int level, int dir) {
    if (level == 0 && dir < 0) return;
    const auto& ids = level_ids(g, level);
    std::vector<int> starts;
    for (int b : ids)
        if (chain_start(g, b, dir)) starts.push_back(b);
    const int nrow = g.dom.dim == 3 ? 16 : 4;
    const int first_i = dir > 0 ? 0 : 3;
    parallel_for(starts.size(), [&](std::size_t si) {
        const int b0 = starts[si];
        const int code = g.neighbor(b0, g.slot(-dir, 0, 0));
        bool status[16];
        for (int r = 0; r < nrow; ++r) {
            status[r] = false;
            if (code == kSolidNbr) {
                status[r] = true;
            } else if (code == kNoBlock) {
                const CellRef c = neighbor_cell(g, b0, first_i + 4 * r, {-dir, 0, 0});
                status[r] = c.valid() && cell::type(g.mask(c.block, c.t)) == cell::Solid;
            }
        }
        int b = b0;
        while (true) {
            for (int r = 0; r < nrow; ++r)
                for (int k = 0; k < 4; ++k) {
                    const int t = (dir > 0 ? k : 3 - k) + 4 * r;
                    std::uint8_t& m = g.mask(b, t);
                    if (cell::type(m) == cell::Fluid && status[r]) m = cell::with_type(m, cell::Solid);
                    status[r] = cell::type(m) == cell::Solid;
                }
            const int n = g.neighbor(b, g.slot(dir, 0, 0));
            if (n < 0 || n == b0 || (g.origin[n].x - g.origin[b].x) * dir < 0) break;
            b = n;
        }
    });
}

void finalize_masks(ForestGrid& g, int level) {
    const auto& ids = level_ids(g, level);
    parallel_for(ids.size(), [&](std::size_t ii) {
        const int b = ids[ii];
        bool solid = false;
        for (int t = 0; t < g.mb; ++t) {
            std::uint8_t& m = g.mask(b, t);
            if (cell::type(m) == cell::Guard) m = cell::with_type(m, cell::Fluid);
            solid = solid || cell::type(m) == cell::Solid;
        }
        if (solid)
            g.block_mask[b] |= kSolidBlock;
        else
            g.block_mask[b] &= ~kSolidBlock;
    });
}

int near_wall_layers(const Domain& dom, int level, double d_spec) {
    const double dxb = dom.block_length(level);
    return 1 + static_cast<int>(std::floor(std::ldexp(1.0, -level) * d_spec / (std::sqrt(2.0) * dxb)));
}

void mark_near_wall_refinement(ForestGrid& g, int level, double d_spec) {
    const auto& ids = level_ids(g, level);
    const std::size_t n = ids.size();
    auto solid = [&](int b) { return (g.block_mask[b] & kSolidBlock) != 0; };
    std::vector<std::uint8_t> eligible(n), mark(n, 0), next;
    std::vector<int> local(g.capacity, -1);
    for (std::size_t i = 0; i < n; ++i) local[ids[i]] = static_cast<int>(i);

    parallel_for(n, [&](std::size_t i) {
        const int b = ids[i];
        g.block_mask[b] &= ~(kSolidBoundary | kSolidAdjacent);
        eligible[i] = g.is_leaf(b) && !has_missing_neighbor(g, b);
    });
    // (i) solid blocks touching fluid
    parallel_for(n, [&](std::size_t i) {
        const int b = ids[i];
        if (!solid(b)) return;
        bool boundary = false;
        for (int t = 0; t < g.mb && !boundary; ++t) boundary = cell::type(g.mask(b, t)) != cell::Solid;
        for (int s = 0; s < g.nq && !boundary; ++s) {
            const int nb = g.neighbor(b, s);
            boundary = nb >= 0 && !solid(nb);
        }
        if (!boundary) return;
        g.block_mask[b] |= kSolidBoundary;
        if (eligible[i]) mark[i] = 1;
    });
    // (ii) their neighbors
    next = mark;
    parallel_for(n, [&](std::size_t i) {
        const int b = ids[i];
        bool touch = false;
        for (int s = 0; s < g.nq && !touch; ++s) {
            const int nb = g.neighbor(b, s);
            touch = nb >= 0 && nb != b && (g.block_mask[nb] & kSolidBoundary);
        }
        if (!touch) return;
        if (eligible[i]) next[i] = 1;
        if (!solid(b)) g.block_mask[b] |= kSolidAdjacent;
    });
    mark.swap(next);
    // (iii) layers into the fluid, and one more into the solid on the first pass
    const int layers = near_wall_layers(g.dom, level, d_spec);
    for (int it = 0; it < layers; ++it) {
        next = mark;
        parallel_for(n, [&](std::size_t i) {
            const int b = ids[i];
            if (mark[i] || !eligible[i] || (solid(b) && it > 0)) return;
            for (int s = 0; s < g.nq; ++s) {
                const int nb = g.neighbor(b, s);
                if (nb >= 0 && local[nb] >= 0 && mark[local[nb]]) {
                    next[i] = 1;
                    return;
                }
            }
        });
        mark.swap(next);
    }
    for (std::size_t i = 0; i < n; ++i)
        if (mark[i]) g.ref_id[ids[i]] = kRefine;
}

void assign_solid_neighbor_codes(ForestGrid& g, int level) {
    const auto& ids = level_ids(g, level);
    if (level == 0) return;
    parallel_for(ids.size(), [&](std::size_t ii) {
        const int b = ids[ii];
        const int ci = g.child_index[b];
        for (int s = 0; s < g.nq; ++s) {
            int& code = g.nbr[static_cast<std::size_t>(b) * g.nq + s];
            if (!missing_same_level(code)) continue;
            const Vec3i o = g.slot_offset(s);
            int pd[3];
            for (int d = 0; d < 3; ++d) {
                const int pos = ((ci >> d) & 1) + o[d];
                pd[d] = pos < 0 ? -1 : (pos > 1 ? 1 : 0);
            }
            const int P = g.neighbor(g.parent[b], g.slot(pd[0], pd[1], pd[2]));
            bool all_solid = P >= 0;
            for (int t = 0; t < g.mb && all_solid; ++t) all_solid = cell::type(g.mask(P, t)) == cell::Solid;
            code = all_solid ? kSolidNbr : kNoBlock;
        }
    });
}

std::vector<int> identify_boundary_cells(ForestGrid& g) {
    const VelocitySet& vs = VelocitySet::get(g.dom.dim);
    std::vector<int> counts(g.capacity, 0);
    std::vector<std::uint8_t> cand(static_cast<std::size_t>(g.capacity) * g.mb, 0);
    for (const auto& ids : g.id_sets)
        parallel_for(ids.size(), [&](std::size_t ii) {
            const int b = ids[ii];
            int cnt = 0;
            for (int t = 0; t < g.mb; ++t) {
                if (!cell::is_fluid_like(g.mask(b, t))) continue;
                for (int q = 1; q < vs.q; ++q) {
                    const CellRef r = neighbor_cell(g, b, t, vs.c[q]);
                    if (r.valid() && cell::type(g.mask(r.block, r.t)) == cell::Solid) {
                        cand[static_cast<std::size_t>(b) * g.mb + t] = 1;
                        ++cnt;
                        break;
                    }
                }
            }
            counts[b] = cnt;
        });
    for (const auto& ids : g.id_sets)
        parallel_for(ids.size(), [&](std::size_t ii) {
            const int b = ids[ii];
            for (int t = 0; t < g.mb; ++t) {
                std::uint8_t& m = g.mask(b, t);
                if (cand[static_cast<std::size_t>(b) * g.mb + t])
                    m = cell::with_type(m, cell::Boundary);
                else if (cell::type(m) == cell::Boundary)
                    m = cell::with_type(m, cell::Fluid);
            }
        });
    return counts;
}

LinkTable build_boundary_tables(const ForestGrid& g, const std::vector<int>& counts) {
    LinkTable tab;
    tab.q = g.dom.dim == 3 ? 27 : 9;
    tab.mb = g.mb;
    tab.contraction_map.assign(g.capacity, -1);
    for (int b = 0; b < g.capacity; ++b)
        if (b < static_cast<int>(counts.size()) && counts[b] > 0) tab.contraction_map[b] = tab.num_blocks++;
    const std::size_t size = static_cast<std::size_t>(tab.num_blocks) * tab.mb * tab.q;
    tab.lengths.assign(size, -1.0);
    tab.bc_ids.assign(size, 0);
    return tab;
}

void compute_link_lengths(const ForestGrid& g, const std::vector<BinLevel>& bins, const TriangleMesh& mesh,
                          double eps_slab, LinkTable& table) {
    const VelocitySet& vs = VelocitySet::get(g.dom.dim);
    std::vector<int> blocks;
    for (int b = 0; b < g.capacity; ++b)
        if (table.contraction_map[b] >= 0) blocks.push_back(b);
    parallel_for(blocks.size(), [&](std::size_t ii) {
        const int b = blocks[ii];
        const int L = g.level[b];
        if (L >= static_cast<int>(bins.size())) throw InternalError(fmt::format("no bins for level {}", L));
        const double dx = g.dom.dx(L);
        const int slot = table.contraction_map[b];
        for (int t = 0; t < g.mb; ++t) {
            if (cell::type(g.mask(b, t)) != cell::Boundary) continue;
            const Vec3 v = g.cell_center(b, t);
            double* out = &table.lengths[table.index(slot, t, 0)];
            // only links ending in a solid cell are wall links
            bool wall[27] = {};
            for (int q = 1; q < vs.q; ++q) {
                const CellRef r = neighbor_cell(g, b, t, vs.c[q]);
                wall[q] = r.valid() && cell::type(g.mask(r.block, r.t)) == cell::Solid;
            }
            for (int f : bins[L].faces(bins[L].bin_index(v)))
                for (int q = 1; q < vs.q; ++q) {
                    if (!wall[q]) continue;
                    const auto hit = ray_face_distance(v, vs.dir(q) * dx, mesh, f);
                    if (!hit || !(hit->d > 0.0) || hit->d > 1.0) continue;
                    if (out[q] >= 0.0 && out[q] <= hit->d) continue;
                    if (!point_in_face(mesh, f, hit->point, eps_slab)) continue;
                    out[q] = hit->d;
                }
        }
    });
}

EmbedResult embed_geometry(ForestGrid& g, const TriangleMesh& mesh, const VoxelConfig& cfg, const LevelHook& hook) {
    if (cfg.l_max < 1) throw InvalidSpecError("L_max must be at least 1");
    if (cfg.d_spec < 0.0) throw InvalidSpecError("d_spec must be non-negative");
    if (mesh.dim != g.dom.dim) throw InvalidSpecError("mesh and domain dimensions differ");
    EmbedResult res;
    const Domain& dom = g.dom;
    auto t0 = Clock::now();
    const int density = std::max(root_bin_density(dom, cfg.bins), dom.blocks_per_axis());
    res.mesh = cfg.refine_mesh ? refine_faces(mesh, spec_length(dom.length, cfg.bins.n_spec, cfg.l_max, density)) : mesh;
    const double eps = cfg.bins.eps_slab;
    res.times.binning += seconds_since(t0);

    for (int L = 0; L < cfg.l_max && L < g.num_levels(); ++L) {
        t0 = Clock::now();
        const BinLevel bins = build_bin_level(res.mesh, dom, L, RayMode::AxisOnly, cfg.bins);
        res.times.binning += seconds_since(t0);

        t0 = Clock::now();
        partial_surface_voxelize(g, L, bins, res.mesh, eps);
        propagate_external(g, L, +1);
        propagate_external(g, L, -1);
        finalize_masks(g, L);
        res.times.voxelize += seconds_since(t0);

        if (L + 1 < cfg.l_max) {
            t0 = Clock::now();
            mark_near_wall_refinement(g, L, cfg.d_spec);
            try {
                adapt(g);
            } catch (const CapacityError& e) {
                throw CapacityError(fmt::format("refining level {}: {}", L, e.what()));
            }
            for (int l = 1; l < g.num_levels(); ++l) assign_solid_neighbor_codes(g, l);
            res.times.refine += seconds_since(t0);
        }
        if (hook) hook(g, L);
    }

    t0 = Clock::now();
    const auto counts = identify_boundary_cells(g);
    res.links = build_boundary_tables(g, counts);
    res.times.voxelize += seconds_since(t0);

    t0 = Clock::now();
    std::vector<BinLevel> all_dir;
    for (int L = 0; L < g.num_levels(); ++L) all_dir.push_back(build_bin_level(res.mesh, dom, L, RayMode::AllDirections, cfg.bins));
    res.times.binning += seconds_since(t0);

    t0 = Clock::now();
    compute_link_lengths(g, all_dir, res.mesh, eps, res.links);
    res.times.voxelize += seconds_since(t0);
    return res;
}

} // namespace fvx
