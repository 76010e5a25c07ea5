#include "fvx/forest.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fvx/errors.hpp"
#include "fvx/parallel.hpp"

namespace fvx {

namespace {

int root_id(const ForestGrid& g, int i, int j, int k) {
    const int nb = g.dom.blocks_per_axis();
    return i + nb * (j + nb * k);
}

void rebuild_id_sets(ForestGrid& g) {
    int max_level = 0;
    for (int b = 0; b < g.capacity; ++b)
        if (g.active[b]) max_level = std::max(max_level, g.level[b]);
    g.id_sets.assign(max_level + 1, {});
    g.gap_set.clear();
    for (int b = 0; b < g.capacity; ++b) {
        if (g.active[b])
            g.id_sets[g.level[b]].push_back(b);
        else
            g.gap_set.push_back(b);
    }
}

void update_block_flags(ForestGrid& g) {
    for (const auto& ids : g.id_sets)
        parallel_for(ids.size(), [&](std::size_t i) {
            const int b = ids[i];
            std::uint16_t m = g.block_mask[b] & ~(kBranch | kCommunicating | kOnDomainBoundary);
            if (!g.is_leaf(b)) m |= kBranch;
            bool comm = false, edge = false;
            for (int s = 0; s < g.nq; ++s) {
                if (s == g.center_slot()) continue;
                const int n = g.neighbor(b, s);
                if (n == kInvalid) edge = true;
                else if (missing_same_level(n)) comm = true;
                else if (g.is_leaf(b) != g.is_leaf(n)) comm = true;
            }
            if (comm) m |= kCommunicating;
            if (edge) m |= kOnDomainBoundary;
            g.block_mask[b] = m;
        });
}

} // namespace

Vec3 ForestGrid::cell_center(int b, int t) const {
    const double dx = dom.dx(level[b]);
    const Vec3i I = local_coords(t, dom.dim);
    Vec3 c = origin[b] + Vec3{(I[0] + 0.5) * dx, (I[1] + 0.5) * dx, (I[2] + 0.5) * dx};
    if (dom.dim == 2) c.z = 0.0;
    return c;
}

long ForestGrid::num_active() const {
    long n = 0;
    for (const auto& s : id_sets) n += static_cast<long>(s.size());
    return n;
}

ForestGrid init_forest(const Domain& dom, int capacity_multiplier, std::array<bool, 3> periodic) {
    if (dom.nx % 4 != 0 || dom.nx <= 0) throw InvalidSpecError("root resolution must be a positive multiple of 4");
    if (dom.dim != 2 && dom.dim != 3) throw InvalidSpecError("dimension must be 2 or 3");
    ForestGrid g;
    g.dom = dom;
    g.nq = dom.dim == 3 ? 27 : 9;
    g.mb = dom.dim == 3 ? 64 : 16;
    g.nchild = dom.dim == 3 ? 8 : 4;
    g.periodic = periodic;
    if (dom.dim == 2) g.periodic[2] = false;
    const int nb = dom.blocks_per_axis();
    const long nroot = dom.dim == 3 ? static_cast<long>(nb) * nb * nb : static_cast<long>(nb) * nb;
    const long cap = nroot * static_cast<long>(capacity_multiplier);
    if (capacity_multiplier < 1 || cap < nroot) throw CapacityError("capacity below the root block count");
    g.capacity = static_cast<int>(cap);

    g.origin.assign(cap, Vec3{});
    g.level.assign(cap, 0);
    g.ref_id.assign(cap, kKeep);
    g.block_mask.assign(cap, 0);
    g.parent.assign(cap, -1);
    g.first_child.assign(cap, -1);
    g.child_index.assign(cap, 0);
    g.active.assign(cap, 0);
    g.nbr.assign(cap * g.nq, kInvalid);
    g.nbr_child.assign(cap * g.nq, -1);
    g.cell_mask.assign(cap * g.mb, cell::Fluid);

    const double h = dom.block_length(0);
    const int nk = dom.dim == 3 ? nb : 1;
    for (int k = 0; k < nk; ++k)
        for (int j = 0; j < nb; ++j)
            for (int i = 0; i < nb; ++i) {
                const int b = root_id(g, i, j, k);
                g.origin[b] = {i * h, j * h, dom.dim == 3 ? k * h : 0.0};
                g.active[b] = 1;
            }
    rebuild_id_sets(g);
    rebuild_links(g);
    update_block_flags(g);
    return g;
}

void rebuild_links(ForestGrid& g) {
    const int nb = g.dom.blocks_per_axis();
    const int dim = g.dom.dim;
    for (int L = 0; L < g.num_levels(); ++L) {
        const auto& ids = g.id_sets[L];
        parallel_for(ids.size(), [&](std::size_t ii) {
            const int b = ids[ii];
            int* out = &g.nbr[static_cast<std::size_t>(b) * g.nq];
            if (L == 0) {
                const double h = g.dom.block_length(0);
                const int bi[3] = {static_cast<int>(std::lround(g.origin[b].x / h)),
                                   static_cast<int>(std::lround(g.origin[b].y / h)),
                                   dim == 3 ? static_cast<int>(std::lround(g.origin[b].z / h)) : 0};
                for (int s = 0; s < g.nq; ++s) {
                    const Vec3i o = g.slot_offset(s);
                    int n[3];
                    bool ok = true;
                    for (int d = 0; d < 3; ++d) {
                        n[d] = bi[d] + o[d];
                        if (d >= dim) continue;
                        if (n[d] < 0 || n[d] >= nb) {
                            if (g.periodic[d])
                                n[d] = (n[d] + nb) % nb;
                            else
                                ok = false;
                        }
                    }
                    out[s] = ok ? root_id(g, n[0], n[1], n[2]) : kInvalid;
                }
            } else {
                const int P = g.parent[b];
                const int ci = g.child_index[b];
                const int o[3] = {ci & 1, (ci >> 1) & 1, (ci >> 2) & 1};
                for (int s = 0; s < g.nq; ++s) {
                    const Vec3i off = g.slot_offset(s);
                    int pd[3], loc[3];
                    for (int d = 0; d < 3; ++d) {
                        const int pos = o[d] + off[d];
                        pd[d] = pos < 0 ? -1 : (pos > 1 ? 1 : 0);
                        loc[d] = pos - 2 * pd[d];
                    }
                    const int cidx = loc[0] + 2 * loc[1] + 4 * loc[2];
                    const int pn = g.neighbor(P, g.slot(pd[0], pd[1], pd[2]));
                    if (pn == kInvalid)
                        out[s] = kInvalid;
                    else if (pn < 0 || g.first_child[pn] < 0)
                        out[s] = kNoBlock;
                    else
                        out[s] = g.first_child[pn] + cidx;
                }
            }
            for (int s = 0; s < g.nq; ++s) {
                const int n = out[s];
                g.nbr_child[static_cast<std::size_t>(b) * g.nq + s] = n >= 0 ? g.first_child[n] : -1;
            }
        });
    }
}

void update_layer_masks(ForestGrid& g) {
    const int dim = g.dom.dim;
    for (int L = 0; L < g.num_levels(); ++L) {
        const auto& ids = g.id_sets[L];
        parallel_for(ids.size(), [&](std::size_t ii) {
            const int b = ids[ii];
            std::uint8_t* m = &g.cell_mask[static_cast<std::size_t>(b) * g.mb];
            for (int t = 0; t < g.mb; ++t) m[t] &= ~(cell::Ghost | cell::Interface);
            // fine side: two cells next to any missing same-level neighbor
            for (int s = 0; s < g.nq; ++s) {
                if (!missing_same_level(g.neighbor(b, s))) continue;
                const Vec3i o = g.slot_offset(s);
                for (int t = 0; t < g.mb; ++t) {
                    const Vec3i I = local_coords(t, dim);
                    bool in = true;
                    for (int d = 0; d < dim; ++d) {
                        if (o[d] < 0 && I[d] >= 2) in = false;
                        if (o[d] > 0 && I[d] < 2) in = false;
                    }
                    if (in) m[t] |= cell::Ghost;
                }
            }
        });
    }
    // coarse side: cells whose fine cells are all computed (not ghost)
    for (int L = 0; L + 1 < g.num_levels(); ++L) {
        const auto& ids = g.id_sets[L];
        parallel_for(ids.size(), [&](std::size_t ii) {
            const int b = ids[ii];
            if (g.is_leaf(b)) return;
            for (int t = 0; t < g.mb; ++t) {
                const Vec3i I = local_coords(t, dim);
                const int child = g.first_child[b] + (I[0] / 2) + 2 * (I[1] / 2) + 4 * (I[2] / 2);
                const Vec3i F{(2 * I[0]) % 4, (2 * I[1]) % 4, (2 * I[2]) % 4};
                if (!(g.mask(child, linear(F, 4)) & cell::Ghost)) g.mask(b, t) |= cell::Interface;
            }
        });
    }
}

AdaptStats adapt(ForestGrid& g) {
    AdaptStats st;
    const int nc = g.nchild;
    const int dim = g.dom.dim;

    // 1. participants
    std::vector<int> refine, coarsen;
    for (const auto& ids : g.id_sets)
        for (int b : ids) {
            if (g.ref_id[b] == kRefine && g.is_leaf(b)) {
                bool eligible = true;
                for (int s = 0; s < g.nq && eligible; ++s)
                    if (missing_same_level(g.neighbor(b, s))) eligible = false;
                if (eligible)
                    refine.push_back(b);
                else
                    ++st.dropped_refine;
            }
            if (!g.is_leaf(b)) {
                bool all = true;
                for (int c = 0; c < nc && all; ++c) {
                    const int ch = g.first_child[b] + c;
                    all = g.is_leaf(ch) && g.ref_id[ch] == kCoarsen;
                }
                if (all) coarsen.push_back(b);
            }
        }
    std::sort(refine.begin(), refine.end());
    std::vector<std::uint8_t> refining(g.capacity, 0);
    for (int b : refine) refining[b] = 1;

    // 3. revert coarsening that would leave a leaf next to blocks two levels finer
    std::vector<int> kept;
    for (int P : coarsen) {
        bool ok = true;
        for (int s = 0; s < g.nq && ok; ++s) {
            if (s == g.center_slot()) continue;
            const int n = g.neighbor(P, s);
            if (n < 0 || g.is_leaf(n)) continue;
            for (int c = 0; c < nc && ok; ++c) {
                const int ch = g.first_child[n] + c;
                if (!g.is_leaf(ch) || refining[ch]) ok = false;
            }
        }
        if (ok)
            kept.push_back(P);
        else
            ++st.reverted_coarsen;
    }
    coarsen.swap(kept);

    // 2. child ids from the gap set, in runs of nc contiguous ids
    std::vector<int> groups;
    {
        std::size_t i = 0;
        while (i < g.gap_set.size() && groups.size() < refine.size()) {
            std::size_t j = i;
            while (j + 1 < g.gap_set.size() && g.gap_set[j + 1] == g.gap_set[j] + 1) ++j;
            for (std::size_t start = i; start + nc <= j + 1 && groups.size() < refine.size(); start += nc)
                groups.push_back(g.gap_set[start]);
            i = j + 1;
        }
    }
    if (groups.size() < refine.size())
        throw CapacityError(fmt::format("gap set exhausted: {} refinements requested, {} id groups free (capacity {})",
                                        refine.size(), groups.size(), g.capacity));

    // 4. child metadata
    for (std::size_t r = 0; r < refine.size(); ++r) {
        const int P = refine[r];
        const int first = groups[r];
        const double h = g.dom.block_length(g.level[P] + 1);
        g.first_child[P] = first;
        for (int c = 0; c < nc; ++c) {
            const int b = first + c;
            g.origin[b] = g.origin[P] + Vec3{(c & 1) * h, ((c >> 1) & 1) * h, dim == 3 ? ((c >> 2) & 1) * h : 0.0};
            g.level[b] = g.level[P] + 1;
            g.parent[b] = P;
            g.child_index[b] = c;
            g.first_child[b] = -1;
            g.block_mask[b] = 0;
            g.ref_id[b] = kKeep;
            g.active[b] = 1;
            std::fill_n(&g.cell_mask[static_cast<std::size_t>(b) * g.mb], g.mb, cell::Fluid);
        }
    }
    st.refined = static_cast<int>(refine.size());

    // 5. retire coarsened children
    for (int P : coarsen) {
        for (int c = 0; c < nc; ++c) {
            const int b = g.first_child[P] + c;
            g.active[b] = 0;
            g.parent[b] = -1;
            g.ref_id[b] = kKeep;
        }
        g.first_child[P] = -1;
    }
    st.coarsened = static_cast<int>(coarsen.size());

    // 6. registration
    for (const auto& ids : g.id_sets)
        for (int b : ids) g.ref_id[b] = kKeep;
    rebuild_id_sets(g);
    while (!g.id_sets.empty() && g.id_sets.back().empty()) g.id_sets.pop_back();

    // 8. links and layer masks, 7. flags depend on the new links
    rebuild_links(g);
    update_block_flags(g);
    update_layer_masks(g);
    return st;
}

IndexMap index_maps(const Vec3i& I, const Vec3i& c) {
    IndexMap r;
    r.t = linear(I, 4);
    r.t_h = linear({I[0] + 1, I[1] + 1, I[2] + 1}, 6);
    r.violation = true;
    for (int d = 0; d < 3; ++d) {
        r.wrapped[d] = (4 + (I[d] + c[d]) % 4) % 4;
        r.violation = r.violation && (r.wrapped[d] != I[d] + c[d] || c[d] == 0);
    }
    return r;
}

std::optional<int> block_of_point(const ForestGrid& g, const Vec3& p, int level) {
    const int dim = g.dom.dim;
    const int nb = g.dom.blocks_per_axis();
    const double h0 = g.dom.block_length(0);
    int idx[3] = {0, 0, 0};
    for (int d = 0; d < dim; ++d) {
        if (p[d] < 0.0 || p[d] > g.dom.length) return std::nullopt;
        idx[d] = std::clamp(static_cast<int>(std::ceil(p[d] / h0)) - 1, 0, nb - 1);
    }
    int b = root_id(g, idx[0], idx[1], idx[2]);
    while (g.level[b] != level && !g.is_leaf(b)) {
        const double half = g.dom.block_length(g.level[b] + 1);
        int c = 0;
        for (int d = 0; d < dim; ++d)
            if (p[d] > g.origin[b][d] + half) c |= 1 << d;
        b = g.first_child[b] + c;
    }
    if (level >= 0 && g.level[b] != level) return std::nullopt;
    return b;
}

CellRef neighbor_cell(const ForestGrid& g, int b, int t, const Vec3i& c) {
    const Vec3i I = local_coords(t, g.dom.dim);
    Vec3i J{}, o{};
    for (int d = 0; d < 3; ++d) {
        const int v = I[d] + c[d];
        o[d] = v < 0 ? -1 : (v > 3 ? 1 : 0);
        J[d] = v - 4 * o[d];
    }
    const int n = g.neighbor(b, g.slot(o[0], o[1], o[2]));
    if (n >= 0) return {n, linear(J, 4), false};
    if (n == kInvalid || g.parent[b] < 0) return {};
    // position in units of fine cells relative to the parent origin
    const int ci = g.child_index[b];
    Vec3i pd{}, K{};
    for (int d = 0; d < 3; ++d) {
        const int pos = 4 * ((ci >> d) & 1) + I[d] + c[d];
        pd[d] = pos < 0 ? -1 : (pos > 7 ? 1 : 0);
        K[d] = (pos - 8 * pd[d]) / 2;
    }
    const int P = g.neighbor(g.parent[b], g.slot(pd[0], pd[1], pd[2]));
    if (P < 0) return {};
    return {P, linear(K, 4), true};
}

long balance_violations(const ForestGrid& g) {
    const int dim = g.dom.dim;
    std::vector<long> per_level(g.num_levels(), 0);
    for (int L = 0; L < g.num_levels(); ++L) {
        const auto& ids = g.id_sets[L];
        std::vector<long> bad(ids.size(), 0);
        parallel_for(ids.size(), [&](std::size_t ii) {
            const int b = ids[ii];
            if (!g.is_leaf(b)) return;
            const double h = g.dom.block_length(L);
            for (int s = 0; s < g.nq; ++s) {
                if (s == g.center_slot()) continue;
                const Vec3i o = g.slot_offset(s);
                const int n0 = o[0] == 0 ? 4 : 1, n1 = o[1] == 0 ? 4 : 1, n2 = (dim == 3 && o[2] == 0) ? 4 : 1;
                for (int a2 = 0; a2 < n2; ++a2)
                    for (int a1 = 0; a1 < n1; ++a1)
                        for (int a0 = 0; a0 < n0; ++a0) {
                            const int a[3] = {a0, a1, a2};
                            Vec3 p;
                            bool skip = false;
                            for (int d = 0; d < dim; ++d) {
                                double x;
                                if (o[d] == 0)
                                    x = g.origin[b][d] + (a[d] + 0.5) * h / 4;
                                else if (o[d] > 0)
                                    x = g.origin[b][d] + h + h / 8;
                                else
                                    x = g.origin[b][d] - h / 8;
                                if (x < 0.0 || x > g.dom.length) {
                                    if (!g.periodic[d]) skip = true;
                                    x = x < 0.0 ? x + g.dom.length : x - g.dom.length;
                                }
                                p[d] = x;
                            }
                            if (skip) continue;
                            const auto leaf = block_of_point(g, p);
                            if (leaf && std::abs(g.level[*leaf] - L) > 1) ++bad[ii];
                        }
            }
        });
        for (long v : bad) per_level[L] += v;
    }
    long total = 0;
    for (long v : per_level) total += v;
    return total;
}

} // namespace fvx
