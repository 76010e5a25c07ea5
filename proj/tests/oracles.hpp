#pragma once
// Sequential reference implementations used by unit and acceptance tests.
// None of them touch bins, filtering or the library's intersection kernels.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <vector>

#include "fvx/forest.hpp"
#include "fvx/geometry.hpp"
#include "fvx/lattice.hpp"

namespace oracle {

using fvx::Vec3;

struct Crossing {
    double x;
    double nx_abs; // |n_x| of the unit normal, for plane distance
};

struct Row {
    std::vector<Crossing> hits;
    bool ambiguous = false;
};

// Every face crossed by the line {(s, y, z)}.
inline Row row_crossings(const fvx::TriangleMesh& m, const std::vector<fvx::Aabb>& boxes, double y, double z) {
    Row row;
    for (std::size_t f = 0; f < m.num_faces(); ++f) {
        const fvx::Aabb& b = boxes[f];
        if (y < b.lo.y || y > b.hi.y) continue;
        if (m.dim == 3 && (z < b.lo.z || z > b.hi.z)) continue;
        const Vec3 a = m.vertex(f, 0), c = m.vertex(f, 1);
        if (m.dim == 2) {
            const double sa = a.y - y, sc = c.y - y;
            if (sa == 0.0 || sc == 0.0) {
                if (a.y != c.y) row.ambiguous = true;
                continue;
            }
            if ((sa < 0) == (sc < 0)) continue;
            row.hits.push_back({a.x + (y - a.y) * (c.x - a.x) / (c.y - a.y), std::fabs(m.normals[f].x)});
            continue;
        }
        const Vec3 d = m.vertex(f, 2);
        auto edge = [&](const Vec3& p, const Vec3& q) { return (q.y - p.y) * (z - p.z) - (q.z - p.z) * (y - p.y); };
        const double e0 = edge(a, c), e1 = edge(c, d), e2 = edge(d, a);
        const double scale = std::max({std::fabs(c.y - a.y) + std::fabs(c.z - a.z), std::fabs(d.y - c.y) + std::fabs(d.z - c.z),
                                       std::fabs(a.y - d.y) + std::fabs(a.z - d.z)});
        const double tol = 1e-13 * scale;
        const bool pos = e0 > tol && e1 > tol && e2 > tol;
        const bool neg = e0 < -tol && e1 < -tol && e2 < -tol;
        if (!pos && !neg) {
            const bool maybe = (e0 >= -tol && e1 >= -tol && e2 >= -tol) || (e0 <= tol && e1 <= tol && e2 <= tol);
            if (maybe) row.ambiguous = true;
            continue;
        }
        const Vec3 n = fvx::cross(c - a, d - a);
        if (n.x == 0.0) continue;
        row.hits.push_back({a.x - (n.y * (y - a.y) + n.z * (z - a.z)) / n.x, std::fabs(m.normals[f].x)});
    }
    return row;
}

// Parity of crossings with x' > x. Returns nullopt when the point is within eps of a crossed plane
// or the row grazes an edge.
inline std::optional<bool> parity_inside(const Row& row, double x, double eps) {
    if (row.ambiguous) return std::nullopt;
    int n = 0;
    for (const auto& c : row.hits) {
        if (std::fabs(c.x - x) * c.nx_abs < eps) return std::nullopt;
        n += c.x > x;
    }
    return n % 2 == 1;
}

// Caches rows by (y, z).
struct ParityOracle {
    const fvx::TriangleMesh& mesh;
    double eps;
    std::vector<fvx::Aabb> boxes;
    std::map<std::pair<double, double>, Row> rows;

    ParityOracle(const fvx::TriangleMesh& m, double e) : mesh(m), eps(e) {
        for (std::size_t f = 0; f < m.num_faces(); ++f) boxes.push_back(fvx::face_aabb(m, f));
    }
    std::optional<bool> inside(const Vec3& v) {
        auto key = std::make_pair(v.y, mesh.dim == 3 ? v.z : 0.0);
        auto it = rows.find(key);
        if (it == rows.end()) it = rows.emplace(key, row_crossings(mesh, boxes, key.first, key.second)).first;
        return parity_inside(it->second, v.x, eps);
    }
};

// Smallest s in (0, 1] with v + s*dir on the sphere, or -1.
inline double sphere_link(const Vec3& v, const Vec3& dir, const Vec3& center, double radius) {
    const Vec3 o = v - center;
    const double a = fvx::dot(dir, dir), b = 2 * fvx::dot(o, dir), c = fvx::dot(o, o) - radius * radius;
    const double disc = b * b - 4 * a * c;
    if (disc < 0) return -1.0;
    const double sq = std::sqrt(disc);
    // numerically stable pair of roots
    const double qq = -0.5 * (b + std::copysign(sq, b));
    double r1 = qq / a, r2 = c / qq;
    if (r1 > r2) std::swap(r1, r2);
    for (double r : {r1, r2})
        if (r > 0 && r <= 1) return r;
    return -1.0;
}

// Smallest s in (0, 1] where v + s*dir meets a face, by brute force over all faces, or -1.
inline double faceted_link(const fvx::TriangleMesh& m, const Vec3& v, const Vec3& dir) {
    double best = -1.0;
    for (std::size_t f = 0; f < m.num_faces(); ++f) {
        const Vec3 a = m.vertex(f, 0), b = m.vertex(f, 1);
        double s;
        if (m.dim == 2) {
            // solve v + s*dir = a + u*(b-a)
            const Vec3 e = b - a, w = a - v;
            const double den = dir.x * (-e.y) - dir.y * (-e.x);
            if (den == 0.0) continue;
            s = (w.x * (-e.y) - w.y * (-e.x)) / den;
            const double u = (dir.x * w.y - dir.y * w.x) / den;
            if (u < -1e-12 || u > 1 + 1e-12) continue;
        } else {
            const Vec3 c = m.vertex(f, 2);
            const Vec3 e1 = b - a, e2 = c - a;
            const Vec3 p = fvx::cross(dir, e2);
            const double det = fvx::dot(e1, p);
            if (det == 0.0) continue;
            const Vec3 tv = v - a;
            const double u = fvx::dot(tv, p) / det;
            const Vec3 qv = fvx::cross(tv, e1);
            const double w = fvx::dot(dir, qv) / det;
            if (u < -1e-12 || w < -1e-12 || u + w > 1 + 1e-12) continue;
            s = fvx::dot(e2, qv) / det;
        }
        if (s > 0 && s <= 1 && (best < 0 || s < best)) best = s;
    }
    return best;
}

// Cell of the same level containing p, else the covering leaf cell; by coordinates only.
inline std::optional<std::pair<int, int>> cell_at(const fvx::ForestGrid& g, const Vec3& p, int level) {
    auto b = fvx::block_of_point(g, p, level);
    if (!b) b = fvx::block_of_point(g, p);
    if (!b) return std::nullopt;
    const double dx = g.dom.dx(g.level[*b]);
    fvx::Vec3i I{0, 0, 0};
    for (int d = 0; d < g.dom.dim; ++d)
        I[d] = std::clamp(static_cast<int>(std::floor((p[d] - g.origin[*b][d]) / dx)), 0, 3);
    return std::make_pair(*b, fvx::linear(I, 4));
}

inline bool in_domain(const fvx::ForestGrid& g, const Vec3& p) {
    for (int d = 0; d < g.dom.dim; ++d)
        if (p[d] < 0 || p[d] > g.dom.length) return false;
    return true;
}

// Fluid cells with a solid neighbor in any lattice direction.
inline std::vector<std::uint8_t> boundary_scan(const fvx::ForestGrid& g) {
    const auto& vs = fvx::VelocitySet::get(g.dom.dim);
    std::vector<std::uint8_t> out(g.cell_mask.size(), 0);
    for (int L = 0; L < g.num_levels(); ++L)
        for (int b : g.id_sets[L])
            for (int t = 0; t < g.mb; ++t) {
                if (fvx::cell::type(g.mask(b, t)) == fvx::cell::Solid) continue;
                const Vec3 v = g.cell_center(b, t);
                const double dx = g.dom.dx(L);
                for (int q = 1; q < vs.q; ++q) {
                    const Vec3 p = v + vs.dir(q) * dx;
                    if (!in_domain(g, p)) continue;
                    const auto c = cell_at(g, p, L);
                    if (c && fvx::cell::type(g.mask(c->first, c->second)) == fvx::cell::Solid) {
                        out[static_cast<std::size_t>(b) * g.mb + t] = 1;
                        break;
                    }
                }
            }
    return out;
}

// Blocks of one level reachable from solid-boundary blocks: fluid blocks up to fluid_hops,
// solid blocks up to two hops. Only blocks flagged eligible take part beyond the sources.
inline std::vector<std::uint8_t> near_wall_bfs(const fvx::ForestGrid& g, int level, int fluid_hops) {
    const auto& ids = g.id_sets[level];
    std::vector<int> dist(g.capacity, -1);
    std::vector<std::uint8_t> marked(g.capacity, 0);
    auto eligible = [&](int b) {
        if (!g.is_leaf(b)) return false;
        for (int s = 0; s < g.nq; ++s)
            if (fvx::missing_same_level(g.neighbor(b, s))) return false;
        return true;
    };
    auto solid = [&](int b) { return (g.block_mask[b] & fvx::kSolidBlock) != 0; };
    std::queue<int> q;
    for (int b : ids)
        if (g.block_mask[b] & fvx::kSolidBoundary) {
            dist[b] = 0;
            if (eligible(b)) marked[b] = 1;
        }
    // first hop from every solid-boundary block, later hops only from marked blocks
    for (int b : ids)
        if (dist[b] == 0) q.push(b);
    while (!q.empty()) {
        const int b = q.front();
        q.pop();
        if (dist[b] > 0 && !marked[b]) continue;
        for (int s = 0; s < g.nq; ++s) {
            const int n = g.neighbor(b, s);
            if (n < 0 || dist[n] >= 0 || !eligible(n)) continue;
            const int d = dist[b] + 1;
            if (solid(n) ? d > 2 : d > fluid_hops) continue;
            dist[n] = d;
            marked[n] = 1;
            q.push(n);
        }
    }
    return marked;
}

} // namespace oracle
