#include "fvx/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "fvx/errors.hpp"

namespace fvx {

namespace {

Vec3 face_normal(int dim, const Vec3& a, const Vec3& b, const Vec3& c) {
    Vec3 n;
    if (dim == 2) {
        const Vec3 e = b - a;
        n = {e.y, -e.x, 0.0};
    } else {
        n = cross(b - a, c - a);
    }
    const double len = norm(n);
    return len > 0.0 ? n / len : Vec3{};
}

// Error-free product and sum, used to evaluate short dot products as if in twice the precision.
inline void two_prod(double a, double b, double& p, double& e) {
    p = a * b;
    e = std::fma(a, b, -p);
}
inline void two_sum(double a, double b, double& s, double& e) {
    s = a + b;
    const double bb = s - a;
    e = (a - (s - bb)) + (b - bb);
}

template <std::size_t N>
double dot2(const std::array<double, N>& a, const std::array<double, N>& b) {
    double s = 0.0, c = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        double p, ep, es;
        two_prod(a[i], b[i], p, ep);
        two_sum(s, p, s, es);
        c += ep + es;
    }
    return s + c;
}

bool axis_gap(const double e0, const double e1, const double t[3][2], const double rm[2], const double rM[2]) {
    double tmin = t[0][0] * e0 + t[0][1] * e1, tmax = tmin;
    for (int k = 1; k < 3; ++k) {
        const double v = t[k][0] * e0 + t[k][1] * e1;
        tmin = std::min(tmin, v);
        tmax = std::max(tmax, v);
    }
    const double c[4] = {rm[0] * e0 + rm[1] * e1, rM[0] * e0 + rm[1] * e1, rm[0] * e0 + rM[1] * e1,
                         rM[0] * e0 + rM[1] * e1};
    const double rmin = std::min(std::min(c[0], c[1]), std::min(c[2], c[3]));
    const double rmax = std::max(std::max(c[0], c[1]), std::max(c[2], c[3]));
    return tmax < rmin || rmax < tmin;
}

// Five candidate separating axes in one coordinate plane (i, j).
bool projected_gap(const Vec3& v1, const Vec3& v2, const Vec3& v3, const Aabb& box, int i, int j) {
    const double t[3][2] = {{v1[i], v1[j]}, {v2[i], v2[j]}, {v3[i], v3[j]}};
    const double rm[2] = {box.lo[i], box.lo[j]};
    const double rM[2] = {box.hi[i], box.hi[j]};
    if (axis_gap(1.0, 0.0, t, rm, rM)) return true;
    if (axis_gap(0.0, 1.0, t, rm, rM)) return true;
    if (axis_gap(t[1][1] - t[0][1], t[0][0] - t[1][0], t, rm, rM)) return true;
    if (axis_gap(t[2][1] - t[1][1], t[1][0] - t[2][0], t, rm, rM)) return true;
    if (axis_gap(t[0][1] - t[2][1], t[2][0] - t[0][0], t, rm, rM)) return true;
    return false;
}

bool plane_cuts_box(const Vec3& v1, const Vec3& v2, const Vec3& v3, const Aabb& box) {
    const Vec3 n = cross(v2 - v1, v3 - v1);
    const Vec3 ext = box.hi - box.lo;
    Vec3 c;
    for (int d = 0; d < 3; ++d) c[d] = n[d] > 0.0 ? ext[d] : 0.0;
    const double d0 = dot(n, box.lo);
    const double d1 = dot(n, c - v1);
    const double d2 = dot(n, (ext - c) - v1);
    return (d0 + d1) * (d0 + d2) <= 0.0;
}

} // namespace

void TriangleMesh::sync_coords() {
    const std::size_t n = faces.size();
    coords_aos.assign(9 * n, 0.0);
    coords_soa.assign(9 * n, 0.0);
    normals.assign(n, Vec3{});
    for (std::size_t f = 0; f < n; ++f) {
        const auto& fi = faces[f];
        const Vec3 a = vertices[fi[0]];
        const Vec3 b = vertices[fi[1]];
        const Vec3 c = dim == 2 ? b : vertices[fi[2]];
        const Vec3 v[3] = {a, b, c};
        for (int k = 0; k < 3; ++k)
            for (int d = 0; d < 3; ++d) {
                coords_aos[9 * f + 3 * k + d] = v[k][d];
                coords_soa[(3 * k + d) * n + f] = v[k][d];
            }
        normals[f] = face_normal(dim, a, b, c);
    }
}

TriangleMesh make_mesh(int dim, std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces) {
    TriangleMesh m;
    m.dim = dim;
    m.vertices = std::move(vertices);
    m.faces = std::move(faces);
    const int nv = static_cast<int>(m.vertices.size());
    for (auto& f : m.faces) {
        if (dim == 2) f[2] = -1;
        for (int k = 0; k < dim; ++k)
            if (f[k] < 0 || f[k] >= nv) throw InvalidSpecError("face index out of range");
    }
    m.sync_coords();
    return m;
}

Aabb face_aabb(const TriangleMesh& mesh, std::size_t f) {
    const Vec3 a = mesh.vertex(f, 0), b = mesh.vertex(f, 1), c = mesh.vertex(f, 2);
    return {min(min(a, b), c), max(max(a, b), c)};
}

Aabb mesh_aabb(const TriangleMesh& mesh) {
    Aabb box{mesh.vertices.at(0), mesh.vertices.at(0)};
    for (const auto& v : mesh.vertices) {
        box.lo = min(box.lo, v);
        box.hi = max(box.hi, v);
    }
    return box;
}

double surface_measure(const TriangleMesh& mesh) {
    double s = 0.0;
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        const Vec3 a = mesh.vertex(f, 0), b = mesh.vertex(f, 1), c = mesh.vertex(f, 2);
        s += mesh.dim == 2 ? norm(b - a) : 0.5 * norm(cross(b - a, c - a));
    }
    return s;
}

double max_edge_length(const TriangleMesh& mesh) {
    double m = 0.0;
    for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
        const Vec3 a = mesh.vertex(f, 0), b = mesh.vertex(f, 1), c = mesh.vertex(f, 2);
        m = std::max({m, norm(b - a), norm(c - b), norm(a - c)});
    }
    return m;
}

bool is_watertight(const TriangleMesh& mesh) {
    if (mesh.dim == 2) {
        std::vector<int> out(mesh.vertices.size(), 0), in(mesh.vertices.size(), 0);
        for (const auto& f : mesh.faces) {
            ++out[f[0]];
            ++in[f[1]];
        }
        for (std::size_t v = 0; v < out.size(); ++v)
            if (out[v] != in[v] || out[v] > 1) return false;
        return !mesh.faces.empty();
    }
    std::map<std::pair<int, int>, int> directed;
    for (const auto& f : mesh.faces)
        for (int k = 0; k < 3; ++k) ++directed[{f[k], f[(k + 1) % 3]}];
    for (const auto& [e, n] : directed) {
        if (n != 1) return false;
        auto it = directed.find({e.second, e.first});
        if (it == directed.end() || it->second != 1) return false;
    }
    return !mesh.faces.empty();
}

double spec_length(double min_domain_length, int n_spec, int l_max, int n_blocks) {
    return min_domain_length * (0.95 * n_spec) / (std::ldexp(1.0, l_max - 1) * n_blocks);
}

TriangleMesh refine_faces(const TriangleMesh& mesh, double l_spec) {
    if (!(l_spec > 0.0)) throw InvalidSpecError("l_spec must be positive");
    if (max_edge_length(mesh) < l_spec) return mesh;

    std::vector<Vec3> verts = mesh.vertices;
    std::map<std::pair<int, int>, int> mids;
    auto midpoint = [&](int a, int b) {
        const auto key = std::minmax(a, b);
        auto it = mids.find({key.first, key.second});
        if (it != mids.end()) return it->second;
        const Vec3 m = (verts[key.first] + verts[key.second]) * 0.5;
        verts.push_back(m);
        const int id = static_cast<int>(verts.size()) - 1;
        mids.emplace(std::pair{key.first, key.second}, id);
        return id;
    };
    auto len = [&](int a, int b) { return norm(verts[a] - verts[b]); };

    std::vector<std::array<int, 3>> out;
    std::vector<std::array<int, 3>> stack;
    for (const auto& f0 : mesh.faces) {
        stack.push_back(f0);
        while (!stack.empty()) {
            const auto f = stack.back();
            stack.pop_back();
            if (mesh.dim == 2) {
                if (len(f[0], f[1]) < l_spec) {
                    out.push_back(f);
                    continue;
                }
                const int m = midpoint(f[0], f[1]);
                // pushed in reverse so output keeps the original edge order
                stack.push_back({m, f[1], -1});
                stack.push_back({f[0], m, -1});
                continue;
            }
            if (len(f[0], f[1]) < l_spec && len(f[1], f[2]) < l_spec && len(f[2], f[0]) < l_spec) {
                out.push_back(f);
                continue;
            }
            const int m01 = midpoint(f[0], f[1]);
            const int m12 = midpoint(f[1], f[2]);
            const int m20 = midpoint(f[2], f[0]);
            stack.push_back({m01, m12, m20});
            stack.push_back({m20, m12, f[2]});
            stack.push_back({m01, f[1], m12});
            stack.push_back({f[0], m01, m20});
        }
    }
    return make_mesh(mesh.dim, std::move(verts), std::move(out));
}

std::optional<RayHit> ray_face_distance(const Vec3& origin, const Vec3& dir, const TriangleMesh& mesh,
                                        std::size_t f) {
    const Vec3& n = mesh.normals[f];
    const double den = dot(dir, n);
    if (!(std::fabs(den) >= kEpsParallel)) return std::nullopt;
    const Vec3 v0 = mesh.vertex(f, 0);
    const double num = dot2<6>({v0.x, v0.y, v0.z, -origin.x, -origin.y, -origin.z}, {n.x, n.y, n.z, n.x, n.y, n.z});
    const double d = num / den;
    return RayHit{d, origin + dir * d};
}

bool triangle_aabb_overlap(const Vec3& v1, const Vec3& v2, const Vec3& v3, const Aabb& box) {
    if (!plane_cuts_box(v1, v2, v3, box)) return false;
    if (projected_gap(v1, v2, v3, box, 0, 1)) return false;
    if (projected_gap(v1, v2, v3, box, 1, 2)) return false;
    if (projected_gap(v1, v2, v3, box, 2, 0)) return false;
    return true;
}

bool segment_aabb_overlap(const Vec3& a, const Vec3& b, const Aabb& box) {
    const double t[3][2] = {{a.x, a.y}, {b.x, b.y}, {b.x, b.y}};
    const double rm[2] = {box.lo.x, box.lo.y};
    const double rM[2] = {box.hi.x, box.hi.y};
    if (axis_gap(1.0, 0.0, t, rm, rM)) return false;
    if (axis_gap(0.0, 1.0, t, rm, rM)) return false;
    if (axis_gap(b.y - a.y, a.x - b.x, t, rm, rM)) return false;
    return true;
}

bool face_aabb_overlap(const TriangleMesh& mesh, std::size_t f, const Aabb& box) {
    const double* p = &mesh.coords_aos[9 * f];
    const Vec3 a{p[0], p[1], p[2]}, b{p[3], p[4], p[5]};
    if (mesh.dim == 2) return segment_aabb_overlap(a, b, box);
    return triangle_aabb_overlap(a, b, Vec3{p[6], p[7], p[8]}, box);
}

bool point_in_face(const TriangleMesh& mesh, std::size_t f, const Vec3& p, double eps) {
    const Vec3 e{eps, eps, eps};
    return face_aabb_overlap(mesh, f, Aabb{p - e, p + e});
}

} // namespace fvx
