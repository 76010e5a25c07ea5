#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fvx/vec.hpp"

namespace fvx {

struct Aabb {
    Vec3 lo, hi;
};

// Faces are triangles in 3D and segments in 2D. In 2D the third index is -1 and the
// coordinate records repeat the second vertex, so AABB code can treat both alike.
struct TriangleMesh {
    int dim = 3;
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<double> coords_aos; // 9 values per face: v1, v2, v3
    std::vector<double> coords_soa; // component k of vertex j for all faces at [(3j+k)*F + f]
    std::vector<Vec3> normals;      // unit, outward

    std::size_t num_faces() const { return faces.size(); }

    Vec3 vertex(std::size_t f, int k) const {
        const double* p = &coords_aos[9 * f + 3 * k];
        return {p[0], p[1], p[2]};
    }
    Vec3 vertex_soa(std::size_t f, int k) const {
        const std::size_t n = faces.size();
        return {coords_soa[(3 * k + 0) * n + f], coords_soa[(3 * k + 1) * n + f],
                coords_soa[(3 * k + 2) * n + f]};
    }

    // Rebuilds both coordinate layouts and the normals from vertices/faces.
    void sync_coords();
};

TriangleMesh make_mesh(int dim, std::vector<Vec3> vertices, std::vector<std::array<int, 3>> faces);

Aabb face_aabb(const TriangleMesh& mesh, std::size_t f);
Aabb mesh_aabb(const TriangleMesh& mesh);
double surface_measure(const TriangleMesh& mesh); // area in 3D, perimeter in 2D
double max_edge_length(const TriangleMesh& mesh);
// Every edge used by exactly two faces with opposite orientation.
bool is_watertight(const TriangleMesh& mesh);

TriangleMesh parse_stl(std::string_view text, double domain_length = 1.0);
TriangleMesh load_stl(const std::string& path, double domain_length = 1.0);

struct PrimitiveSpec {
    enum class Kind { Circle, Square, Sphere, Box };
    Kind kind = Kind::Sphere;
    Vec3 center{0.5, 0.5, 0.5};
    Vec3 size{1.0 / 64, 1.0 / 64, 1.0 / 64}; // diameter in .x for circle/sphere, edge lengths otherwise
    int count = 3;                          // circle segments or sphere subdivisions
};

TriangleMesh make_primitive(const PrimitiveSpec& spec);

// Upper bound on face edge length for a bin cover of (2+n_spec)^D bins.
double spec_length(double min_domain_length, int n_spec, int l_max, int n_blocks);
TriangleMesh refine_faces(const TriangleMesh& mesh, double l_spec);

constexpr double kEpsParallel = 1e-12;
inline double slab_epsilon(double max_domain_length, bool single_precision) {
    return single_precision ? 1e-5 : 1e-9 * max_domain_length;
}

struct RayHit {
    double d;
    Vec3 point;
};

// Signed distance along dir (in units of dir) to the plane of face f. No point-in-face test.
std::optional<RayHit> ray_face_distance(const Vec3& origin, const Vec3& dir, const TriangleMesh& mesh,
                                        std::size_t f);

bool triangle_aabb_overlap(const Vec3& v1, const Vec3& v2, const Vec3& v3, const Aabb& box);
bool segment_aabb_overlap(const Vec3& a, const Vec3& b, const Aabb& box); // xy only
bool face_aabb_overlap(const TriangleMesh& mesh, std::size_t f, const Aabb& box);

// Point-in-face through a cube of half-width eps around p.
bool point_in_face(const TriangleMesh& mesh, std::size_t f, const Vec3& p, double eps);

} // namespace fvx
