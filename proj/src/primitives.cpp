#include <cmath>
#include <map>
#include <numbers>

#include "fvx/errors.hpp"
#include "fvx/geometry.hpp"

namespace fvx {

namespace {

TriangleMesh icosphere(const Vec3& c, double radius, int subdiv) {
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                           {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
    for (auto& x : v) x = x / norm(x);
    std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdiv; ++s) {
        std::map<std::pair<int, int>, int> mids;
        auto mid = [&](int a, int b) {
            const auto k = std::minmax(a, b);
            auto it = mids.find({k.first, k.second});
            if (it != mids.end()) return it->second;
            Vec3 m = (v[a] + v[b]) * 0.5;
            v.push_back(m / norm(m));
            const int id = static_cast<int>(v.size()) - 1;
            mids.emplace(std::pair{k.first, k.second}, id);
            return id;
        };
        std::vector<std::array<int, 3>> nf;
        nf.reserve(4 * f.size());
        for (const auto& t : f) {
            const int a = mid(t[0], t[1]), b = mid(t[1], t[2]), cc = mid(t[2], t[0]);
            nf.push_back({t[0], a, cc});
            nf.push_back({t[1], b, a});
            nf.push_back({t[2], cc, b});
            nf.push_back({a, b, cc});
        }
        f = std::move(nf);
    }
    for (auto& x : v) x = c + x * radius;
    return make_mesh(3, std::move(v), std::move(f));
}

} // namespace

TriangleMesh make_primitive(const PrimitiveSpec& spec) {
    using Kind = PrimitiveSpec::Kind;
    const Vec3& c = spec.center;
    const Vec3& s = spec.size;
    switch (spec.kind) {
    case Kind::Circle: {
        if (spec.count < 3) throw InvalidSpecError("circle needs at least 3 segments");
        if (!(s.x > 0.0)) throw InvalidSpecError("circle diameter must be positive");
        const int n = spec.count;
        std::vector<Vec3> v(n);
        std::vector<std::array<int, 3>> f(n);
        for (int k = 0; k < n; ++k) {
            const double a = 2.0 * std::numbers::pi * k / n;
            v[k] = {c.x + 0.5 * s.x * std::cos(a), c.y + 0.5 * s.x * std::sin(a), 0.0};
            f[k] = {k, (k + 1) % n, -1};
        }
        return make_mesh(2, std::move(v), std::move(f));
    }
    case Kind::Square: {
        if (!(s.x > 0.0 && s.y > 0.0)) throw InvalidSpecError("square size must be positive");
        const double hx = 0.5 * s.x, hy = 0.5 * s.y;
        std::vector<Vec3> v = {{c.x - hx, c.y - hy, 0}, {c.x + hx, c.y - hy, 0}, {c.x + hx, c.y + hy, 0},
                               {c.x - hx, c.y + hy, 0}};
        return make_mesh(2, std::move(v), {{0, 1, -1}, {1, 2, -1}, {2, 3, -1}, {3, 0, -1}});
    }
    case Kind::Sphere:
        if (spec.count < 0) throw InvalidSpecError("sphere subdivision count must be non-negative");
        if (!(s.x > 0.0)) throw InvalidSpecError("sphere diameter must be positive");
        return icosphere(c, 0.5 * s.x, spec.count);
    case Kind::Box: {
        if (!(s.x > 0.0 && s.y > 0.0 && s.z > 0.0)) throw InvalidSpecError("box size must be positive");
        const Vec3 h = s * 0.5;
        std::vector<Vec3> v;
        for (int k = 0; k < 8; ++k)
            v.push_back({c.x + ((k & 1) ? h.x : -h.x), c.y + ((k & 2) ? h.y : -h.y), c.z + ((k & 4) ? h.z : -h.z)});
        std::vector<std::array<int, 3>> f = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                                             {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
        return make_mesh(3, std::move(v), std::move(f));
    }
    }
    throw InvalidSpecError("unknown primitive kind");
}

} // namespace fvx
