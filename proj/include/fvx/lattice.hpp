#pragma once

#include <array>
#include <cstdlib>

#include "fvx/vec.hpp"

namespace fvx {

// D2Q9 / D3Q27 with the rest direction at 0 and antiparallel pairs at (2k-1, 2k).
struct VelocitySet {
    int dim = 3;
    int q = 27;
    std::array<Vec3i, 27> c{};
    std::array<double, 27> w{};

    static constexpr double cs2 = 1.0 / 3.0;

    static int opposite(int k) { return k == 0 ? 0 : ((k & 1) ? k + 1 : k - 1); }
    Vec3 dir(int k) const { return {double(c[k][0]), double(c[k][1]), double(c[k][2])}; }

    static const VelocitySet& get(int dim);
};

inline const VelocitySet& VelocitySet::get(int dim) {
    static const VelocitySet d2 = [] {
        VelocitySet s;
        s.dim = 2;
        s.q = 9;
        const Vec3i dirs[9] = {{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0},
                               {1, 1, 0}, {-1, -1, 0}, {1, -1, 0}, {-1, 1, 0}};
        for (int k = 0; k < 9; ++k) {
            s.c[k] = dirs[k];
            const int n = std::abs(dirs[k][0]) + std::abs(dirs[k][1]);
            s.w[k] = n == 0 ? 4.0 / 9 : (n == 1 ? 1.0 / 9 : 1.0 / 36);
        }
        return s;
    }();
    static const VelocitySet d3 = [] {
        VelocitySet s;
        s.dim = 3;
        s.q = 27;
        int k = 1;
        s.c[0] = {0, 0, 0};
        // grouped by |c|^2 so that each pair is (v, -v)
        for (int n2 = 1; n2 <= 3; ++n2)
            for (int z = -1; z <= 1; ++z)
                for (int y = -1; y <= 1; ++y)
                    for (int x = -1; x <= 1; ++x) {
                        if (x * x + y * y + z * z != n2) continue;
                        // keep only the representative whose first non-zero component is positive
                        const int first = x != 0 ? x : (y != 0 ? y : z);
                        if (first < 0) continue;
                        s.c[k] = {x, y, z};
                        s.c[k + 1] = {-x, -y, -z};
                        k += 2;
                    }
        for (int j = 0; j < 27; ++j) {
            const int n = std::abs(s.c[j][0]) + std::abs(s.c[j][1]) + std::abs(s.c[j][2]);
            s.w[j] = n == 0 ? 8.0 / 27 : (n == 1 ? 2.0 / 27 : (n == 2 ? 1.0 / 54 : 1.0 / 216));
        }
        return s;
    }();
    return dim == 2 ? d2 : d3;
}

} // namespace fvx
