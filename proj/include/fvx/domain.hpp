#pragma once

#include <cmath>

namespace fvx {

// Cube [0, length]^dim covered by root blocks of 4^dim cells; nx root cells per axis.
struct Domain {
    int dim = 3;
    double length = 1.0;
    int nx = 64;

    int blocks_per_axis() const { return nx / 4; }
    long cells_per_axis(int level) const { return static_cast<long>(nx) << level; }
    double dx(int level) const { return length / (static_cast<double>(nx) * std::ldexp(1.0, level)); }
    double block_length(int level) const { return 4.0 * dx(level); }
};

} // namespace fvx
