#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "fvx/domain.hpp"
#include "fvx/vec.hpp"

namespace fvx {

// Negative neighbor codes.
constexpr int kInvalid = -1;  // outside the domain
constexpr int kNoBlock = -2;  // region only covered by a coarser leaf
constexpr int kSolidNbr = -3; // as kNoBlock, and that coarser leaf is solid

inline bool missing_same_level(int code) { return code == kNoBlock || code == kSolidNbr; }

enum BlockFlag : std::uint16_t {
    kSolidBlock = 1,
    kSolidBoundary = 2,
    kSolidAdjacent = 4,
    kCommunicating = 8,
    kOnDomainBoundary = 16,
    kBranch = 32,
};

// Cell mask: a type in the low two bits plus layer flags.
namespace cell {
enum : std::uint8_t { Fluid = 0, Solid = 1, Guard = 2, Boundary = 3, TypeBits = 3, Ghost = 4, Interface = 8 };
inline int type(std::uint8_t m) { return m & TypeBits; }
inline std::uint8_t with_type(std::uint8_t m, int t) { return static_cast<std::uint8_t>((m & ~TypeBits) | t); }
inline bool is_fluid_like(std::uint8_t m) { return type(m) == Fluid || type(m) == Boundary; }
} // namespace cell

enum Mark : std::int8_t { kKeep = 0, kRefine = 1, kCoarsen = -1 };

struct ForestGrid {
    Domain dom;
    int capacity = 0;
    int nq = 27; // neighbor slots, full halo including self
    int mb = 64; // cells per block
    int nchild = 8;
    std::array<bool, 3> periodic{false, false, false};

    std::vector<Vec3> origin;
    std::vector<int> level;
    std::vector<std::int8_t> ref_id;
    std::vector<std::uint16_t> block_mask;
    std::vector<int> parent;
    std::vector<int> first_child; // -1 for leaves
    std::vector<int> child_index;
    std::vector<std::uint8_t> active;
    std::vector<int> nbr;       // capacity * nq
    std::vector<int> nbr_child; // first child of each neighbor, -1 if none
    std::vector<std::uint8_t> cell_mask; // capacity * mb

    std::vector<std::vector<int>> id_sets; // active ids per level, ascending
    std::vector<int> gap_set;              // free ids, ascending

    int center_slot() const { return nq / 2; }
    int num_levels() const { return static_cast<int>(id_sets.size()); }
    bool is_leaf(int b) const { return first_child[b] < 0; }
    int neighbor(int b, int slot) const { return nbr[static_cast<std::size_t>(b) * nq + slot]; }
    std::uint8_t& mask(int b, int t) { return cell_mask[static_cast<std::size_t>(b) * mb + t]; }
    std::uint8_t mask(int b, int t) const { return cell_mask[static_cast<std::size_t>(b) * mb + t]; }

    // slot for offset (dx, dy, dz) in {-1, 0, 1}
    int slot(int dx, int dy, int dz) const { return (dx + 1) + 3 * (dy + 1) + (dom.dim == 3 ? 9 * (dz + 1) : 0); }
    Vec3i slot_offset(int s) const { return {s % 3 - 1, (s / 3) % 3 - 1, dom.dim == 3 ? s / 9 - 1 : 0}; }

    Vec3 cell_center(int b, int t) const;
    long num_active() const;
};

ForestGrid init_forest(const Domain& dom, int capacity_multiplier, std::array<bool, 3> periodic = {false, false, false});

struct AdaptStats {
    int refined = 0;
    int coarsened = 0;
    int dropped_refine = 0;  // marks on blocks whose refinement would break 2:1 balance
    int reverted_coarsen = 0;
};

// Applies ref_id marks: refine on leaves, coarsen when all children of a parent carry it.
AdaptStats adapt(ForestGrid& g);

void rebuild_links(ForestGrid& g);
void update_layer_masks(ForestGrid& g);

struct IndexMap {
    int t;
    int t_h;
    Vec3i wrapped;
    bool violation;
};
IndexMap index_maps(const Vec3i& I, const Vec3i& c);

inline int linear(const Vec3i& I, int n) { return I[0] + n * I[1] + n * n * I[2]; }
inline Vec3i local_coords(int t, int dim) { return {t & 3, (t >> 2) & 3, dim == 3 ? t >> 4 : 0}; }

// Leaf containing p when level < 0, else the block of that level (none if the region is coarser).
// Points on block faces go to the lower-index block.
std::optional<int> block_of_point(const ForestGrid& g, const Vec3& p, int level = -1);

// Cell reached from cell t of block b by the integer step c (|c_d| <= 1). When the same-level
// neighbor is missing, the covering cell of the coarser leaf is returned with coarse set.
struct CellRef {
    int block = -1; // -1 outside the domain
    int t = -1;
    bool coarse = false;
    bool valid() const { return block >= 0; }
};
CellRef neighbor_cell(const ForestGrid& g, int b, int t, const Vec3i& c);

// Number of adjacent leaf pairs with a level jump above one, found by probing around every leaf.
long balance_violations(const ForestGrid& g);

} // namespace fvx
