#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "fvx/forest.hpp"
#include "fvx/lattice.hpp"
#include "fvx/voxelizer.hpp"

namespace fvx {

enum class WallScheme { SBB, IBB };
enum class InterpOrder { Linear, Cubic };
// Regularized relaxes only the first- and second-order projections of the non-equilibrium part.
enum class Collision { BGK, Regularized };
// Domain face conditions. Velocity imposes u_in by bounce-back with a momentum term,
// Outlet imposes density 1 by anti-bounce-back.
enum class FaceBC { Wall, Velocity, Outlet, Periodic };

struct FlowConfig {
    double re = 100.0;
    double u_in = 0.05;       // physical inflow speed
    double d_s = 1.0 / 64;    // reference length, domain units
    double u_lattice = 0.05;  // inflow speed in lattice units, sets the time step
    double nu_lattice = -1.0; // level-0 lattice viscosity; overrides re when positive
    double rho_phys = 1.0;
    WallScheme bc = WallScheme::IBB;
    InterpOrder interp = InterpOrder::Cubic;
    Collision collision = Collision::BGK;
    long iters_total = 0;
    long sample_start = 0;
    long sample_stride = 1;
    // -x, +x, -y, +y, -z, +z
    std::array<FaceBC, 6> faces{FaceBC::Velocity, FaceBC::Outlet, FaceBC::Periodic,
                                FaceBC::Periodic, FaceBC::Periodic, FaceBC::Periodic};
    Vec3 body_accel{0, 0, 0}; // level-0 lattice units, Guo forcing
};

// Second-order polynomial equilibrium for all directions.
void equilibrium(const VelocitySet& vs, double rho, const Vec3& u, double* out);

struct ForceSample {
    long iter;
    double time;
    double fx;
    double fh; // lateral (y) component
};

template <class Real>
class Solver {
public:
    Solver(const ForestGrid& g, const LinkTable& links, const FlowConfig& cfg);

    void initialize(double rho, const Vec3& u);
    void step();                     // one root-level step
    long iteration() const { return iter_; }
    double dt(int level) const;      // physical time step
    double tau(int level) const { return tau_[level]; }
    Vec3 force() const { return force_; } // physical, last root step

    // Σ rho·Δx^D over non-solid cells of leaf blocks outside ghost layers, in level-0 cell volumes.
    double mass() const;
    long level_steps(int level) const { return steps_[level]; }

    // Cell moments, computed from the current distributions.
    double rho(int b, int t) const;
    Vec3 velocity(int b, int t) const;

    // Runs cfg.iters_total steps and returns samples from sample_start every sample_stride.
    std::vector<ForceSample> run(const std::function<void(const Solver&)>& on_step = {});

    Real* cell(int b, int t) { return &f_[(static_cast<std::size_t>(b) * g_.mb + t) * q_]; }
    const Real* cell(int b, int t) const { return &f_[(static_cast<std::size_t>(b) * g_.mb + t) * q_]; }

    const ForestGrid& grid() const { return g_; }
    const FlowConfig& config() const { return cfg_; }

    // Exposed for the interface tests.
    void fill_ghosts(int fine_level, bool average);
    void restrict_to(int coarse_level);

private:
    const ForestGrid& g_;
    const LinkTable& links_;
    FlowConfig cfg_;
    const VelocitySet& vs_;
    int q_;
    std::vector<Real> f_, post_;
    std::vector<Real> rho_, ux_, uy_, uz_;
    std::vector<double> tau_;
    std::vector<long> steps_;
    std::vector<std::array<std::pair<int, int>, 27>> pull_; // per cell t and q: (slot, source cell)
    // Interpolation stencil of one ghost cell: np^D coarse cells in src from begin, x fastest.
    struct Ghost {
        std::uint32_t dst;
        std::uint32_t begin;
        std::uint8_t np;
        double w[3][4];
    };
    struct GhostStencils {
        std::vector<Ghost> cells;
        std::vector<std::uint32_t> src;
    };
    std::vector<GhostStencils> ghosts_; // per fine level
    // per direction: c_a c_b and the regularization weights 4.5 w (c_a c_b - δ_ab/3), off-diagonals doubled
    std::array<std::array<double, 6>, 27> cpair_{}, hermite_{};
    std::vector<Vec3> level_force_;
    Vec3 force_{};
    long iter_ = 0;
    double dx0_ = 0, dt0_ = 0;
    bool diverged_ = false;

    void advance(int level);
    void collide(int level);
    void stream(int level);
    double wall_value(int b, int t, int q, int qb) const;
    double face_value(int b, int t, int q, int qb) const;
    bool coarse_cell(int parent, const Vec3i& J, int& blk, int& t) const;
    void build_ghost_stencils();
};

extern template class Solver<float>;
extern template class Solver<double>;

struct Metrics {
    double cd_mean = 0.0;
    double cl_rms = 0.0;
    double cl_amplitude = 0.0;
    double cl_mean = 0.0;
    std::optional<double> strouhal;
    std::optional<double> frequency; // physical
};

struct SineFit {
    double frequency;
    double amplitude;
    double phase;
    double offset;
    double residual; // mean squared
};

// Least-squares sinusoid with the frequency bracketed by the periodogram peak and refined by
// golden-section search. None for a signal without a resolved oscillation.
std::optional<SineFit> fit_sinusoid(const std::vector<double>& t, const std::vector<double>& y);

Metrics compute_metrics(const std::vector<ForceSample>& series, const FlowConfig& cfg, int dim);

// Reference area: d_s per unit depth in 2D, disc area in 3D.
double reference_area(double d_s, int dim);

} // namespace fvx
