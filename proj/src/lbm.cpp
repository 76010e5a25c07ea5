#include "fvx/lbm.hpp"

#include <atomic>
#include <cmath>

#include <fmt/format.h>

#include "fvx/errors.hpp"
#include "fvx/parallel.hpp"

namespace fvx {

namespace {

template <class Real>
void moments(const VelocitySet& vs, const Real* f, double& rho, Vec3& j) {
    rho = 0.0;
    j = {0, 0, 0};
    for (int q = 0; q < vs.q; ++q) {
        const double v = f[q];
        rho += v;
        j.x += v * vs.c[q][0];
        j.y += v * vs.c[q][1];
        j.z += v * vs.c[q][2];
    }
}

double cdot(const Vec3i& c, const Vec3& u) { return c[0] * u.x + c[1] * u.y + c[2] * u.z; }

// Lagrange weights for points base-1 .. base+2 at offset f from base.
void cubic_weights(double f, double* w) {
    w[0] = -f * (f - 1) * (f - 2) / 6;
    w[1] = (f + 1) * (f - 1) * (f - 2) / 2;
    w[2] = -(f + 1) * f * (f - 2) / 2;
    w[3] = (f + 1) * f * (f - 1) / 6;
}

} // namespace

void equilibrium(const VelocitySet& vs, double rho, const Vec3& u, double* out) {
    const double usq = dot(u, u);
    for (int q = 0; q < vs.q; ++q) {
        const double cu = cdot(vs.c[q], u);
        out[q] = vs.w[q] * rho * (1.0 + 3.0 * cu + 4.5 * cu * cu - 1.5 * usq);
    }
}

double reference_area(double d_s, int dim) { return dim == 2 ? d_s : M_PI * d_s * d_s / 4.0; }

template <class Real>
Solver<Real>::Solver(const ForestGrid& g, const LinkTable& links, const FlowConfig& cfg)
    : g_(g), links_(links), cfg_(cfg), vs_(VelocitySet::get(g.dom.dim)), q_(vs_.q) {
    const int dim = g.dom.dim;
    for (int d = 0; d < dim; ++d) {
        const bool p = cfg.faces[2 * d] == FaceBC::Periodic || cfg.faces[2 * d + 1] == FaceBC::Periodic;
        if (p != g.periodic[d]) throw ConfigError(fmt::format("axis {}: periodic faces need a periodic grid", d));
    }
    if (links.q != q_ && links.num_blocks > 0) throw ConfigError("link table direction count does not match the grid");
    dx0_ = g.dom.dx(0);
    dt0_ = cfg.u_in > 0 ? dx0_ * cfg.u_lattice / cfg.u_in : dx0_;
    double nu0 = cfg.nu_lattice;
    if (!(nu0 > 0)) {
        if (!(cfg.re > 0)) throw ConfigError("Re must be positive");
        nu0 = cfg.u_in * cfg.d_s / cfg.re * dt0_ / (dx0_ * dx0_);
    }
    const int nl = std::max(1, g.num_levels());
    for (int L = 0; L < nl; ++L) {
        const double t = 3.0 * std::ldexp(nu0, L) + 0.5;
        if (!(t > 0.5) || !std::isfinite(t))
            throw UnstableConfigError(fmt::format("relaxation time {} on level {} is not above 1/2", t, L));
        tau_.push_back(t);
    }
    steps_.assign(nl, 0);
    level_force_.assign(nl, Vec3{});
    const std::size_t ncell = static_cast<std::size_t>(g.capacity) * g.mb;
    f_.assign(ncell * q_, Real(0));
    post_.assign(ncell * q_, Real(0));
    rho_.assign(ncell, Real(1));
    ux_.assign(ncell, Real(0));
    uy_.assign(ncell, Real(0));
    uz_.assign(ncell, Real(0));

    pull_.resize(g.mb);
    for (int t = 0; t < g.mb; ++t) {
        const Vec3i I = local_coords(t, dim);
        for (int q = 0; q < q_; ++q) {
            Vec3i J, o;
            for (int d = 0; d < 3; ++d) {
                const int v = I[d] - vs_.c[q][d];
                o[d] = v < 0 ? -1 : (v > 3 ? 1 : 0);
                J[d] = v - 4 * o[d];
            }
            pull_[t][q] = {g.slot(o[0], o[1], o[2]), linear(J, 4)};
        }
    }
    // symmetric tensor components ordered xx, yy, zz, xy, xz, yz
    static constexpr int ka[6] = {0, 1, 2, 0, 0, 1}, kb[6] = {0, 1, 2, 1, 2, 2};
    for (int q = 0; q < q_; ++q) {
        for (int k = 0; k < 6; ++k) {
            const double cc = vs_.c[q][ka[k]] * vs_.c[q][kb[k]];
            cpair_[q][k] = cc;
            hermite_[q][k] = 4.5 * vs_.w[q] * (k < 3 ? cc - 1.0 / 3.0 : 2.0 * cc);
        }
    }
    build_ghost_stencils();
}

template <class Real>
double Solver<Real>::dt(int level) const {
    return std::ldexp(dt0_, -level);
}

template <class Real>
void Solver<Real>::initialize(double rho, const Vec3& u) {
    std::vector<double> feq(q_), rest(q_);
    equilibrium(vs_, rho, u, feq.data());
    equilibrium(vs_, rho, {0, 0, 0}, rest.data());
    for (const auto& ids : g_.id_sets)
        for (int b : ids)
            for (int t = 0; t < g_.mb; ++t) {
                const bool solid = cell::type(g_.mask(b, t)) == cell::Solid;
                Real* f = cell(b, t);
                Real* p = &post_[(static_cast<std::size_t>(b) * g_.mb + t) * q_];
                for (int q = 0; q < q_; ++q) f[q] = p[q] = static_cast<Real>(solid ? rest[q] : feq[q]);
                const std::size_t c = static_cast<std::size_t>(b) * g_.mb + t;
                rho_[c] = static_cast<Real>(rho);
                ux_[c] = static_cast<Real>(solid ? 0.0 : u.x);
                uy_[c] = static_cast<Real>(solid ? 0.0 : u.y);
                uz_[c] = static_cast<Real>(solid ? 0.0 : u.z);
            }
    iter_ = 0;
}

template <class Real>
void Solver<Real>::collide(int L) {
    const auto& ids = g_.id_sets[L];
    const double omega = 1.0 / tau_[L];
    const Vec3 acc = cfg_.body_accel * std::ldexp(1.0, -L);
    const bool forced = acc.x != 0 || acc.y != 0 || acc.z != 0;
    const bool regularized = cfg_.collision == Collision::Regularized;
    std::atomic<bool> bad{false};
    parallel_for(ids.size(), [&](std::size_t ii) {
        const int b = ids[ii];
        double feq[27];
        for (int t = 0; t < g_.mb; ++t) {
            if (cell::type(g_.mask(b, t)) == cell::Solid) continue;
            const std::size_t c = static_cast<std::size_t>(b) * g_.mb + t;
            const Real* f = &f_[c * q_];
            Real* p = &post_[c * q_];
            double rho;
            Vec3 j;
            moments(vs_, f, rho, j);
            if (!std::isfinite(rho) || rho <= 0) bad = true;
            const Vec3 G = acc * rho;
            const Vec3 u = (j + G * 0.5) * (1.0 / rho);
            rho_[c] = static_cast<Real>(rho);
            ux_[c] = static_cast<Real>(u.x);
            uy_[c] = static_cast<Real>(u.y);
            uz_[c] = static_cast<Real>(u.z);
            equilibrium(vs_, rho, u, feq);
            double neq[27];
            if (regularized) {
                // keep the first- and second-order parts of the non-equilibrium. The first-order part is
                // -G/2 under forcing and zero otherwise.
                double pi[6] = {}, m1[3] = {};
                for (int q = 0; q < q_; ++q) {
                    const double d = f[q] - feq[q];
                    const double* cc = cpair_[q].data();
                    for (int k = 0; k < 6; ++k) pi[k] += d * cc[k];
                    for (int a = 0; a < 3; ++a) m1[a] += d * vs_.c[q][a];
                }
                for (int q = 0; q < q_; ++q) {
                    const double* h = hermite_[q].data();
                    neq[q] = h[0] * pi[0] + h[1] * pi[1] + h[2] * pi[2] + h[3] * pi[3] + h[4] * pi[4] + h[5] * pi[5] +
                             3.0 * vs_.w[q] * (vs_.c[q][0] * m1[0] + vs_.c[q][1] * m1[1] + vs_.c[q][2] * m1[2]);
                }
            } else {
                for (int q = 0; q < q_; ++q) neq[q] = f[q] - feq[q];
            }
            for (int q = 0; q < q_; ++q) {
                double v = feq[q] + (1.0 - omega) * neq[q];
                if (forced) {
                    const Vec3 cq = vs_.dir(q);
                    const double cu = dot(cq, u);
                    v += (1.0 - 0.5 * omega) * vs_.w[q] * dot((cq - u) * 3.0 + cq * (9.0 * cu), G);
                }
                p[q] = static_cast<Real>(v);
            }
        }
    });
    if (bad) diverged_ = true;
}

template <class Real>
double Solver<Real>::wall_value(int b, int t, int q, int qb) const {
    const std::size_t c = static_cast<std::size_t>(b) * g_.mb + t;
    const Real* pc = &post_[c * q_];
    if (cfg_.bc == WallScheme::IBB) {
        const double qw = links_.num_blocks > 0 ? links_.get(b, t, qb) : -1.0;
        if (qw > 0) {
            if (qw < 0.5) {
                const auto [slot, ts] = pull_[t][qb]; // x + c_q
                const int nb = g_.neighbor(b, slot);
                if (nb >= 0 && cell::type(g_.mask(nb, ts)) != cell::Solid) {
                    const Real* pn = &post_[(static_cast<std::size_t>(nb) * g_.mb + ts) * q_];
                    return 2.0 * qw * pc[qb] + (1.0 - 2.0 * qw) * pn[qb];
                }
            } else {
                return (1.0 / (2.0 * qw)) * pc[qb] + ((2.0 * qw - 1.0) / (2.0 * qw)) * pc[q];
            }
        }
    }
    return pc[qb];
}

template <class Real>
double Solver<Real>::face_value(int b, int t, int q, int qb) const {
    const int L = g_.level[b];
    const double dx = g_.dom.dx(L);
    const long n = g_.dom.cells_per_axis(L);
    const Vec3i I = local_coords(t, g_.dom.dim);
    int face = -1;
    for (int d = 0; d < g_.dom.dim && face < 0; ++d) {
        const long gi = std::lround(g_.origin[b][d] / dx) + I[d] - vs_.c[q][d];
        if (gi < 0) face = 2 * d;
        else if (gi >= n) face = 2 * d + 1;
    }
    const std::size_t c = static_cast<std::size_t>(b) * g_.mb + t;
    const Real* pc = &post_[c * q_];
    switch (face < 0 ? FaceBC::Wall : cfg_.faces[face]) {
    case FaceBC::Velocity: {
        const double uw = cfg_.u_in > 0 ? cfg_.u_lattice : 0.0;
        return pc[qb] + 6.0 * vs_.w[q] * rho_[c] * vs_.c[q][0] * uw;
    }
    case FaceBC::Outlet: {
        const Vec3 u{ux_[c], uy_[c], uz_[c]};
        const double cu = cdot(vs_.c[q], u);
        return -pc[qb] + 2.0 * vs_.w[q] * (1.0 + 4.5 * cu * cu - 1.5 * dot(u, u));
    }
    default:
        return pc[qb];
    }
}

template <class Real>
void Solver<Real>::stream(int L) {
    const auto& ids = g_.id_sets[L];
    std::vector<Vec3> partial(ids.size());
    parallel_for(ids.size(), [&](std::size_t ii) {
        const int b = ids[ii];
        const bool leaf = g_.is_leaf(b);
        Vec3 fsum{};
        for (int t = 0; t < g_.mb; ++t) {
            const std::uint8_t m = g_.mask(b, t);
            if (cell::type(m) == cell::Solid || (m & cell::Ghost)) continue;
            Real* f = &f_[(static_cast<std::size_t>(b) * g_.mb + t) * q_];
            const Real* pc = &post_[(static_cast<std::size_t>(b) * g_.mb + t) * q_];
            for (int q = 0; q < q_; ++q) {
                const auto [slot, ts] = pull_[t][q];
                const int nb = g_.neighbor(b, slot);
                const int qb = VelocitySet::opposite(q);
                if (nb >= 0) {
                    if (cell::type(g_.mask(nb, ts)) != cell::Solid) {
                        f[q] = post_[(static_cast<std::size_t>(nb) * g_.mb + ts) * q_ + q];
                        continue;
                    }
                    const double v = wall_value(b, t, q, qb);
                    f[q] = static_cast<Real>(v);
                    if (leaf) fsum = fsum + vs_.dir(qb) * (pc[qb] + v);
                } else if (nb == kInvalid) {
                    f[q] = static_cast<Real>(face_value(b, t, q, qb));
                } else {
                    f[q] = pc[qb];
                }
            }
        }
        partial[ii] = fsum;
    });
    for (const Vec3& v : partial) level_force_[L] = level_force_[L] + v;
}

template <class Real>
bool Solver<Real>::coarse_cell(int parent, const Vec3i& J, int& blk, int& t) const {
    Vec3i o, K;
    for (int d = 0; d < 3; ++d) {
        o[d] = J[d] < 0 ? -1 : (J[d] > 3 ? 1 : 0);
        K[d] = J[d] - 4 * o[d];
        if (K[d] < 0 || K[d] > 3) return false;
    }
    blk = g_.neighbor(parent, g_.slot(o[0], o[1], o[2]));
    if (blk < 0) return false;
    t = linear(K, 4);
    return cell::type(g_.mask(blk, t)) != cell::Solid;
}

// Coarse source cells and weights of every ghost cell. Fixed for a given grid, so computed once.
template <class Real>
void Solver<Real>::build_ghost_stencils() {
    const int dim = g_.dom.dim;
    ghosts_.assign(std::max(1, g_.num_levels()), {});
    for (int Lf = 1; Lf < g_.num_levels(); ++Lf) {
        GhostStencils& gs = ghosts_[Lf];
        for (int b : g_.id_sets[Lf]) {
            const int P = g_.parent[b];
            const int ci = g_.child_index[b];
            for (int t = 0; t < g_.mb; ++t) {
                const std::uint8_t m = g_.mask(b, t);
                if (!(m & cell::Ghost) || cell::type(m) == cell::Solid) continue;
                const Vec3i I = local_coords(t, dim);
                int base[3];
                double frac[3];
                int fine[3];
                for (int d = 0; d < 3; ++d) {
                    fine[d] = 4 * ((ci >> d) & 1) + I[d];
                    const double xi = fine[d] / 2.0 - 0.25;
                    base[d] = static_cast<int>(std::floor(xi));
                    frac[d] = xi - base[d];
                }
                const std::size_t begin = gs.src.size();
                Ghost gh{};
                bool ok = false;
                for (int order = cfg_.interp == InterpOrder::Cubic ? 3 : 1; order >= 0 && !ok;
                     order -= (order == 3 ? 2 : 1)) {
                    // order 3: 4 points, 1: 2 points, 0: covering coarse cell
                    const int np = order == 3 ? 4 : (order == 1 ? 2 : 1);
                    double w[3][4] = {};
                    int start[3];
                    for (int d = 0; d < 3; ++d) {
                        if (d >= dim) {
                            w[d][0] = 1.0;
                            start[d] = 0;
                            continue;
                        }
                        if (order == 3) {
                            cubic_weights(frac[d], w[d]);
                            start[d] = base[d] - 1;
                        } else if (order == 1) {
                            w[d][0] = 1.0 - frac[d];
                            w[d][1] = frac[d];
                            start[d] = base[d];
                        } else {
                            w[d][0] = 1.0;
                            start[d] = fine[d] / 2;
                        }
                    }
                    gs.src.resize(begin);
                    ok = true;
                    const int nz = dim == 3 ? np : 1;
                    for (int kz = 0; kz < nz && ok; ++kz)
                        for (int ky = 0; ky < np && ok; ++ky)
                            for (int kx = 0; kx < np && ok; ++kx) {
                                int blk, tc;
                                if (!coarse_cell(P, {start[0] + kx, start[1] + ky, start[2] + kz}, blk, tc)) {
                                    ok = false;
                                    break;
                                }
                                gs.src.push_back(static_cast<std::uint32_t>(blk * g_.mb + tc));
                            }
                    if (ok) {
                        gh.np = static_cast<std::uint8_t>(np);
                        std::copy(&w[0][0], &w[0][0] + 12, &gh.w[0][0]);
                    }
                }
                if (!ok) {
                    gs.src.resize(begin);
                    continue;
                }
                gh.dst = static_cast<std::uint32_t>(b * g_.mb + t);
                gh.begin = static_cast<std::uint32_t>(begin);
                gs.cells.push_back(gh);
            }
        }
    }
}

template <class Real>
void Solver<Real>::fill_ghosts(int Lf, bool average) {
    if (Lf <= 0 || Lf >= g_.num_levels()) return;
    const double scale = tau_[Lf] / (2.0 * tau_[Lf - 1]);
    const GhostStencils& gs = ghosts_[Lf];
    const int nzdim = g_.dom.dim == 3;
    parallel_for(gs.cells.size(), [&](std::size_t i) {
        const Ghost& gh = gs.cells[i];
        const int np = gh.np, nz = nzdim ? np : 1;
        const std::uint32_t* src = &gs.src[gh.begin];
        double acc[27] = {};
        for (int kz = 0; kz < nz; ++kz)
            for (int ky = 0; ky < np; ++ky)
                for (int kx = 0; kx < np; ++kx) {
                    const Real* fc = &f_[static_cast<std::size_t>(*src++) * q_];
                    const double wt = gh.w[0][kx] * gh.w[1][ky] * gh.w[2][kz];
                    for (int q = 0; q < q_; ++q) acc[q] += wt * fc[q];
                }
        double rho;
        Vec3 j;
        moments(vs_, acc, rho, j);
        double feq[27];
        equilibrium(vs_, rho, j * (1.0 / rho), feq);
        Real* f = &f_[static_cast<std::size_t>(gh.dst) * q_];
        for (int q = 0; q < q_; ++q) {
            const double v = feq[q] + scale * (acc[q] - feq[q]);
            f[q] = static_cast<Real>(average ? 0.5 * (f[q] + v) : v);
        }
    });
}

template <class Real>
void Solver<Real>::restrict_to(int Lc) {
    if (Lc + 1 >= g_.num_levels()) return;
    const int dim = g_.dom.dim;
    const double scale = 2.0 * tau_[Lc] / tau_[Lc + 1];
    const auto& ids = g_.id_sets[Lc];
    const int nsub = dim == 3 ? 8 : 4;
    parallel_for(ids.size(), [&](std::size_t ii) {
        const int P = ids[ii];
        if (g_.is_leaf(P)) return;
        for (int t = 0; t < g_.mb; ++t) {
            const std::uint8_t m = g_.mask(P, t);
            if (!(m & cell::Interface) || cell::type(m) == cell::Solid) continue;
            const Vec3i I = local_coords(t, dim);
            const int child = g_.first_child[P] + I[0] / 2 + 2 * (I[1] / 2) + 4 * (I[2] / 2);
            double acc[27] = {};
            int n = 0;
            for (int s = 0; s < nsub; ++s) {
                const Vec3i F{(2 * I[0]) % 4 + (s & 1), (2 * I[1]) % 4 + ((s >> 1) & 1),
                              dim == 3 ? (2 * I[2]) % 4 + ((s >> 2) & 1) : 0};
                const int tf = linear(F, 4);
                if (cell::type(g_.mask(child, tf)) == cell::Solid) continue;
                const Real* ff = cell(child, tf);
                for (int q = 0; q < q_; ++q) acc[q] += ff[q];
                ++n;
            }
            if (n == 0) continue;
            for (int q = 0; q < q_; ++q) acc[q] /= n;
            double rho;
            Vec3 j;
            moments(vs_, acc, rho, j);
            double feq[27];
            equilibrium(vs_, rho, j * (1.0 / rho), feq);
            Real* f = cell(P, t);
            for (int q = 0; q < q_; ++q) f[q] = static_cast<Real>(feq[q] + scale * (acc[q] - feq[q]));
        }
    });
}

template <class Real>
void Solver<Real>::advance(int L) {
    collide(L);
    const bool finer = L + 1 < g_.num_levels();
    if (finer) fill_ghosts(L + 1, false);
    stream(L);
    ++steps_[L];
    if (finer) {
        advance(L + 1);
        fill_ghosts(L + 1, true);
        advance(L + 1);
        restrict_to(L);
    }
}

template <class Real>
void Solver<Real>::step() {
    for (auto& v : level_force_) v = Vec3{};
    advance(0);
    ++iter_;
    if (diverged_) throw DivergenceError("non-finite or non-positive density", iter_);
    Vec3 total{};
    const int dim = g_.dom.dim;
    for (int L = 0; L < g_.num_levels(); ++L) {
        const double dx = g_.dom.dx(L), dtl = dt(L);
        const double conv = cfg_.rho_phys * std::pow(dx, dim + 1) / (dtl * dtl) * std::ldexp(1.0, -L);
        total = total + level_force_[L] * conv;
    }
    force_ = total;
}

template <class Real>
double Solver<Real>::rho(int b, int t) const {
    double r;
    Vec3 j;
    moments(vs_, cell(b, t), r, j);
    return r;
}

template <class Real>
Vec3 Solver<Real>::velocity(int b, int t) const {
    double r;
    Vec3 j;
    moments(vs_, cell(b, t), r, j);
    const Vec3 G = cfg_.body_accel * std::ldexp(r, -g_.level[b]);
    return (j + G * 0.5) * (1.0 / r);
}

template <class Real>
double Solver<Real>::mass() const {
    double total = 0.0;
    const int dim = g_.dom.dim;
    for (int L = 0; L < g_.num_levels(); ++L) {
        const double vol = std::ldexp(1.0, -dim * L);
        for (int b : g_.id_sets[L]) {
            if (!g_.is_leaf(b)) continue;
            for (int t = 0; t < g_.mb; ++t) {
                const std::uint8_t m = g_.mask(b, t);
                if (cell::type(m) == cell::Solid || (m & cell::Ghost)) continue;
                total += rho(b, t) * vol;
            }
        }
    }
    return total;
}

template <class Real>
std::vector<ForceSample> Solver<Real>::run(const std::function<void(const Solver&)>& on_step) {
    std::vector<ForceSample> out;
    const long stride = std::max(1L, cfg_.sample_stride);
    while (iter_ < cfg_.iters_total) {
        step();
        const long it = iter_ - 1;
        if (it >= cfg_.sample_start && (it - cfg_.sample_start) % stride == 0)
            out.push_back({it, iter_ * dt0_, force_.x, force_.y});
        if (on_step) on_step(*this);
    }
    return out;
}

template class Solver<float>;
template class Solver<double>;

} // namespace fvx
