#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "fvx/errors.hpp"
#include "fvx/lbm.hpp"
#include "lbm_fixtures.hpp"

using namespace fvx;
using namespace lbmfix;

using Big = boost::multiprecision::cpp_bin_float_50;

TEST_CASE("equilibrium moments") {
    for (int dim : {2, 3}) {
        const VelocitySet& vs = VelocitySet::get(dim);
        const double rho = 1.03;
        const Vec3 u{0.04, -0.03, dim == 3 ? 0.02 : 0.0};
        const auto f = feq_of(dim, rho, u);
        double m0 = 0, m1[3] = {}, m2[3][3] = {};
        for (int q = 0; q < vs.q; ++q) {
            m0 += f[q];
            for (int a = 0; a < 3; ++a) {
                m1[a] += f[q] * vs.c[q][a];
                for (int b = 0; b < 3; ++b) m2[a][b] += f[q] * vs.c[q][a] * vs.c[q][b];
            }
        }
        CHECK(m0 == doctest::Approx(rho).epsilon(1e-15));
        for (int a = 0; a < dim; ++a) {
            CHECK(std::abs(m1[a] - rho * u[a]) < 1e-16);
            for (int b = 0; b < dim; ++b)
                CHECK(std::abs(m2[a][b] - (rho * u[a] * u[b] + (a == b ? rho / 3.0 : 0.0))) < 1e-15);
        }
    }
}

TEST_CASE("equilibrium agrees with a 50-digit evaluation") {
    const VelocitySet& vs = VelocitySet::get(3);
    std::uint64_t worst = 0;
    for (int i = 0; i < 200; ++i) {
        const double rho = 0.9 + 0.001 * i;
        const Vec3 u{0.1 * std::sin(i * 0.7), 0.1 * std::cos(i * 1.3), 0.05 * std::sin(i * 2.1)};
        double f[27];
        equilibrium(vs, rho, u, f);
        for (int q = 0; q < vs.q; ++q) {
            const Big cu = Big(vs.c[q][0]) * u.x + Big(vs.c[q][1]) * u.y + Big(vs.c[q][2]) * u.z;
            const Big usq = Big(u.x) * u.x + Big(u.y) * u.y + Big(u.z) * u.z;
            const Big w = Big(vs.w[q] == 8.0 / 27 ? Big(8) / 27
                              : vs.w[q] == 2.0 / 27 ? Big(2) / 27
                              : vs.w[q] == 1.0 / 54 ? Big(1) / 54
                                                     : Big(1) / 216);
            const double ref = static_cast<double>(w * rho * (1 + 3 * cu + Big(9) / 2 * cu * cu - Big(3) / 2 * usq));
            const auto a = std::bit_cast<std::int64_t>(f[q]), b = std::bit_cast<std::int64_t>(ref);
            worst = std::max<std::uint64_t>(worst, static_cast<std::uint64_t>(std::llabs(a - b)));
        }
    }
    CHECK(worst <= 4);
}

TEST_CASE("relaxation times and unstable configurations") {
    ForestGrid g = uniform(2, 16);
    LinkTable none;
    FlowConfig c = lattice_config(0.1);
    Solver<double> s(g, none, c);
    CHECK(s.tau(0) == doctest::Approx(0.8));
    FlowConfig bad = lattice_config(-1.0);
    bad.u_in = 0.0;
    CHECK_THROWS_AS(Solver<double>(g, none, bad), UnstableConfigError);
    FlowConfig per = lattice_config(0.1);
    per.faces[0] = per.faces[1] = FaceBC::Periodic;
    CHECK_THROWS_AS(Solver<double>(g, none, per), ConfigError);

    // physical units: nu = u D / Re, tau = 3 nu dt/dx^2 + 1/2
    FlowConfig phys;
    phys.re = 100;
    phys.u_in = 2.0;
    phys.d_s = 0.25;
    phys.u_lattice = 0.05;
    phys.faces[2] = phys.faces[3] = FaceBC::Wall;
    Solver<double> p(g, none, phys);
    const double dx = 1.0 / 16, dt = dx * 0.05 / 2.0;
    CHECK(p.dt(0) == doctest::Approx(dt));
    CHECK(p.tau(0) == doctest::Approx(3 * (2.0 * 0.25 / 100) * dt / (dx * dx) + 0.5));
}

TEST_CASE("divergence is reported with the iteration") {
    ForestGrid g = uniform(2, 16, {true, true, false});
    LinkTable none;
    FlowConfig c = lattice_config(0.1);
    c.faces.fill(FaceBC::Periodic);
    Solver<double> s(g, none, c);
    s.initialize(1.0, {0, 0, 0});
    s.step();
    s.cell(g.id_sets[0][3], 5)[2] = std::numeric_limits<double>::quiet_NaN();
    try {
        s.step();
        FAIL("no divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.iteration == 2);
    }
}

TEST_CASE("uniform flow is a fixed point on periodic grids") {
    for (int dim : {2, 3}) {
        ForestGrid g = init_forest({dim, 1.0, dim == 2 ? 32 : 16}, 4, {true, true, dim == 3});
        const int nb = g.dom.blocks_per_axis();
        // refine a 2x2(x2) patch of roots in the middle, then one inner child
        std::vector<int> patch;
        for (int k = 0; k < (dim == 3 ? 2 : 1); ++k)
            for (int j = 0; j < 2; ++j)
                for (int i = 0; i < 2; ++i)
                    patch.push_back((nb / 2 - 1 + i) + nb * ((nb / 2 - 1 + j) + (dim == 3 ? nb * (nb / 2 - 1 + k) : 0)));
        refine(g, patch);
        const int corner = dim == 3 ? 7 : 3;
        refine(g, {g.first_child[patch[0]] + corner});
        REQUIRE(g.num_levels() == 3);
        LinkTable none;
        for (Collision op : {Collision::BGK, Collision::Regularized}) {
            FlowConfig c = lattice_config(0.02);
            c.faces.fill(FaceBC::Periodic);
            c.collision = op;
            Solver<double> s(g, none, c);
            const Vec3 u{0.05, -0.02, dim == 3 ? 0.01 : 0.0};
            s.initialize(1.0, u);
            for (int i = 0; i < 20; ++i) s.step();
            CHECK(max_dev_from(s, feq_of(dim, 1.0, u)) < 1e-13);
            CHECK(s.level_steps(0) == 20);
            CHECK(s.level_steps(1) == 40);
            CHECK(s.level_steps(2) == 80);
        }
    }
}

TEST_CASE("inlet, outlet and lateral velocity faces keep uniform inflow") {
    for (int dim : {2, 3}) {
        ForestGrid g = uniform(dim, dim == 2 ? 32 : 12);
        LinkTable none;
        FlowConfig c;
        c.faces = {FaceBC::Velocity, FaceBC::Outlet, FaceBC::Velocity, FaceBC::Velocity, FaceBC::Velocity, FaceBC::Velocity};
        c.u_in = 1.0;
        c.u_lattice = 0.05;
        c.nu_lattice = 0.05;
        Solver<double> s(g, none, c);
        s.initialize(1.0, {0.05, 0, 0});
        for (int i = 0; i < 30; ++i) s.step();
        CHECK(max_dev_from(s, feq_of(dim, 1.0, {0.05, 0, 0})) < 1e-14);
    }
    ForestGrid g = uniform(2, 16);
    LinkTable none;
    FlowConfig c;
    c.faces[2] = c.faces[3] = FaceBC::Velocity;
    c.u_in = 1.0;
    c.nu_lattice = 0.05;
    Solver<float> sf(g, none, c);
    sf.initialize(1.0, {0.05, 0, 0});
    for (int i = 0; i < 30; ++i) sf.step();
    CHECK(max_dev_from(sf, feq_of(2, 1.0, {0.05, 0, 0})) < 1e-6);
}

TEST_CASE("closed box conserves mass") {
    for (int dim : {2, 3}) {
        const int n = dim == 2 ? 32 : 12;
        ForestGrid g = uniform(dim, n);
        set_solid(g, [&](const Vec3i& i) {
            for (int d = 0; d < dim; ++d)
                if (i[d] == 0 || i[d] == n - 1) return true;
            // an off-centre obstacle
            return i[0] >= n / 3 && i[0] < n / 3 + 3 && i[1] >= n / 2 && i[1] < n / 2 + 2;
        });
        LinkTable none;
        FlowConfig c = lattice_config(0.05);
        c.collision = dim == 2 ? Collision::BGK : Collision::Regularized;
        Solver<double> s(g, none, c);
        s.initialize(1.0, {0, 0, 0});
        // density bump and a swirl
        for_cells(g, 0, [&](int b, int t) {
            if (cell::type(g.mask(b, t)) == cell::Solid) return;
            const Vec3 x = g.cell_center(b, t);
            const double rho = 1.0 + 0.02 * std::sin(6.0 * x.x) * std::cos(5.0 * x.y);
            const Vec3 u{0.03 * std::sin(2 * M_PI * x.y), -0.03 * std::sin(2 * M_PI * x.x), 0};
            auto f = feq_of(dim, rho, u);
            for (int q = 0; q < VelocitySet::get(dim).q; ++q) s.cell(b, t)[q] = f[q];
        });
        const double m0 = s.mass();
        for (int i = 0; i < (dim == 2 ? 500 : 100); ++i) s.step();
        CHECK(std::abs(s.mass() - m0) / m0 < 1e-12);
    }
}

TEST_CASE("interpolated bounce-back at q = 1/2 reproduces simple bounce-back bit for bit") {
    ForestGrid g = uniform(2, 32, {true, false, false});
    set_solid(g, [](const Vec3i& i) {
        return i[1] < 3 || i[1] > 28 || (i[0] >= 10 && i[0] < 14 && i[1] >= 12 && i[1] < 17);
    });
    LinkTable half = constant_links(g, 0.5);
    LinkTable none;
    FlowConfig c = lattice_config(0.05);
    c.faces[0] = c.faces[1] = FaceBC::Periodic;
    c.body_accel = {1e-5, 0, 0};
    FlowConfig cs = c;
    cs.bc = WallScheme::SBB;
    Solver<double> a(g, half, c), b(g, none, cs);
    a.initialize(1.0, {0.01, 0, 0});
    b.initialize(1.0, {0.01, 0, 0});
    for (int i = 0; i < 100; ++i) {
        a.step();
        b.step();
    }
    bool same = true;
    for_cells(g, 0, [&](int blk, int t) {
        if (std::memcmp(a.cell(blk, t), b.cell(blk, t), 9 * sizeof(double)) != 0) same = false;
    });
    CHECK(same);
    CHECK(a.force().x == b.force().x);
    CHECK(a.force().x > 0);
}

TEST_CASE("Poiseuille flow with interpolated walls") {
    ForestGrid g = uniform(2, 40, {true, false, false});
    set_solid(g, [](const Vec3i& i) { return i[1] < 4 || i[1] > 35; });
    const double qw = 0.3, nu = 0.1;
    LinkTable lt = constant_links(g, qw);
    const double y0 = 4.0 + 0.5 - qw, y1 = 35.5 + qw, H = y1 - y0;
    const double umax = 0.01, acc = 8.0 * nu * umax / (H * H);
    for (Collision op : {Collision::BGK, Collision::Regularized}) {
        FlowConfig c = lattice_config(nu);
        c.faces[0] = c.faces[1] = FaceBC::Periodic;
        c.body_accel = {acc, 0, 0};
        c.collision = op;
        Solver<double> s(g, lt, c);
        s.initialize(1.0, {0, 0, 0});
        for (int i = 0; i < 30000; ++i) s.step();
        double err = 0.0;
        for_cells(g, 0, [&](int b, int t) {
            if (cell::type(g.mask(b, t)) == cell::Solid) return;
            const double y = global_index(g, b, t)[1] + 0.5;
            const double exact = acc / (2 * nu) * (y - y0) * (y1 - y);
            err = std::max(err, std::abs(s.velocity(b, t).x - exact));
        });
        CHECK(err / umax < 0.01);
    }
}

TEST_CASE("Poiseuille flow across a refined band") {
    ForestGrid g = init_forest({2, 1.0, 32}, 4, {true, false, false});
    set_solid(g, [](const Vec3i& i) { return i[1] < 4 || i[1] > 27; });
    // a patch in the channel core, away from the walls
    std::vector<int> band;
    for (int j = 2; j < 6; ++j)
        for (int i = 3; i < 5; ++i) band.push_back(i + 8 * j);
    refine(g, band);
    for (int L = 1; L < g.num_levels(); ++L) assign_solid_neighbor_codes(g, L);
    const double nu = 0.05;
    const double y0 = 4.0, y1 = 28.0, H = y1 - y0, umax = 0.01, acc = 8.0 * nu * umax / (H * H);
    LinkTable none;
    FlowConfig c = lattice_config(nu);
    c.bc = WallScheme::SBB;
    c.faces[0] = c.faces[1] = FaceBC::Periodic;
    c.body_accel = {acc, 0, 0};
    Solver<double> s(g, none, c);
    s.initialize(1.0, {0, 0, 0});
    for (int i = 0; i < 12000; ++i) s.step();
    double err = 0.0;
    const double dx0 = g.dom.dx(0);
    for (int L = 0; L < g.num_levels(); ++L)
        for_cells(g, L, [&](int b, int t) {
            const std::uint8_t m = g.mask(b, t);
            if (cell::type(m) == cell::Solid || (m & cell::Ghost) || !g.is_leaf(b)) return;
            const double y = g.cell_center(b, t).y / dx0;
            const double exact = acc / (2 * nu) * (y - y0) * (y1 - y);
            err = std::max(err, std::abs(s.velocity(b, t).x - exact));
        });
    // the patch adds interface dissipation that lowers the flux through the whole channel
    CHECK(err / umax < 0.03);
}

TEST_CASE("ghost interpolation reproduces polynomial fields") {
    for (int dim : {2, 3}) {
        for (InterpOrder order : {InterpOrder::Linear, InterpOrder::Cubic}) {
            ForestGrid g = init_forest({dim, 1.0, dim == 2 ? 32 : 24}, 4, {true, true, dim == 3});
            const int nb = g.dom.blocks_per_axis();
            const int mid = nb / 2;
            refine(g, {mid + nb * (mid + (dim == 3 ? nb * mid : 0))});
            LinkTable none;
            FlowConfig c = lattice_config(0.05);
            c.faces.fill(FaceBC::Periodic);
            c.interp = order;
            Solver<double> s(g, none, c);
            const VelocitySet& vs = VelocitySet::get(dim);
            const int p = order == InterpOrder::Cubic ? 3 : 1;
            // per-direction polynomial of degree p in each coordinate around an equilibrium
            auto field = [&](const Vec3& x, double* f) {
                const auto base = feq_of(dim, 1.0, {0.02, 0.01, 0.0});
                for (int q = 0; q < vs.q; ++q) {
                    double v = base[q];
                    for (int d = 0; d < dim; ++d) {
                        const double y = (x[d] - 0.5) * 4.0;
                        v += 1e-3 * (q + 1 + d) * std::pow(y, p) + 2e-4 * y * (d + 1);
                    }
                    f[q] = v;
                }
            };
            for_cells(g, 0, [&](int b, int t) {
                double f[27];
                field(g.cell_center(b, t), f);
                for (int q = 0; q < vs.q; ++q) s.cell(b, t)[q] = f[q];
            });
            s.fill_ghosts(1, false);
            const double scale = s.tau(1) / (2 * s.tau(0));
            double worst = 0.0;
            int n = 0;
            for_cells(g, 1, [&](int b, int t) {
                if (!(g.mask(b, t) & cell::Ghost)) return;
                double f[27], feq[27];
                field(g.cell_center(b, t), f);
                double rho = 0;
                Vec3 j{};
                for (int q = 0; q < vs.q; ++q) {
                    rho += f[q];
                    j += vs.dir(q) * f[q];
                }
                equilibrium(vs, rho, j / rho, feq);
                for (int q = 0; q < vs.q; ++q)
                    worst = std::max(worst, std::abs(s.cell(b, t)[q] - (feq[q] + scale * (f[q] - feq[q]))));
                ++n;
            });
            CHECK(n == (dim == 2 ? 4 * 12 : 8 * 56));
            CHECK(worst < 1e-13);
        }
    }
}

TEST_CASE("restriction averages children and rescales the non-equilibrium part") {
    ForestGrid g = init_forest({2, 1.0, 32}, 4, {true, true, false});
    refine(g, {4 + 8 * 4});
    LinkTable none;
    FlowConfig c = lattice_config(0.05);
    c.faces.fill(FaceBC::Periodic);
    Solver<double> s(g, none, c);
    s.initialize(1.0, {0, 0, 0});
    const VelocitySet& vs = VelocitySet::get(2);
    for_cells(g, 1, [&](int b, int t) {
        for (int q = 0; q < 9; ++q) s.cell(b, t)[q] = vs.w[q] * (1.0 + 0.01 * q + 0.001 * t + 0.0001 * b);
    });
    s.restrict_to(0);
    const int P = 4 + 8 * 4;
    const double ratio = 2 * s.tau(0) / s.tau(1);
    int checked = 0;
    for (int t = 0; t < 16; ++t) {
        if (!(g.mask(P, t) & cell::Interface)) continue;
        const Vec3i I = local_coords(t, 2);
        const int child = g.first_child[P] + I[0] / 2 + 2 * (I[1] / 2);
        double avg[9] = {};
        for (int s2 = 0; s2 < 4; ++s2) {
            const int tf = linear({(2 * I[0]) % 4 + (s2 & 1), (2 * I[1]) % 4 + (s2 >> 1), 0}, 4);
            for (int q = 0; q < 9; ++q) avg[q] += 0.25 * s.cell(child, tf)[q];
        }
        double rho = 0, feq[9];
        Vec3 j{};
        for (int q = 0; q < 9; ++q) {
            rho += avg[q];
            j += vs.dir(q) * avg[q];
        }
        equilibrium(vs, rho, j / rho, feq);
        for (int q = 0; q < 9; ++q) CHECK(s.cell(P, t)[q] == doctest::Approx(feq[q] + ratio * (avg[q] - feq[q])).epsilon(1e-13));
        ++checked;
    }
    CHECK(checked == 4);
}

TEST_CASE("wall forces") {
    SUBCASE("quiescent fluid exerts no force") {
        ForestGrid g = uniform(2, 32, {true, true, false});
        set_solid(g, [](const Vec3i& i) { return i[0] >= 9 && i[0] < 15 && i[1] >= 11 && i[1] < 14 && i[0] + i[1] < 26; });
        LinkTable lt = constant_links(g, 0.3);
        FlowConfig c = lattice_config(0.05);
        c.faces.fill(FaceBC::Periodic);
        Solver<double> s(g, lt, c);
        s.initialize(1.0, {0, 0, 0});
        for (int i = 0; i < 10; ++i) {
            s.step();
            CHECK(std::abs(s.force().x) < 1e-15);
            CHECK(std::abs(s.force().y) < 1e-15);
        }
    }
    SUBCASE("single solid cell in uniform flow takes twice the momentum density") {
        ForestGrid g = uniform(2, 16, {true, true, false});
        set_solid(g, [](const Vec3i& i) { return i[0] == 7 && i[1] == 9; });
        LinkTable none;
        FlowConfig c = lattice_config(0.05);
        c.faces.fill(FaceBC::Periodic);
        c.bc = WallScheme::SBB;
        c.rho_phys = 1.5;
        Solver<double> s(g, none, c);
        const Vec3 u{0.05, 0.02, 0};
        s.initialize(1.0, u);
        s.step();
        const double dx = g.dom.dx(0), dt = s.dt(0);
        const double conv = 1.5 * dx * dx * dx / (dt * dt);
        CHECK(s.force().x == doctest::Approx(2 * u.x * conv).epsilon(1e-12));
        CHECK(s.force().y == doctest::Approx(2 * u.y * conv).epsilon(1e-12));
    }
}

TEST_CASE("sinusoid fit and force metrics") {
    std::vector<double> t, y;
    for (int i = 0; i < 1000; ++i) {
        t.push_back(0.02 * i);
        y.push_back(0.3 + 0.7 * std::sin(2 * M_PI * 1.37 * t.back() + 0.4));
    }
    const auto fit = fit_sinusoid(t, y);
    REQUIRE(fit);
    CHECK(fit->frequency == doctest::Approx(1.37).epsilon(1e-7));
    CHECK(fit->amplitude == doctest::Approx(0.7).epsilon(1e-7));
    CHECK(fit->offset == doctest::Approx(0.3).epsilon(1e-7));
    CHECK(fit->residual < 1e-14);
    CHECK_FALSE(fit_sinusoid(t, std::vector<double>(1000, 2.0)));

    FlowConfig c;
    c.u_in = 2.0;
    c.d_s = 0.5;
    c.rho_phys = 1.0;
    std::vector<ForceSample> series;
    const double q = 0.5 * 1.0 * 4.0 * 0.5; // dynamic pressure times the 2D reference length
    for (std::size_t i = 0; i < t.size(); ++i)
        series.push_back({static_cast<long>(i), t[i], 1.4 * q, (0.1 + 0.3 * std::sin(2 * M_PI * 1.35 * t[i])) * q});
    const Metrics m = compute_metrics(series, c, 2);
    CHECK(m.cd_mean == doctest::Approx(1.4));
    CHECK(m.cl_amplitude == doctest::Approx(0.3).epsilon(1e-3));
    CHECK(m.cl_mean == doctest::Approx(0.1).epsilon(1e-3));
    REQUIRE(m.strouhal);
    CHECK(*m.strouhal == doctest::Approx(1.35 * 0.5 / 2.0).epsilon(1e-7));
    CHECK(reference_area(0.5, 3) == doctest::Approx(M_PI * 0.0625));
}
