#include <cmath>
#include <numeric>

#include <fftw3.h>

#include "fvx/lbm.hpp"

namespace fvx {

namespace {

struct LsFit {
    double a, b, c, residual;
};

// y ≈ a sin(wt) + b cos(wt) + c by the normal equations.
LsFit ls_sine(const std::vector<double>& t, const std::vector<double>& y, double freq) {
    const double w = 2.0 * M_PI * freq;
    double m[3][4] = {};
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double r[3] = {std::sin(w * t[i]), std::cos(w * t[i]), 1.0};
        for (int p = 0; p < 3; ++p) {
            for (int q = 0; q < 3; ++q) m[p][q] += r[p] * r[q];
            m[p][3] += r[p] * y[i];
        }
    }
    for (int p = 0; p < 3; ++p) {
        int piv = p;
        for (int q = p + 1; q < 3; ++q)
            if (std::abs(m[q][p]) > std::abs(m[piv][p])) piv = q;
        std::swap(m[p], m[piv]);
        if (m[p][p] == 0.0) return {0, 0, 0, INFINITY};
        for (int q = 0; q < 3; ++q) {
            if (q == p) continue;
            const double s = m[q][p] / m[p][p];
            for (int k = p; k < 4; ++k) m[q][k] -= s * m[p][k];
        }
    }
    LsFit f{m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2], 0.0};
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double e = f.a * std::sin(w * t[i]) + f.b * std::cos(w * t[i]) + f.c - y[i];
        f.residual += e * e;
    }
    f.residual /= static_cast<double>(t.size());
    return f;
}

} // namespace

std::optional<SineFit> fit_sinusoid(const std::vector<double>& t, const std::vector<double>& y) {
    const std::size_t n = y.size();
    if (n < 8 || t.size() != n) return std::nullopt;
    const double span = t.back() - t.front();
    if (!(span > 0)) return std::nullopt;
    const double dt = span / static_cast<double>(n - 1);
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);

    std::vector<double> in(n);
    for (std::size_t i = 0; i < n; ++i) in[i] = y[i] - mean;
    std::vector<fftw_complex> out(n / 2 + 1);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), out.data(), FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);

    std::size_t peak = 0;
    double best = 0.0, total = 0.0;
    for (std::size_t k = 1; k <= n / 2; ++k) {
        const double p = out[k][0] * out[k][0] + out[k][1] * out[k][1];
        total += p;
        if (p > best) {
            best = p;
            peak = k;
        }
    }
    // fewer than two periods in the window, or no energy at all
    if (peak < 2 || !(best > 0) || best < 1e-24 * (1.0 + mean * mean) * n * n) return std::nullopt;

    const double T = dt * static_cast<double>(n);
    double lo = (peak - 1.0) / T, hi = (peak + 1.0) / T;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
    double r1 = ls_sine(t, y, x1).residual, r2 = ls_sine(t, y, x2).residual;
    for (int it = 0; it < 100 && hi - lo > 1e-12 * hi; ++it) {
        if (r1 < r2) {
            hi = x2;
            x2 = x1;
            r2 = r1;
            x1 = hi - g * (hi - lo);
            r1 = ls_sine(t, y, x1).residual;
        } else {
            lo = x1;
            x1 = x2;
            r1 = r2;
            x2 = lo + g * (hi - lo);
            r2 = ls_sine(t, y, x2).residual;
        }
    }
    const double f = 0.5 * (lo + hi);
    const LsFit fit = ls_sine(t, y, f);
    return SineFit{f, std::hypot(fit.a, fit.b), std::atan2(fit.b, fit.a), fit.c, fit.residual};
}

Metrics compute_metrics(const std::vector<ForceSample>& series, const FlowConfig& cfg, int dim) {
    Metrics m;
    if (series.empty()) return m;
    const double scale = 2.0 / (cfg.rho_phys * cfg.u_in * cfg.u_in * reference_area(cfg.d_s, dim));
    std::vector<double> t, cl;
    double cd = 0.0;
    for (const auto& s : series) {
        cd += s.fx * scale;
        t.push_back(s.time);
        cl.push_back(s.fh * scale);
    }
    const double n = static_cast<double>(series.size());
    m.cd_mean = cd / n;
    m.cl_mean = std::accumulate(cl.begin(), cl.end(), 0.0) / n;
    double var = 0.0;
    for (double v : cl) var += (v - m.cl_mean) * (v - m.cl_mean);
    m.cl_rms = std::sqrt(var / n);
    m.cl_amplitude = std::sqrt(2.0) * m.cl_rms;
    if (auto fit = fit_sinusoid(t, cl)) {
        m.frequency = fit->frequency;
        m.strouhal = fit->frequency * cfg.d_s / cfg.u_in;
    }
    return m;
}

} // namespace fvx
