#include "delaystab/bifurcation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>

#include "delaystab/errors.hpp"
#include "delaystab/spectrum.hpp"

namespace delaystab {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kBackSubTol = 1e-8;
constexpr double kRoundTripTol = 1e-10;
constexpr double kPoleTol = 1e-6;
constexpr double kMaxSpacing = 0.05;
constexpr double kRefineRadius = 50.0;
constexpr double kFarRelSpacing = 0.5;
constexpr int kMaxRefineDepth = 40;
constexpr int kRefineBudget = 1 << 16;

bool finite(cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

void check_tau_positive(double tau) {
    if (!std::isfinite(tau) || tau <= 0.0) {
        throw InvalidParameterError("tau must be positive and finite");
    }
}

void check_tau_nonnegative(double tau) {
    if (!std::isfinite(tau) || tau < 0.0) {
        throw InvalidParameterError("tau must be nonnegative and finite");
    }
}

void check_finite(const GainVector& g) {
    if (!std::isfinite(g.k0) || !std::isfinite(g.h0) || !std::isfinite(g.k0_tau) ||
        !std::isfinite(g.h0_tau)) {
        throw InvalidParameterError("leader gains must be finite");
    }
}

void check_finite(const CouplingGainVector& g) {
    if (!std::isfinite(g.k) || !std::isfinite(g.h) || !std::isfinite(g.k_tau) ||
        !std::isfinite(g.h_tau)) {
        throw InvalidParameterError("coupling gains must be finite");
    }
}

void check_grid(const std::vector<double>& grid) {
    if (grid.empty()) {
        throw InvalidParameterError("omega_grid is empty");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!std::isfinite(grid[i])) {
            throw InvalidParameterError("omega_grid entries must be finite");
        }
        if (i > 0 && !(grid[i] > grid[i - 1])) {
            throw InvalidParameterError("omega_grid must be strictly increasing");
        }
    }
}

/// Close enough that no refinement is needed. Far outside the working radius
/// only a relative jump forces refinement, so branches escaping to infinity
/// terminate at the pole drop instead of chasing 0.05 spacing forever.
bool spacing_ok(cplx a, cplx b) {
    double d = std::abs(b - a);
    if (d < kMaxSpacing) {
        return true;
    }
    double m = std::min(std::abs(a), std::abs(b));
    if (m <= kRefineRadius) {
        return false;
    }
    return d < kFarRelSpacing * m;
}

struct Tracer {
    ParametricCurve curve;
    int segment = 0;
    bool dirty = false;

    void emit(double omega, cplx point) {
        curve.samples.push_back(CurveSample{omega, point, segment});
        dirty = true;
    }
    void cut() {
        if (dirty) {
            ++segment;
            dirty = false;
        }
    }
    void gap(double omega) {
        curve.gaps.push_back(omega);
        cut();
    }
};

template <typename Eval>
void refine(Tracer& t, const Eval& eval, double wa, cplx pa, double wb, cplx pb, int depth,
            int& budget) {
    if (spacing_ok(pa, pb)) {
        return;
    }
    double wm = 0.5 * (wa + wb);
    if (depth <= 0 || budget <= 0 || !(wm > wa) || !(wm < wb)) {
        t.cut();
        return;
    }
    std::optional<cplx> pm = eval(wm);
    if (!pm) {
        t.gap(wm);
        return;
    }
    --budget;
    refine(t, eval, wa, pa, wm, *pm, depth - 1, budget);
    t.emit(wm, *pm);
    refine(t, eval, wm, *pm, wb, pb, depth - 1, budget);
}

/// Walk the grid, drop skipped samples as recorded gaps, and bisect adjacent
/// pairs until consecutive points in one segment are closer than kMaxSpacing.
template <typename Eval>
ParametricCurve trace(CurveKind kind, double level, const std::vector<double>& grid,
                      const Eval& eval) {
    check_grid(grid);
    Tracer t;
    t.curve.kind = kind;
    t.curve.level = level;
    bool have_prev = false;
    double wp = 0.0;
    cplx pp{0.0, 0.0};
    for (double w : grid) {
        std::optional<cplx> p = eval(w);
        if (!p) {
            t.gap(w);
            have_prev = false;
            continue;
        }
        if (have_prev) {
            int budget = kRefineBudget;
            refine(t, eval, wp, pp, w, *p, kMaxRefineDepth, budget);
        }
        t.emit(w, *p);
        wp = w;
        pp = *p;
        have_prev = true;
    }
    if (t.curve.samples.empty()) {
        throw EmptyCurveError("every omega sample was skipped, curve is empty");
    }
    return t.curve;
}

/// Independent check of an emitted boundary point against the characteristic
/// determinant at mu = i*omega.
void verify_boundary_point(const GainVector& g, const CouplingGainVector& pbar, cplx lambda,
                           double tau, double omega, double point_scale, const char* what) {
    ModeSystem mode = mode_system(g, pbar, lambda, tau);
    double res = std::abs(char_value(cplx(0.0, omega), mode));
    double s = 1.0 + std::abs(omega);
    double bound = kBackSubTol + 1e-12 * (1.0 + point_scale) * s * s;
    if (!(res <= bound)) {
        throw InternalConsistencyError(std::string(what) +
                                       ": back-substituted characteristic residual " +
                                       std::to_string(res) + " at omega " + std::to_string(omega));
    }
}

struct NumDen {
    cplx num;
    cplx den;
};

NumDen lambda_num_den(cplx mu, const GainVector& p0, const CouplingGainVector& pbar, double tau) {
    cplx e = std::exp(-mu * tau);
    cplx num = mu * mu + p0.h0 * mu + p0.k0 + (p0.h0_tau * mu + p0.k0_tau) * e;
    cplx den = pbar.h * mu + pbar.k + (pbar.h_tau * mu + pbar.k_tau) * e;
    return NumDen{num, den};
}

}  // namespace

std::vector<double> default_omega_grid(double tau) {
    check_tau_positive(tau);
    double step = std::min(0.25 / tau, 0.01);
    double half_span = 4.0 * std::max(4.0 * kPi / tau, 5.0);
    auto n = static_cast<long long>(std::ceil(half_span / step - 1e-9));
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(2 * n + 1));
    for (long long j = -n; j <= n; ++j) {
        grid.push_back(static_cast<double>(j) * step);
    }
    return grid;
}

ParametricCurve k0h0_boundary(double k0_tau, double h0_tau, double tau,
                              const std::vector<double>& omega_grid) {
    if (!std::isfinite(k0_tau) || !std::isfinite(h0_tau)) {
        throw InvalidParameterError("delayed gains must be finite");
    }
    check_tau_positive(tau);
    auto eval = [&](double w) -> std::optional<cplx> {
        if (w == 0.0) {
            return std::nullopt;
        }
        double st = std::sin(w * tau);
        double ct = std::cos(w * tau);
        double k0 = w * w - h0_tau * w * st - k0_tau * ct;
        double h0 = (k0_tau / w) * st - h0_tau * ct;
        if (!std::isfinite(k0) || !std::isfinite(h0)) {
            return std::nullopt;
        }
        cplx point{k0, h0};
        verify_boundary_point(GainVector{k0, h0, k0_tau, h0_tau}, CouplingGainVector{},
                              cplx(0.0, 0.0), tau, w, std::abs(point), "k0h0_boundary");
        return point;
    };
    return trace(CurveKind::K0H0, 0.0, omega_grid, eval);
}

ParametricCurve lambda_h0_boundary(const GainVector& p0_partial, const CouplingGainVector& pbar,
                                   double tau, const std::vector<double>& omega_grid) {
    check_finite(p0_partial);
    check_finite(pbar);
    check_tau_positive(tau);
    auto eval = [&](double w) -> std::optional<cplx> {
        if (w == 0.0) {
            return std::nullopt;
        }
        double st = std::sin(w * tau);
        double ct = std::cos(w * tau);
        double den = pbar.k + pbar.h_tau * w * st + pbar.k_tau * ct;
        if (std::abs(den) < kPoleTol) {
            return std::nullopt;
        }
        double lam =
            (w * w - p0_partial.k0 - p0_partial.h0_tau * w * st - p0_partial.k0_tau * ct) / den;
        double h0 = (st / w) * (p0_partial.k0_tau + lam * pbar.k_tau) -
                    (p0_partial.h0_tau + lam * pbar.h_tau) * ct - lam * pbar.h;
        if (!std::isfinite(lam) || !std::isfinite(h0)) {
            return std::nullopt;
        }
        cplx point{lam, h0};
        GainVector g{p0_partial.k0, h0, p0_partial.k0_tau, p0_partial.h0_tau};
        verify_boundary_point(g, pbar, cplx(lam, 0.0), tau, w, std::abs(point),
                              "lambda_h0_boundary");
        return point;
    };
    return trace(CurveKind::LambdaH0, 0.0, omega_grid, eval);
}

cplx lambda_of_mu(cplx mu, const GainVector& p0, const CouplingGainVector& pbar, double tau) {
    if (!finite(mu)) {
        throw InvalidParameterError("mu must be finite");
    }
    check_tau_nonnegative(tau);
    check_finite(p0);
    check_finite(pbar);
    NumDen nd = lambda_num_den(mu, p0, pbar, tau);
    if (!finite(nd.num) || !finite(nd.den)) {
        throw NumericalFailureError("characteristic terms overflow at this mu");
    }
    if (std::abs(nd.den) < kPoleTol) {
        throw PoleOfLambdaError("mode-number denominator vanishes at mu");
    }
    cplx lam = -nd.num / nd.den;
    ModeSystem mode = mode_system(p0, pbar, lam, tau);
    double res = std::abs(char_value(mu, mode));
    double bound = (kRoundTripTol + 1e-13 * (1.0 + std::norm(mu))) * (1.0 + std::abs(lam));
    if (!(res <= bound)) {
        throw NumericalFailureError("lambda(mu) round-trip residual " + std::to_string(res) +
                                    " exceeds bound");
    }
    return lam;
}

ParametricCurve contour_lines(double c, const GainVector& p0, const CouplingGainVector& pbar,
                              double tau, const std::vector<double>& omega_grid) {
    if (!std::isfinite(c)) {
        throw InvalidParameterError("contour level must be finite");
    }
    check_tau_nonnegative(tau);
    check_finite(p0);
    check_finite(pbar);
    auto eval = [&](double w) -> std::optional<cplx> {
        try {
            return lambda_of_mu(cplx(c, w), p0, pbar, tau);
        } catch (const PoleOfLambdaError&) {
            return std::nullopt;
        }
    };
    CurveKind kind = c == 0.0 ? CurveKind::LambdaPlaneBoundary : CurveKind::LambdaPlaneContour;
    return trace(kind, c, omega_grid, eval);
}

ParametricCurve lambda_plane_boundary(const GainVector& p0, const CouplingGainVector& pbar,
                                      double tau, const std::vector<double>& omega_grid) {
    return contour_lines(0.0, p0, pbar, tau, omega_grid);
}

std::string to_csv(const ParametricCurve& curve) {
    const char* header = "omega,re_point,im_point,level,segment_id\n";
    if (curve.kind == CurveKind::K0H0) {
        header = "omega,k0,h0,level,segment_id\n";
    } else if (curve.kind == CurveKind::LambdaH0) {
        header = "omega,lambda,h0,level,segment_id\n";
    }
    std::string out(header);
    out.reserve(out.size() + curve.samples.size() * 80);
    char buf[128];
    for (const CurveSample& s : curve.samples) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%d\n", s.omega, s.point.real(),
                      s.point.imag(), curve.level, s.segment);
        out += buf;
    }
    return out;
}

}  // namespace delaystab
