#include "delaystab/msf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "delaystab/errors.hpp"
#include "delaystab/spectrum.hpp"

namespace delaystab {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
constexpr double kImagTol = 1e-9;
constexpr double kTangentTol = 1e-12;
constexpr int kNewtonCap = 100;
constexpr int kWindowSamples = 2001;

// Right edge +3 keeps the completeness guard affordable while covering every
// root that can flip the sign of Lambda_max on the default grids.
constexpr RootWindow kFieldWindow{-3.0, 3.0, 10.0};

void check_finite(double v, const char* name) {
    if (!std::isfinite(v)) throw InvalidParameterError(std::string(name) + " must be finite");
}

void check_gains(const GainVector& p0, const CouplingGainVector& pbar) {
    check_finite(p0.k0, "k0");
    check_finite(p0.h0, "h0");
    check_finite(p0.k0_tau, "k0_tau");
    check_finite(p0.h0_tau, "h0_tau");
    check_finite(pbar.k, "k");
    check_finite(pbar.h, "h");
    check_finite(pbar.k_tau, "k_tau");
    check_finite(pbar.h_tau, "h_tau");
}

void check_tau(double tau) {
    if (!std::isfinite(tau) || tau <= 0.0)
        throw InvalidParameterError("tau must be positive and finite");
}

void check_hypotheses(const GainVector& p0, const CouplingGainVector& pbar) {
    if (p0.k0_tau != 0.0 || p0.h0_tau != 0.0)
        throw TheoremHypothesisError("large-delay reduction requires k0_tau = h0_tau = 0");
    if (pbar.k != 0.0 || pbar.h != 0.0)
        throw TheoremHypothesisError("large-delay reduction requires k = h = 0");
    if (!(p0.k0 > 0.0)) throw TheoremHypothesisError("large-delay reduction requires k0 > 0");
    if (!(p0.h0 > 0.0)) throw TheoremHypothesisError("large-delay reduction requires h0 > 0");
    if (pbar.k_tau == 0.0)
        throw TheoremHypothesisError("large-delay reduction requires k_tau != 0");
}

double reduction_slope(const GainVector& p0, const CouplingGainVector& pbar) {
    return pbar.h_tau / pbar.k_tau - p0.h0 / p0.k0;
}

cplx boundary_lambda(double omega, const GainVector& p0, const CouplingGainVector& pbar,
                     double tau) {
    return lambda_of_mu(cplx(0.0, omega), p0, pbar, tau);
}

// Offset angle at a real self-intersection: the branches through
// lambda(i*omega_j) = lambda(-i*omega_j) are mirror images across the real
// axis, so the angle is twice the slope angle of the tangent at +omega_j,
// i.e. 2*arg(dlambda/domega) modulo 2*pi (line angle, orientation-free).
double crossing_angle(double omega, const GainVector& p0, const CouplingGainVector& pbar,
                      double tau) {
    const double delta = 0.1 / (tau * std::max(tau, 10.0));
    const cplx ahead = boundary_lambda(omega + delta, p0, pbar, tau);
    const cplx behind = boundary_lambda(omega - delta, p0, pbar, tau);
    const cplx tangent = (ahead - behind) / (2.0 * delta);
    if (std::abs(tangent) < kTangentTol)
        throw DegenerateTangentError("boundary tangent vanishes at omega = " +
                                     std::to_string(omega));
    double theta = std::fmod(2.0 * std::arg(tangent), kTwoPi);
    if (theta < 0.0) theta += kTwoPi;
    return theta;
}

// Zero of Im lambda(i*omega) near the j-th seed. Under the reduction
// hypotheses Im lambda(i*omega) has the sign of
//   g(w) = P(w) sin(w*tau) - Q(w) cos(w*tau),
//   P = (k_tau - h0 h_tau) w^2 - k0 k_tau,
//   Q = h_tau w^3 + (h0 k_tau - h_tau k0) w,
// solved by damped-free Newton with the analytic derivative.
double refine_intersection(const GainVector& p0, const CouplingGainVector& pbar, double tau,
                           int j, double slope) {
    const double a = pbar.k_tau - p0.h0 * pbar.h_tau;
    const double b = -p0.k0 * pbar.k_tau;
    const double c = pbar.h_tau;
    const double d = p0.h0 * pbar.k_tau - pbar.h_tau * p0.k0;
    const auto g_of = [&](double w, double* dg) {
        const double s = std::sin(w * tau);
        const double co = std::cos(w * tau);
        const double P = a * w * w + b;
        const double Q = (c * w * w + d) * w;
        if (dg) *dg = (2.0 * a * w + Q * tau) * s + (P * tau - (3.0 * c * w * w + d)) * co;
        return P * s - Q * co;
    };
    const double seed = (kPi * static_cast<double>(j) / tau) * (1.0 + slope / tau);

    // Scan the branch window Omega in (j*pi - pi/2, j*pi + pi/2) for the
    // sign change of g closest to the seed; the cos factor pins g to
    // +/-P at the window edges, so interior crossings are bracketed.
    const double lo0 = kPi * (static_cast<double>(j) - 0.5) / tau;
    const double hi0 = kPi * (static_cast<double>(j) + 0.5) / tau;
    constexpr int kScan = 128;
    double wl = 0.0, wh = 0.0, gl = 0.0;
    bool bracketed = false;
    double best = std::numeric_limits<double>::infinity();
    double prev_w = 0.0, prev_g = 0.0;
    for (int i = 0; i <= kScan; ++i) {
        const double w = lo0 + (hi0 - lo0) * (0.5 + static_cast<double>(i)) /
                                   (static_cast<double>(kScan) + 1.0);
        const double g = g_of(w, nullptr);
        if (g == 0.0) return w;
        if (i > 0 && std::signbit(g) != std::signbit(prev_g)) {
            const double mid = 0.5 * (prev_w + w);
            if (std::abs(mid - seed) < best) {
                best = std::abs(mid - seed);
                wl = prev_w;
                gl = prev_g;
                wh = w;
                bracketed = true;
            }
        }
        prev_w = w;
        prev_g = g;
    }
    if (!bracketed)
        throw IntersectionNotFoundError("Im lambda(i*omega) has no zero near branch j = " +
                                        std::to_string(j));

    // Safeguarded Newton: steps leaving the bracket fall back to bisection.
    double w = seed > wl && seed < wh ? seed : 0.5 * (wl + wh);
    for (int it = 0; it < kNewtonCap; ++it) {
        double dg = 0.0;
        const double g = g_of(w, &dg);
        if (g == 0.0) return w;
        if (std::signbit(g) == std::signbit(gl)) {
            wl = w;
            gl = g;
        } else {
            wh = w;
        }
        double next = dg != 0.0 && std::isfinite(dg) ? w - g / dg : 0.5 * (wl + wh);
        if (!(next > wl) || !(next < wh)) next = 0.5 * (wl + wh);
        const double step = std::abs(next - w);
        w = next;
        if (step <= 1e-15 * (1.0 + std::abs(w)) || wh - wl <= 4e-16 * (1.0 + std::abs(w)))
            return w;
    }
    throw IntersectionNotFoundError("Im lambda(i*omega) = 0 refinement did not converge for j = " +
                                    std::to_string(j));
}

SelfIntersection make_intersection(const GainVector& p0, const CouplingGainVector& pbar,
                                   double tau, int j, double slope) {
    SelfIntersection point;
    point.j = j;
    point.omega = j == 0 ? 0.0 : refine_intersection(p0, pbar, tau, j, slope);
    const cplx lambda = boundary_lambda(point.omega, p0, pbar, tau);
    if (std::abs(lambda.imag()) > kImagTol)
        throw IntersectionNotFoundError("refined point is not real for j = " + std::to_string(j));
    point.lambda = lambda.real();
    point.theta = crossing_angle(point.omega, p0, pbar, tau);
    return point;
}

}  // namespace

MsfField msf_field(const GainVector& p0, const CouplingGainVector& pbar, double tau,
                   const GridSpec& grid) {
    check_gains(p0, pbar);
    check_tau(tau);
    check_finite(grid.re_min, "re_min");
    check_finite(grid.re_max, "re_max");
    check_finite(grid.im_min, "im_min");
    check_finite(grid.im_max, "im_max");
    check_finite(grid.spacing, "spacing");
    if (grid.spacing <= 0.0) throw InvalidParameterError("grid spacing must be positive");
    if (grid.re_max <= grid.re_min || grid.im_max <= grid.im_min)
        throw InvalidParameterError("grid extents must be increasing");

    MsfField field;
    field.grid = grid;
    field.nx = static_cast<std::size_t>((grid.re_max - grid.re_min) / grid.spacing + 1e-9) + 1;
    field.ny = static_cast<std::size_t>((grid.im_max - grid.im_min) / grid.spacing + 1e-9) + 1;
    if (field.nx < 2 || field.ny < 2)
        throw InvalidParameterError("grid needs at least two nodes per axis");
    const double re_last = grid.re_min + static_cast<double>(field.nx - 1) * grid.spacing;
    const double im_last = grid.im_min + static_cast<double>(field.ny - 1) * grid.spacing;
    if (grid.re_min > 0.0 || re_last < 0.0 || grid.im_min > 0.0 || im_last < 0.0)
        throw InvalidParameterError("grid must cover lambda = 0");

    const std::size_t n = field.nx * field.ny;
    field.values.assign(n, std::numeric_limits<double>::quiet_NaN());
    field.valid.assign(n, 0);
    field.region.assign(n, 0);

    for (std::size_t iy = 0; iy < field.ny; ++iy) {
        for (std::size_t ix = 0; ix < field.nx; ++ix) {
            const std::size_t at = field.index(ix, iy);
            try {
                const ModeSystem mode = mode_system(p0, pbar, field.node(ix, iy), tau);
                const SpectrumResult spectrum = char_roots(mode, kFieldWindow);
                double peak = -std::numeric_limits<double>::infinity();
                for (const CharacteristicRoot& root : spectrum.roots)
                    peak = std::max(peak, root.mu.real());
                field.values[at] = peak;
                field.valid[at] = 1;
            } catch (const NumericalFailureError&) {
            }
        }
    }

    const std::size_t ix0 = static_cast<std::size_t>(
        std::llround((0.0 - grid.re_min) / grid.spacing));
    const std::size_t iy0 = static_cast<std::size_t>(
        std::llround((0.0 - grid.im_min) / grid.spacing));
    const std::size_t origin = field.index(std::min(ix0, field.nx - 1), std::min(iy0, field.ny - 1));
    if (!field.valid[origin] || !(field.values[origin] < 0.0)) {
        field.no_stable_seed = true;
    } else {
        std::vector<std::size_t> stack{origin};
        field.region[origin] = 1;
        while (!stack.empty()) {
            const std::size_t at = stack.back();
            stack.pop_back();
            const std::size_t ix = at % field.nx;
            const std::size_t iy = at / field.nx;
            const std::size_t next[4] = {
                ix > 0 ? at - 1 : at,
                ix + 1 < field.nx ? at + 1 : at,
                iy > 0 ? at - field.nx : at,
                iy + 1 < field.ny ? at + field.nx : at,
            };
            for (std::size_t to : next) {
                if (to == at || field.region[to] || !field.valid[to]) continue;
                if (!(field.values[to] < 0.0)) continue;
                field.region[to] = 1;
                stack.push_back(to);
            }
        }
    }

    try {
        field.boundary = lambda_plane_boundary(p0, pbar, tau, default_omega_grid(tau));
    } catch (const EmptyCurveError&) {
        field.boundary = ParametricCurve{CurveKind::LambdaPlaneBoundary, 0.0, {}, {}};
    }
    return field;
}

double field_value(const MsfField& field, cplx lambda) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (field.nx < 2 || field.ny < 2) return nan;
    double fx = (lambda.real() - field.grid.re_min) / field.grid.spacing;
    double fy = (lambda.imag() - field.grid.im_min) / field.grid.spacing;
    const double x_end = static_cast<double>(field.nx - 1);
    const double y_end = static_cast<double>(field.ny - 1);
    if (fx > x_end && fx < x_end + 1e-9) fx = x_end;
    if (fy > y_end && fy < y_end + 1e-9) fy = y_end;
    if (!(fx >= 0.0) || !(fy >= 0.0) || fx > x_end || fy > y_end) return nan;
    const std::size_t ix = std::min(static_cast<std::size_t>(fx), field.nx - 2);
    const std::size_t iy = std::min(static_cast<std::size_t>(fy), field.ny - 2);
    const double ux = fx - static_cast<double>(ix);
    const double uy = fy - static_cast<double>(iy);
    const std::size_t c00 = field.index(ix, iy);
    const std::size_t c10 = field.index(ix + 1, iy);
    const std::size_t c01 = field.index(ix, iy + 1);
    const std::size_t c11 = field.index(ix + 1, iy + 1);
    if (!field.valid[c00] || !field.valid[c10] || !field.valid[c01] || !field.valid[c11])
        return nan;
    return (1.0 - uy) * ((1.0 - ux) * field.values[c00] + ux * field.values[c10]) +
           uy * ((1.0 - ux) * field.values[c01] + ux * field.values[c11]);
}

AsymptoticCurve large_delay_asymptote(const GainVector& p0, const CouplingGainVector& pbar,
                                      double tau, double omega_tau_window) {
    check_gains(p0, pbar);
    check_tau(tau);
    check_hypotheses(p0, pbar);
    if (!std::isfinite(omega_tau_window) || omega_tau_window <= 0.0)
        throw InvalidParameterError("omega_tau_window must be positive and finite");

    AsymptoticCurve curve;
    curve.lambda0 = cplx(-p0.k0 / pbar.k_tau, 0.0);
    curve.slope = reduction_slope(p0, pbar);
    curve.omega_tau_window = omega_tau_window;

    double deviation = 0.0;
    for (int i = 0; i < kWindowSamples; ++i) {
        const double t = static_cast<double>(i) / (kWindowSamples - 1);
        const double omega = omega_tau_window * (2.0 * t - 1.0) / tau;
        const cplx exact = boundary_lambda(omega, p0, pbar, tau);
        deviation = std::max(deviation, std::abs(exact - asymptotic_lambda(curve, omega, tau)));
    }
    curve.c_estimate = tau * tau * deviation;

    const int j_max = static_cast<int>(omega_tau_window / kPi + 1e-9);
    for (int j = 0; j <= j_max; ++j)
        curve.intersections.push_back(make_intersection(p0, pbar, tau, j, curve.slope));
    return curve;
}

cplx asymptotic_lambda(const AsymptoticCurve& curve, double omega, double tau) {
    check_tau(tau);
    check_finite(omega, "omega");
    const cplx phase = std::exp(cplx(0.0, omega * tau));
    return curve.lambda0 * phase * (1.0 - cplx(0.0, 1.0) * omega * curve.slope);
}

ParametricCurve asymptote_boundary(const AsymptoticCurve& curve, double tau,
                                   const std::vector<double>& omega_grid) {
    check_tau(tau);
    if (omega_grid.empty()) throw InvalidParameterError("omega grid must be nonempty");
    ParametricCurve out;
    out.kind = CurveKind::LambdaPlaneBoundary;
    out.level = 0.0;
    double previous = -std::numeric_limits<double>::infinity();
    for (double omega : omega_grid) {
        if (!std::isfinite(omega)) throw InvalidParameterError("omega grid must be finite");
        if (omega <= previous)
            throw InvalidParameterError("omega grid must be strictly increasing");
        previous = omega;
        out.samples.push_back(CurveSample{omega, asymptotic_lambda(curve, omega, tau), 0});
    }
    return out;
}

std::vector<SelfIntersection> self_intersections(const GainVector& p0,
                                                 const CouplingGainVector& pbar, double tau,
                                                 int j_max) {
    check_gains(p0, pbar);
    check_tau(tau);
    check_hypotheses(p0, pbar);
    if (j_max < 0) throw InvalidParameterError("j_max must be nonnegative");
    const double slope = reduction_slope(p0, pbar);
    std::vector<SelfIntersection> points;
    points.reserve(static_cast<std::size_t>(j_max) + 1);
    for (int j = 0; j <= j_max; ++j) points.push_back(make_intersection(p0, pbar, tau, j, slope));
    return points;
}

std::vector<AngleReport> intersection_angles(const AsymptoticCurve& curve, double tau) {
    check_tau(tau);
    std::vector<AngleReport> reports;
    reports.reserve(curve.intersections.size());
    for (const SelfIntersection& point : curve.intersections) {
        AngleReport report;
        report.j = point.j;
        report.numeric = point.theta;
        report.asymptotic = kPi + kTwoPi * static_cast<double>(point.j) * curve.slope / tau;
        reports.push_back(report);
    }
    return reports;
}

double circle_convergence_metric(const GainVector& p0, const CouplingGainVector& pbar,
                                 double tau) {
    check_gains(p0, pbar);
    check_tau(tau);
    check_hypotheses(p0, pbar);
    const double radius = std::abs(p0.k0 / pbar.k_tau);
    double metric = 0.0;
    for (int i = 0; i < kWindowSamples; ++i) {
        const double t = static_cast<double>(i) / (kWindowSamples - 1);
        const double omega = kTwoPi * (2.0 * t - 1.0) / tau;
        const cplx exact = boundary_lambda(omega, p0, pbar, tau);
        metric = std::max(metric, std::abs(std::abs(exact) - radius));
    }
    return metric;
}

std::string to_csv(const MsfField& field) {
    std::string out = "re_lambda,im_lambda,lambda_max,in_region\n";
    char row[128];
    for (std::size_t iy = 0; iy < field.ny; ++iy) {
        for (std::size_t ix = 0; ix < field.nx; ++ix) {
            const std::size_t at = field.index(ix, iy);
            const cplx lambda = field.node(ix, iy);
            std::snprintf(row, sizeof row, "%.17g,%.17g,%.17g,%d\n", lambda.real(), lambda.imag(),
                          field.values[at], field.region[at] ? 1 : 0);
            out += row;
        }
    }
    return out;
}

}  // namespace delaystab
