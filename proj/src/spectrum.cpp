#include "delaystab/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Eigenvalues>

#include "delaystab/errors.hpp"

namespace delaystab {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
constexpr double kResidualFactor = 1e-10;
constexpr double kBackwardTol = 1e-13;
constexpr double kDedupTol = 1e-8;
constexpr double kPositionErrCap = 1e-4;
constexpr double kScaledExponent = 600.0;
constexpr int kMaxWalkDepth = 48;
constexpr long kWalkBudget = 4'000'000;

bool finite(cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

// ---- compensated complex multiply-add ---------------------------------------
// a*mu + b with one rounding per component, so the delayed channel stays
// accurate near its zero even when multiplied by a huge exponential.

struct Acc {
    double s = 0.0;
    double c = 0.0;
    void add(double x) {
        double t = s + x;
        if (std::abs(s) >= std::abs(x)) {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    [[nodiscard]] double value() const { return s + c; }
};

void acc_prod(Acc& acc, double x, double y) {
    double p = x * y;
    acc.add(p);
    acc.add(std::fma(x, y, -p));
}

cplx fused_linear(cplx a, cplx mu, cplx b) {
    Acc re;
    Acc im;
    re.add(b.real());
    acc_prod(re, a.real(), mu.real());
    acc_prod(re, -a.imag(), mu.imag());
    im.add(b.imag());
    acc_prod(im, a.real(), mu.imag());
    acc_prod(im, a.imag(), mu.real());
    return {re.value(), im.value()};
}

// ---- quadratics and small eigenproblems --------------------------------------

void quadratic_roots(cplx b, cplx c, std::vector<cplx>& out) {
    cplx disc = std::sqrt(b * b - 4.0 * c);
    cplx bp = (std::real(std::conj(b) * disc) >= 0.0) ? b + disc : b - disc;
    if (std::abs(bp) == 0.0) {
        out.push_back(-0.5 * b);
        out.push_back(-0.5 * b);
        return;
    }
    cplx r1 = -0.5 * bp;
    out.push_back(r1);
    out.push_back(c / r1);
}

std::vector<cplx> matrix_eigenvalues(const Eigen::MatrixXcd& m) {
    std::vector<cplx> out;
    const auto n = m.rows();
    if (n == 1) {
        out.push_back(m(0, 0));
        return out;
    }
    if (n == 2) {
        quadratic_roots(-(m(0, 0) + m(1, 1)), m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0), out);
        return out;
    }
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(m, false);
    if (es.info() != Eigen::Success) {
        throw NumericalFailureError("eigenvalue solve failed");
    }
    out.assign(es.eigenvalues().data(), es.eigenvalues().data() + n);
    return out;
}

// ---- characteristic function --------------------------------------------------

struct ScalarChar {
    cplx kappa;
    cplx eta;
    cplx kappa_tau;
    cplx eta_tau;
    double tau = 0.0;
};

struct PhasePoint {
    double log_abs;
    double phase;
};

class CharFn {
  public:
    explicit CharFn(const DelaySystem& sys) : sys_(&sys), dim_(static_cast<int>(sys.A.rows())) {
        real_ = sys.A.imag().cwiseAbs().maxCoeff() == 0.0 && sys.B.imag().cwiseAbs().maxCoeff() == 0.0;
        b_zero_ = sys.B.cwiseAbs().maxCoeff() == 0.0;
        const auto& a = sys.A;
        const auto& b = sys.B;
        if (dim_ == 2 && a(0, 0) == cplx(0.0) && a(0, 1) == cplx(1.0) && b(0, 0) == cplx(0.0) &&
            b(0, 1) == cplx(0.0)) {
            scalar_ = ScalarChar{-a(1, 0), -a(1, 1), -b(1, 0), -b(1, 1), sys.tau};
        }
        if (dim_ > 0) {
            id_ = Eigen::MatrixXcd::Identity(dim_, dim_);
        }
    }

    [[nodiscard]] int dim() const { return dim_; }
    [[nodiscard]] double tau() const { return sys_->tau; }
    [[nodiscard]] bool real_coefficients() const { return real_; }
    [[nodiscard]] bool delay_free() const { return b_zero_ || sys_->tau == 0.0; }
    [[nodiscard]] const ScalarChar* scalar() const { return scalar_ ? &*scalar_ : nullptr; }
    [[nodiscard]] const DelaySystem& system() const { return *sys_; }

    [[nodiscard]] cplx value(cplx mu) const {
        if (scalar_) {
            const auto& s = *scalar_;
            cplx q = (mu + s.eta) * mu + s.kappa;
            cplx ell = fused_linear(s.eta_tau, mu, s.kappa_tau);
            cplx z = -mu * s.tau;
            if (z.real() <= kScaledExponent) {
                return q + ell * std::exp(z);
            }
            return (q * std::exp(-z) + ell) * std::exp(z);
        }
        cplx e = exponential(mu);
        Eigen::MatrixXcd delta = mu * id_ - sys_->A - e * sys_->B;
        return Eigen::PartialPivLU<Eigen::MatrixXcd>(delta).determinant();
    }

    [[nodiscard]] PhasePoint phase_point(cplx mu) const {
        if (scalar_) {
            const auto& s = *scalar_;
            cplx q = (mu + s.eta) * mu + s.kappa;
            cplx ell = fused_linear(s.eta_tau, mu, s.kappa_tau);
            cplx z = -mu * s.tau;
            if (z.real() <= kScaledExponent) {
                cplx f = q + ell * std::exp(z);
                return {std::log(std::abs(f)), std::arg(f)};
            }
            cplx g = q * std::exp(-z) + ell;
            return {std::log(std::abs(g)) + z.real(), std::arg(g) + z.imag()};
        }
        cplx e = exponential(mu);
        Eigen::MatrixXcd delta = mu * id_ - sys_->A - e * sys_->B;
        Eigen::PartialPivLU<Eigen::MatrixXcd> lu(delta);
        double log_abs = 0.0;
        double phase = lu.permutationP().determinant() < 0 ? kPi : 0.0;
        for (int i = 0; i < dim_; ++i) {
            cplx u = lu.matrixLU()(i, i);
            log_abs += std::log(std::abs(u));
            phase += std::arg(u);
        }
        return {log_abs, phase};
    }

    [[nodiscard]] std::optional<cplx> newton_step(cplx mu) const {
        cplx f;
        cplx df;
        if (scalar_) {
            const auto& s = *scalar_;
            cplx q = (mu + s.eta) * mu + s.kappa;
            cplx ell = fused_linear(s.eta_tau, mu, s.kappa_tau);
            cplx z = -mu * s.tau;
            if (z.real() <= kScaledExponent) {
                cplx e = std::exp(z);
                f = q + ell * e;
                df = 2.0 * mu + s.eta + e * (s.eta_tau - s.tau * ell);
            } else {
                cplx einv = std::exp(-z);
                f = q * einv + ell;
                df = (2.0 * mu + s.eta) * einv + (s.eta_tau - s.tau * ell);
            }
        } else {
            cplx e = exponential(mu);
            Eigen::MatrixXcd delta = mu * id_ - sys_->A - e * sys_->B;
            Eigen::PartialPivLU<Eigen::MatrixXcd> lu(delta);
            Eigen::MatrixXcd dprime = id_ + (sys_->tau * e) * sys_->B;
            cplx tr = lu.solve(dprime).trace();
            if (!finite(tr) || std::abs(tr) == 0.0) {
                return std::nullopt;
            }
            cplx st = 1.0 / tr;
            if (!finite(st)) {
                return std::nullopt;
            }
            return st;
        }
        if (!finite(f) || !finite(df) || std::abs(df) == 0.0) {
            return std::nullopt;
        }
        cplx st = f / df;
        if (!finite(st)) {
            return std::nullopt;
        }
        return st;
    }

    [[nodiscard]] double residual_limit_log(cplx mu) const {
        return std::log(kResidualFactor) + 0.5 * dim_ * std::log1p(std::norm(mu));
    }

  private:
    [[nodiscard]] cplx exponential(cplx mu) const {
        cplx z = -mu * sys_->tau;
        if (z.real() > kScaledExponent) {
            throw NumericalFailureError("characteristic exponential overflow in the matrix path");
        }
        return std::exp(z);
    }

    const DelaySystem* sys_;
    int dim_;
    bool real_ = false;
    bool b_zero_ = false;
    std::optional<ScalarChar> scalar_;
    Eigen::MatrixXcd id_;
};

// ---- winding walker -----------------------------------------------------------

struct BoundaryRootSignal {};

struct WalkContext {
    const CharFn& fn;
    long evals = 0;
};

PhasePoint walk_eval(WalkContext& ctx, cplx z) {
    if (++ctx.evals > kWalkBudget) {
        throw ContourResolutionError("winding evaluation budget exhausted");
    }
    PhasePoint p = ctx.fn.phase_point(z);
    double scale = 0.5 * ctx.fn.dim() * std::log1p(std::norm(z));
    if (!std::isfinite(p.phase) || p.log_abs - scale < std::log(1e-12)) {
        throw BoundaryRootSignal{};
    }
    return p;
}

double walk_pair(WalkContext& ctx, cplx z0, const PhasePoint& p0, cplx z1, const PhasePoint& p1,
                 int depth) {
    double d = std::remainder(p1.phase - p0.phase, kTwoPi);
    if (depth >= 2 && std::abs(d) <= 0.5 * kPi) {
        return d;
    }
    if (depth >= kMaxWalkDepth) {
        throw ContourResolutionError("winding subdivision exceeded the depth limit");
    }
    cplx zm = 0.5 * (z0 + z1);
    PhasePoint pm = walk_eval(ctx, zm);
    return walk_pair(ctx, z0, p0, zm, pm, depth + 1) + walk_pair(ctx, zm, pm, z1, p1, depth + 1);
}

double walk_polyline(WalkContext& ctx, const std::vector<cplx>& pts) {
    double total = 0.0;
    PhasePoint prev = walk_eval(ctx, pts.front());
    for (std::size_t i = 1; i < pts.size(); ++i) {
        PhasePoint cur = walk_eval(ctx, pts[i]);
        total += walk_pair(ctx, pts[i - 1], prev, pts[i], cur, 0);
        prev = cur;
    }
    return total;
}

void append_edge(std::vector<cplx>& pts, cplx a, cplx b, int n) {
    for (int i = 1; i <= n; ++i) {
        pts.push_back(a + (b - a) * (static_cast<double>(i) / n));
    }
}

double rectangle_winding(WalkContext& ctx, const RootWindow& w) {
    double tau = ctx.fn.tau();
    double re_span = w.re_max - w.re_min;
    double im_span = 2.0 * w.im_max;
    int n_h = std::max(16, static_cast<int>(std::ceil(4.0 * re_span)));
    int n_v = std::max({16, static_cast<int>(std::ceil(4.0 * im_span)),
                        static_cast<int>(std::ceil(im_span * tau / 1.5))});
    cplx c0(w.re_min, -w.im_max);
    cplx c1(w.re_max, -w.im_max);
    cplx c2(w.re_max, w.im_max);
    cplx c3(w.re_min, w.im_max);
    std::vector<cplx> pts;
    pts.reserve(static_cast<std::size_t>(2 * n_h + 2 * n_v + 1));
    pts.push_back(c0);
    append_edge(pts, c0, c1, n_h);
    append_edge(pts, c1, c2, n_v);
    append_edge(pts, c2, c3, n_h);
    append_edge(pts, c3, c0, n_v);
    return walk_polyline(ctx, pts);
}

struct CountResult {
    int count;
    RootWindow window;
};

CountResult count_in_window(const CharFn& fn, RootWindow w) {
    double span = std::max(w.re_max - w.re_min, 2.0 * w.im_max);
    for (int attempt = 0;; ++attempt) {
        try {
            WalkContext ctx{fn};
            double turns = rectangle_winding(ctx, w) / kTwoPi;
            long n = std::lround(turns);
            if (std::abs(turns - static_cast<double>(n)) > 0.02 || n < 0) {
                throw ContourResolutionError("winding total is not a multiple of 2 pi");
            }
            return {static_cast<int>(n), w};
        } catch (const BoundaryRootSignal&) {
            if (attempt >= 6) {
                throw ContourResolutionError("root pinned to the counting contour after inflation");
            }
        } catch (const ContourResolutionError&) {
            if (attempt >= 6) {
                throw;
            }
        }
        double delta = 1e-6 * (attempt + 1) * (1.0 + span);
        w.re_min -= delta;
        w.re_max += delta;
        w.im_max += delta;
    }
}

int polygon_count(const CharFn& fn, const std::vector<cplx>& pts) {
    WalkContext ctx{fn};
    double turns = walk_polyline(ctx, pts) / kTwoPi;
    long n = std::lround(turns);
    if (std::abs(turns - static_cast<double>(n)) > 0.02 || n < 0) {
        throw ContourResolutionError("winding total is not a multiple of 2 pi");
    }
    return static_cast<int>(n);
}

// ---- Newton refinement ---------------------------------------------------------

double clamped_exp(double log_abs) {
    if (log_abs == -std::numeric_limits<double>::infinity()) {
        return 0.0;
    }
    return std::exp(std::min(log_abs, 700.0));
}

std::optional<CharacteristicRoot> newton_refine(const CharFn& fn, cplx mu0) {
    cplx mu = mu0;
    if (!finite(mu)) {
        return std::nullopt;
    }
    for (int it = 0; it < 80; ++it) {
        auto step = fn.newton_step(mu);
        if (!step) {
            break;
        }
        mu -= *step;
        if (!finite(mu) || std::abs(mu) > 1e9) {
            return std::nullopt;
        }
        if (std::abs(*step) <= 1e-14 * (1.0 + std::abs(mu))) {
            break;
        }
    }
    if (!finite(mu)) {
        return std::nullopt;
    }
    double log_abs = fn.phase_point(mu).log_abs;
    if (log_abs <= fn.residual_limit_log(mu)) {
        return CharacteristicRoot{mu, clamped_exp(log_abs)};
    }
    // Steep regions (|det'| ~ e^{|Re mu| tau}) push the attainable residual floor to
    // |det'| * ulp(mu), above the absolute tolerance. A sub-ulp Newton step still
    // certifies the root location, so accept on backward error with the honest residual.
    if (auto step = fn.newton_step(mu); step && std::abs(*step) <= kBackwardTol * (1.0 + std::abs(mu))) {
        return CharacteristicRoot{mu, clamped_exp(log_abs)};
    }
    return std::nullopt;
}

double position_error(const CharFn& fn, cplx mu) {
    auto step = fn.newton_step(mu);
    if (!step || !std::isfinite(std::abs(*step))) {
        return 0.0;
    }
    return std::min(std::abs(*step), kPositionErrCap * (1.0 + std::abs(mu)));
}

// Near a multiple root the acceptance basin is wider than the fixed merge radius,
// so the radius grows with each candidate's own Newton-step size.
void dedupe_roots(const CharFn& fn, std::vector<CharacteristicRoot>& roots) {
    std::vector<CharacteristicRoot> kept;
    std::vector<double> errs;
    for (const auto& r : roots) {
        double err = position_error(fn, r.mu);
        bool merged = false;
        for (std::size_t i = 0; i < kept.size(); ++i) {
            double radius = std::max(kDedupTol * (1.0 + std::abs(r.mu)), 4.0 * (err + errs[i]));
            if (std::abs(r.mu - kept[i].mu) <= radius) {
                if (err < errs[i]) {
                    kept[i] = r;
                    errs[i] = err;
                }
                merged = true;
                break;
            }
        }
        if (!merged) {
            kept.push_back(r);
            errs.push_back(err);
        }
    }
    roots = std::move(kept);
}

void sort_roots(std::vector<CharacteristicRoot>& roots) {
    std::sort(roots.begin(), roots.end(), [](const CharacteristicRoot& a, const CharacteristicRoot& b) {
        if (a.mu.real() != b.mu.real()) {
            return a.mu.real() < b.mu.real();
        }
        return a.mu.imag() < b.mu.imag();
    });
}

bool inside_window(cplx mu, const RootWindow& w, double slack) {
    return mu.real() >= w.re_min - slack && mu.real() <= w.re_max + slack &&
           std::abs(mu.imag()) <= w.im_max + slack;
}

// ---- seeding -------------------------------------------------------------------

void instantaneous_seeds(const CharFn& fn, std::vector<cplx>& seeds) {
    if (const auto* s = fn.scalar()) {
        quadratic_roots(s->eta, s->kappa, seeds);
        quadratic_roots(s->eta + s->eta_tau, s->kappa + s->kappa_tau, seeds);
        return;
    }
    const auto& sys = fn.system();
    for (cplx e : matrix_eigenvalues(sys.A)) {
        seeds.push_back(e);
    }
    for (cplx e : matrix_eigenvalues(sys.A + sys.B)) {
        seeds.push_back(e);
    }
}

void interface_seeds(const ScalarChar& s, std::vector<cplx>& seeds) {
    if (std::abs(s.eta_tau) < 1e-300) {
        return;
    }
    cplx mu_star = -s.kappa_tau / s.eta_tau;
    if (!finite(mu_star) || std::abs(mu_star.real()) * s.tau > 280.0) {
        return;
    }
    cplx q = (mu_star + s.eta) * mu_star + s.kappa;
    cplx delta = -q * std::exp(mu_star * s.tau) / s.eta_tau;
    seeds.push_back(mu_star);
    if (finite(delta)) {
        seeds.push_back(mu_star + delta);
    }
}

// Seeds from the asymptotic band: for each frequency where the total phase
// omega*tau + arg Y(omega) crosses a multiple of 2 pi, the root candidate is
// gamma(omega)/tau + i omega with gamma = -ln |Y|.
void acs_seeds(const ScalarChar& s, const CharFn& fn, const RootWindow& w, std::vector<cplx>& seeds) {
    if (s.tau <= 0.0) {
        return;
    }
    auto band = [&](double omega, cplx& y) {
        cplx imu(0.0, omega);
        cplx q = (imu + s.eta) * imu + s.kappa;
        cplx ell = s.eta_tau * imu + s.kappa_tau;
        if (std::abs(ell) == 0.0 || std::abs(q) == 0.0) {
            return false;
        }
        y = -q / ell;
        return finite(y) && std::abs(y) > 0.0;
    };
    double hi = w.im_max + 0.75 * kTwoPi / s.tau + 1.0;
    double lo = fn.real_coefficients() ? 0.0 : -hi;
    double step = std::min(0.02, kPi / (8.0 * s.tau));
    int n = static_cast<int>(std::ceil((hi - lo) / step));
    step = (hi - lo) / n;
    bool prev_ok = false;
    double prev_omega = 0.0;
    double prev_raw = 0.0;
    double prev_phi = 0.0;
    for (int j = 0; j <= n; ++j) {
        double omega = lo + j * step;
        cplx y;
        if (!band(omega, y)) {
            prev_ok = false;
            continue;
        }
        double raw = omega * s.tau + std::arg(y);
        if (!prev_ok) {
            prev_ok = true;
            prev_omega = omega;
            prev_raw = raw;
            prev_phi = raw;
            continue;
        }
        double phi = prev_phi + std::remainder(raw - prev_raw, kTwoPi);
        double a = std::min(prev_phi, phi);
        double b = std::max(prev_phi, phi);
        for (long m = static_cast<long>(std::ceil(a / kTwoPi - 1e-12)); m * kTwoPi <= b; ++m) {
            double target = m * kTwoPi;
            double ol = prev_omega;
            double fl = prev_phi;
            double rl = prev_raw;
            double orr = omega;
            for (int it = 0; it < 60; ++it) {
                double om = 0.5 * (ol + orr);
                cplx ym;
                if (!band(om, ym)) {
                    break;
                }
                double rm = om * s.tau + std::arg(ym);
                double fm = fl + std::remainder(rm - rl, kTwoPi);
                if ((fm - target) * (fl - target) > 0.0) {
                    ol = om;
                    fl = fm;
                    rl = rm;
                } else {
                    orr = om;
                }
            }
            double ostar = 0.5 * (ol + orr);
            cplx ystar;
            if (!band(ostar, ystar)) {
                continue;
            }
            double sigma = -std::log(std::abs(ystar)) / s.tau;
            if (!std::isfinite(sigma) || sigma < w.re_min - 1.0 || sigma > w.re_max + 1.0) {
                continue;
            }
            seeds.emplace_back(sigma, ostar);
            if (fn.real_coefficients() && ostar > 1e-12) {
                seeds.emplace_back(sigma, -ostar);
            }
        }
        prev_omega = omega;
        prev_raw = raw;
        prev_phi = phi;
    }
}

void real_axis_seeds(const CharFn& fn, const RootWindow& w, std::vector<cplx>& seeds) {
    if (!fn.real_coefficients()) {
        return;
    }
    auto sign_at = [&](double x) -> int {
        PhasePoint p = fn.phase_point(cplx(x, 0.0));
        if (!std::isfinite(p.log_abs) || p.log_abs == -std::numeric_limits<double>::infinity()) {
            return 0;
        }
        return std::cos(p.phase) >= 0.0 ? 1 : -1;
    };
    int n = 256;
    double prev_x = w.re_min;
    int prev_s = sign_at(prev_x);
    if (prev_s == 0) {
        seeds.emplace_back(prev_x, 0.0);
    }
    for (int j = 1; j <= n; ++j) {
        double x = w.re_min + (w.re_max - w.re_min) * j / n;
        int sg = sign_at(x);
        if (sg == 0) {
            seeds.emplace_back(x, 0.0);
        } else if (prev_s != 0 && sg != prev_s) {
            double a = prev_x;
            double b = x;
            int sa = prev_s;
            for (int it = 0; it < 80; ++it) {
                double mid = 0.5 * (a + b);
                int sm = sign_at(mid);
                if (sm == 0) {
                    a = b = mid;
                    break;
                }
                if (sm == sa) {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            seeds.emplace_back(0.5 * (a + b), 0.0);
        }
        prev_x = x;
        prev_s = sg;
    }
}

// ---- Chebyshev collocation -----------------------------------------------------

Eigen::MatrixXd chebyshev_diff(int n) {
    Eigen::VectorXd x(n + 1);
    Eigen::VectorXd c(n + 1);
    for (int j = 0; j <= n; ++j) {
        x(j) = std::cos(kPi * j / n);
        c(j) = (j == 0 || j == n) ? 2.0 : 1.0;
    }
    Eigen::MatrixXd d(n + 1, n + 1);
    for (int i = 0; i <= n; ++i) {
        double row_sum = 0.0;
        for (int j = 0; j <= n; ++j) {
            if (i == j) {
                continue;
            }
            double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
            d(i, j) = (c(i) / c(j)) * sign / (x(i) - x(j));
            row_sum += d(i, j);
        }
        d(i, i) = -row_sum;
    }
    return d;
}

void collocation_candidates(const CharFn& fn, int order, const RootWindow& w,
                            std::vector<cplx>& out) {
    const auto& sys = fn.system();
    int d = fn.dim();
    int n = order;
    Eigen::MatrixXd diff = (2.0 / sys.tau) * chebyshev_diff(n);
    int big = d * (n + 1);
    auto harvest = [&](const Eigen::VectorXcd& eigs) {
        for (Eigen::Index i = 0; i < eigs.size(); ++i) {
            cplx mu = eigs(i);
            if (finite(mu) && mu.real() >= w.re_min - 0.5 && mu.real() <= w.re_max + 0.5 &&
                std::abs(mu.imag()) <= w.im_max + 2.0) {
                out.push_back(mu);
            }
        }
    };
    if (fn.real_coefficients()) {
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(big, big);
        m.topLeftCorner(d, d) = sys.A.real();
        m.topRightCorner(d, d) += sys.B.real();
        for (int i = 1; i <= n; ++i) {
            for (int j = 0; j <= n; ++j) {
                for (int k = 0; k < d; ++k) {
                    m(i * d + k, j * d + k) = diff(i, j);
                }
            }
        }
        Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
        if (es.info() != Eigen::Success) {
            throw NumericalFailureError("collocation eigenvalue solve failed");
        }
        harvest(es.eigenvalues());
        return;
    }
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(big, big);
    m.topLeftCorner(d, d) = sys.A;
    m.topRightCorner(d, d) += sys.B;
    for (int i = 1; i <= n; ++i) {
        for (int j = 0; j <= n; ++j) {
            for (int k = 0; k < d; ++k) {
                m(i * d + k, j * d + k) = diff(i, j);
            }
        }
    }
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(m, false);
    if (es.info() != Eigen::Success) {
        throw NumericalFailureError("collocation eigenvalue solve failed");
    }
    harvest(es.eigenvalues());
}

// ---- root collection -----------------------------------------------------------

void refine_into(const CharFn& fn, const std::vector<cplx>& seeds, const RootWindow& w,
                 std::vector<CharacteristicRoot>& roots) {
    double slack = 1e-12 * (1.0 + std::max(w.re_max - w.re_min, 2.0 * w.im_max));
    for (cplx seed : seeds) {
        auto r = newton_refine(fn, seed);
        if (r && inside_window(r->mu, w, slack)) {
            roots.push_back(*r);
        }
    }
    dedupe_roots(fn, roots);
}

void complete_conjugates(const CharFn& fn, const RootWindow& w, std::vector<CharacteristicRoot>& roots) {
    if (!fn.real_coefficients()) {
        return;
    }
    std::vector<CharacteristicRoot> extra;
    for (const auto& r : roots) {
        if (std::abs(r.mu.imag()) <= kDedupTol * (1.0 + std::abs(r.mu))) {
            continue;
        }
        cplx conj_mu = std::conj(r.mu);
        bool present = false;
        for (const auto& k : roots) {
            if (std::abs(k.mu - conj_mu) <= kDedupTol * (1.0 + std::abs(conj_mu))) {
                present = true;
                break;
            }
        }
        if (!present && inside_window(conj_mu, w, 0.0)) {
            extra.push_back(CharacteristicRoot{conj_mu, r.residual});
        }
    }
    roots.insert(roots.end(), extra.begin(), extra.end());
    dedupe_roots(fn, roots);
}

int local_multiplicity(const CharFn& fn, cplx mu, double radius) {
    for (int attempt = 0; attempt < 5; ++attempt) {
        std::vector<cplx> pts;
        int n = 16;
        pts.reserve(n + 1);
        for (int j = 0; j <= n; ++j) {
            double th = kTwoPi * j / n;
            pts.push_back(mu + radius * cplx(std::cos(th), std::sin(th)));
        }
        try {
            return polygon_count(fn, pts);
        } catch (const BoundaryRootSignal&) {
            radius *= 1.37;
        } catch (const ContourResolutionError&) {
            radius *= 1.37;
        }
    }
    throw ContourResolutionError("multiplicity contour could not be resolved");
}

bool expand_multiplicities(const CharFn& fn, std::vector<CharacteristicRoot>& roots, int expected) {
    if (roots.empty()) {
        return false;
    }
    std::vector<int> mult(roots.size(), 1);
    int total = 0;
    for (std::size_t i = 0; i < roots.size(); ++i) {
        double nearest = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < roots.size(); ++j) {
            if (i != j) {
                nearest = std::min(nearest, std::abs(roots[i].mu - roots[j].mu));
            }
        }
        double radius = std::min(1e-6 * (1.0 + std::abs(roots[i].mu)), nearest / 4.0);
        radius = std::max(radius, 1e-12);
        mult[i] = local_multiplicity(fn, roots[i].mu, radius);
        total += mult[i];
    }
    if (total != expected) {
        return false;
    }
    std::vector<CharacteristicRoot> out;
    out.reserve(static_cast<std::size_t>(expected));
    for (std::size_t i = 0; i < roots.size(); ++i) {
        for (int k = 0; k < std::max(1, mult[i]); ++k) {
            out.push_back(roots[i]);
        }
    }
    roots = std::move(out);
    return true;
}

// Around a multiple root the characteristic value sits at the rounding noise
// floor over a basin wider than any step-based merge radius, so several basin
// points can survive dedupe as seemingly perfect distinct roots. A winding
// count over the whole cluster is the decisive test: when it reports fewer
// zeros than members, the extras are evaluation phantoms.
void consolidate_clusters(const CharFn& fn, std::vector<CharacteristicRoot>& roots) {
    std::size_t n = roots.size();
    if (n < 2) {
        return;
    }
    std::vector<int> cluster(n, -1);
    int nc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (cluster[i] >= 0) {
            continue;
        }
        cluster[i] = nc;
        std::vector<std::size_t> stack{i};
        while (!stack.empty()) {
            std::size_t a = stack.back();
            stack.pop_back();
            for (std::size_t b = 0; b < n; ++b) {
                if (cluster[b] < 0 &&
                    std::abs(roots[a].mu - roots[b].mu) <= 1e-5 * (1.0 + std::abs(roots[a].mu))) {
                    cluster[b] = nc;
                    stack.push_back(b);
                }
            }
        }
        ++nc;
    }
    if (nc == static_cast<int>(n)) {
        return;
    }
    std::vector<CharacteristicRoot> out;
    out.reserve(n);
    for (int c = 0; c < nc; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i) {
            if (cluster[i] == c) {
                members.push_back(i);
            }
        }
        if (members.size() == 1) {
            out.push_back(roots[members[0]]);
            continue;
        }
        cplx centroid(0.0, 0.0);
        for (std::size_t i : members) {
            centroid += roots[i].mu;
        }
        centroid /= static_cast<double>(members.size());
        double spread = 0.0;
        for (std::size_t i : members) {
            spread = std::max(spread, std::abs(roots[i].mu - centroid));
        }
        double radius = std::max(4.0 * spread, 1e-5 * (1.0 + std::abs(centroid)));
        int zeros = -1;
        try {
            zeros = local_multiplicity(fn, centroid, radius);
        } catch (const ContourResolutionError&) {
        }
        if (zeros < 0 || zeros >= static_cast<int>(members.size())) {
            for (std::size_t i : members) {
                out.push_back(roots[i]);
            }
            continue;
        }
        if (zeros == 0) {
            continue;
        }
        std::size_t best = members[0];
        for (std::size_t i : members) {
            if (std::abs(roots[i].mu - centroid) < std::abs(roots[best].mu - centroid)) {
                best = i;
            }
        }
        out.push_back(roots[best]);
    }
    roots = std::move(out);
}

void validate_window(const RootWindow& w) {
    if (!std::isfinite(w.re_min) || !std::isfinite(w.re_max) || !std::isfinite(w.im_max) ||
        w.re_min >= w.re_max || w.im_max <= 0.0) {
        throw InvalidParameterError("root window must be a finite rectangle with re_min < re_max");
    }
}

void validate_system(const DelaySystem& sys) {
    if (sys.A.rows() == 0 || sys.A.rows() != sys.A.cols() || sys.B.rows() != sys.A.rows() ||
        sys.B.cols() != sys.A.cols()) {
        throw InvalidParameterError("delay system matrices must be square with matching sizes");
    }
    if (!sys.A.allFinite() || !sys.B.allFinite() || !std::isfinite(sys.tau) || sys.tau < 0.0) {
        throw InvalidParameterError("delay system entries must be finite with tau >= 0");
    }
}

SpectrumResult delay_free_roots(const CharFn& fn, const RootWindow& w) {
    const auto& sys = fn.system();
    Eigen::MatrixXcd m = sys.A;
    if (sys.tau == 0.0) {
        m += sys.B;
    }
    SpectrumResult out;
    out.window = w;
    double slack = 1e-9 * (1.0 + std::max(w.re_max - w.re_min, 2.0 * w.im_max));
    for (cplx mu : matrix_eigenvalues(m)) {
        if (inside_window(mu, w, slack)) {
            double log_abs = fn.phase_point(mu).log_abs;
            out.roots.push_back(CharacteristicRoot{mu, clamped_exp(log_abs)});
        }
    }
    sort_roots(out.roots);
    return out;
}

int collocation_base_order(double tau, double im_max) {
    double need = std::max(32.0, 0.35 * tau * im_max);
    int n = 32;
    while (n < need && n < 2048) {
        n *= 2;
    }
    return n;
}

SpectrumResult find_roots(const CharFn& fn, const RootWindow& w0) {
    validate_window(w0);
    if (fn.delay_free()) {
        return delay_free_roots(fn, w0);
    }
    auto [expected, w] = count_in_window(fn, w0);
    SpectrumResult out;
    out.window = w;
    if (expected == 0) {
        return out;
    }
    std::vector<cplx> seeds;
    instantaneous_seeds(fn, seeds);
    if (const auto* s = fn.scalar()) {
        interface_seeds(*s, seeds);
        acs_seeds(*s, fn, w, seeds);
    }
    real_axis_seeds(fn, w, seeds);
    refine_into(fn, seeds, w, out.roots);
    complete_conjugates(fn, w, out.roots);
    consolidate_clusters(fn, out.roots);
    if (static_cast<int>(out.roots.size()) == expected) {
        sort_roots(out.roots);
        return out;
    }
    if (static_cast<int>(out.roots.size()) < expected) {
        std::vector<CharacteristicRoot> distinct = out.roots;
        if (expand_multiplicities(fn, distinct, expected)) {
            out.roots = std::move(distinct);
            sort_roots(out.roots);
            return out;
        }
    }
    int base = collocation_base_order(fn.tau(), w.im_max);
    for (int escalation = 0, n = base; escalation < 3 && n <= 2048; ++escalation, n *= 2) {
        std::vector<cplx> cand;
        collocation_candidates(fn, n, w, cand);
        refine_into(fn, cand, w, out.roots);
        complete_conjugates(fn, w, out.roots);
        consolidate_clusters(fn, out.roots);
        if (static_cast<int>(out.roots.size()) == expected) {
            out.collocation_order = n;
            sort_roots(out.roots);
            return out;
        }
        if (static_cast<int>(out.roots.size()) < expected) {
            std::vector<CharacteristicRoot> distinct = out.roots;
            if (expand_multiplicities(fn, distinct, expected)) {
                out.roots = std::move(distinct);
                out.collocation_order = n;
                sort_roots(out.roots);
                return out;
            }
        }
    }
    throw IncompleteSpectrumError(out.roots.size(), static_cast<std::size_t>(expected),
                                  "characteristic root search did not reach the winding count");
}

double a_priori_radius(const CharFn& fn, double sigma) {
    double damp = std::exp(-sigma * fn.tau());
    if (const auto* s = fn.scalar()) {
        double a = std::abs(s->eta) + std::abs(s->eta_tau) * damp;
        double b = std::abs(s->kappa) + std::abs(s->kappa_tau) * damp;
        return 0.5 * (a + std::sqrt(a * a + 4.0 * b));
    }
    return fn.system().A.norm() + fn.system().B.norm() * damp;
}

double lambda_max_impl(const DelaySystem& sys, const RootWindow* hint) {
    validate_system(sys);
    CharFn fn(sys);
    if (fn.delay_free()) {
        Eigen::MatrixXcd m = sys.A;
        if (sys.tau == 0.0) {
            m += sys.B;
        }
        double best = -std::numeric_limits<double>::infinity();
        for (cplx mu : matrix_eigenvalues(m)) {
            best = std::max(best, mu.real());
        }
        return best;
    }
    RootWindow w = hint ? *hint : default_root_window(sys.tau);
    validate_window(w);
    double cand = -std::numeric_limits<double>::infinity();
    int widen = 0;
    for (int round = 0; round < 8; ++round) {
        SpectrumResult res = find_roots(fn, w);
        for (const auto& r : res.roots) {
            cand = std::max(cand, r.mu.real());
        }
        if (res.roots.empty() && cand == -std::numeric_limits<double>::infinity()) {
            if (++widen > 5) {
                throw NumericalFailureError("no characteristic roots located for lambda_max");
            }
            w.re_min -= 3.0;
            w.im_max = std::min(2.0 * w.im_max, 1e4);
            continue;
        }
        double floor_level = -12.0 / std::max(sys.tau, 0.5);
        double level = std::max(cand + std::max(1e-6, 1e-6 * std::abs(cand)), floor_level);
        double radius = a_priori_radius(fn, level);
        if (level >= radius + 0.25) {
            return cand;
        }
        RootWindow guard{level, radius + 0.5, radius + 0.5};
        auto guarded = count_in_window(fn, guard);
        if (guarded.count == 0) {
            return cand;
        }
        w = guarded.window;
    }
    throw NumericalFailureError("lambda_max strip certification did not converge");
}

}  // namespace

// ---- public API -----------------------------------------------------------------

RootWindow default_root_window(double tau) {
    RootWindow w;
    w.re_min = -(std::min(5.0, 10.0 / std::max(tau, 1.0)) + 2.0);
    w.re_max = 3.0;
    w.im_max = std::max(4.0 * kPi / std::max(tau, 0.1), 10.0);
    return w;
}

DelaySystem to_delay_system(const ModeSystem& mode) {
    return DelaySystem{mode.A, mode.B, mode.tau};
}

cplx char_value(cplx mu, const DelaySystem& sys) {
    validate_system(sys);
    return CharFn(sys).value(mu);
}

cplx char_value(cplx mu, const ModeSystem& mode) {
    DelaySystem sys = to_delay_system(mode);
    return char_value(mu, sys);
}

cplx char_derivative(cplx mu, const DelaySystem& sys) {
    validate_system(sys);
    CharFn fn(sys);
    if (const auto* s = fn.scalar()) {
        cplx ell = fused_linear(s->eta_tau, mu, s->kappa_tau);
        cplx e = std::exp(-mu * s->tau);
        return 2.0 * mu + s->eta + e * (s->eta_tau - s->tau * ell);
    }
    cplx z = -mu * sys.tau;
    if (z.real() > kScaledExponent) {
        throw NumericalFailureError("characteristic exponential overflow in the matrix path");
    }
    cplx e = std::exp(z);
    Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(sys.A.rows(), sys.A.cols());
    Eigen::MatrixXcd delta = mu * id - sys.A - e * sys.B;
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(delta);
    cplx det = lu.determinant();
    Eigen::MatrixXcd dprime = id + (sys.tau * e) * sys.B;
    return det * lu.solve(dprime).trace();
}

int argument_principle_count(const DelaySystem& sys, const RootWindow& window) {
    validate_system(sys);
    validate_window(window);
    CharFn fn(sys);
    if (fn.delay_free()) {
        return static_cast<int>(delay_free_roots(fn, window).roots.size());
    }
    return count_in_window(fn, window).count;
}

int argument_principle_count(const ModeSystem& mode, const RootWindow& window) {
    DelaySystem sys = to_delay_system(mode);
    return argument_principle_count(sys, window);
}

SpectrumResult char_roots(const DelaySystem& sys, const RootWindow& window) {
    validate_system(sys);
    CharFn fn(sys);
    return find_roots(fn, window);
}

SpectrumResult char_roots(const ModeSystem& mode, const RootWindow& window) {
    DelaySystem sys = to_delay_system(mode);
    return char_roots(sys, window);
}

SpectrumResult char_roots(const ModeSystem& mode) {
    return char_roots(mode, default_root_window(mode.tau));
}

double lambda_max(const DelaySystem& sys, const RootWindow* hint) {
    return lambda_max_impl(sys, hint);
}

double lambda_max(const ModeSystem& mode, const RootWindow* hint) {
    DelaySystem sys = to_delay_system(mode);
    return lambda_max_impl(sys, hint);
}

std::vector<cplx> strongly_unstable_spectrum(const ModeSystem& mode) {
    std::vector<cplx> out;
    for (cplx e : matrix_eigenvalues(mode.A)) {
        if (e.real() > 1e-9) {
            out.push_back(e);
        }
    }
    std::sort(out.begin(), out.end(), [](cplx a, cplx b) {
        return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
    return out;
}

std::vector<cplx> instantaneous_marginal_roots(const ModeSystem& mode) {
    std::vector<cplx> out;
    for (cplx e : matrix_eigenvalues(mode.A)) {
        if (std::abs(e.real()) <= 1e-9) {
            out.push_back(e);
        }
    }
    std::sort(out.begin(), out.end(), [](cplx a, cplx b) {
        return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
    return out;
}

}  // namespace delaystab
