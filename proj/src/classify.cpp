#include "delaystab/classify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "delaystab/errors.hpp"
#include "delaystab/spectrum.hpp"

namespace delaystab {

namespace {

constexpr double kTwoPi = 2.0 * 3.14159265358979323846;
constexpr double kRealTol = 1e-9;
constexpr double kDiscriminantTol = 1e-10;
const double kInf = std::numeric_limits<double>::infinity();

struct RealGains {
    double k0;
    double h0;
    double kt;
    double ht;
};

double gain_scale(const RealGains& g) {
    return 1.0 + std::max(std::max(std::abs(g.k0), std::abs(g.h0)),
                          std::max(std::abs(g.kt), std::abs(g.ht)));
}

RealGains real_gains_checked(const ModeSystem& mode) {
    cplx vals[4] = {mode.kappa(), mode.eta(), mode.kappa_tau(), mode.eta_tau()};
    for (cplx v : vals) {
        if (std::abs(v.imag()) > kRealTol * (1.0 + std::abs(v))) {
            throw UnsupportedParametersError(
                "effective gains are not real; classification needs real lambda (use the msf map)");
        }
    }
    return RealGains{vals[0].real(), vals[1].real(), vals[2].real(), vals[3].real()};
}

const char* class_name(AcsClass c) {
    switch (c) {
        case AcsClass::Zero: return "0";
        case AcsClass::I: return "I";
        case AcsClass::II: return "II";
        case AcsClass::U: return "U";
        case AcsClass::Boundary: return "Boundary";
    }
    return "?";
}

/// Membership margins of the four Theorem regions: positive inside a region,
/// measured as the smallest inequality slack; -inf where a region cannot
/// contain the point. Exactly one is positive away from the boundaries.
struct RegionMargins {
    double zero = -kInf;
    double one = -kInf;
    double two = -kInf;
    double uns = -kInf;
};

RegionMargins region_margins(const RealGains& g) {
    RegionMargins m;
    double abs_k0 = std::abs(g.k0);
    double abs_kt = std::abs(g.kt);
    double abs_h0 = std::abs(g.h0);
    m.one = abs_kt - abs_k0;
    if (g.k0 > abs_kt) {
        double d = 2.0 * g.k0 + g.ht * g.ht - 2.0 * std::sqrt(g.k0 * g.k0 - g.kt * g.kt);
        double h0m = std::sqrt(std::max(d, 0.0));
        m.zero = std::min(g.k0 - abs_kt, g.h0 - h0m);
        m.two = std::min(g.k0 - abs_kt, h0m - abs_h0);
        m.uns = std::min(g.k0 - abs_kt, -h0m - g.h0);
    } else if (g.k0 < -abs_kt) {
        double d = 2.0 * g.k0 + g.ht * g.ht - 2.0 * std::sqrt(g.k0 * g.k0 - g.kt * g.kt);
        double h0m = std::sqrt(std::max(d, 0.0));
        double band = -abs_kt - g.k0;
        if (d >= 0.0) {
            m.two = std::min(std::min(band, h0m - abs_h0), 0.5 * d);
        }
        m.uns = std::min(band, std::max(-0.5 * d, abs_h0 - h0m));
    }
    return m;
}

void append_delays(double omega, double phi, double horizon, std::vector<double>& out) {
    for (std::size_t j = 0;; ++j) {
        double tau = (phi + kTwoPi * static_cast<double>(j)) / omega;
        if (tau > horizon) {
            break;
        }
        out.push_back(tau);
    }
}

}  // namespace

cplx generating_root(double omega, const ModeSystem& mode) {
    if (!std::isfinite(omega)) {
        throw InvalidParameterError("omega must be finite");
    }
    cplx iw(0.0, omega);
    cplx kappa = mode.kappa();
    cplx eta = mode.eta();
    cplx num = -(iw * iw + eta * iw + kappa);
    cplx den = mode.kappa_tau() + iw * mode.eta_tau();
    double den_scale = 1.0 + std::abs(mode.kappa_tau()) + std::abs(omega) * std::abs(mode.eta_tau());
    if (std::abs(den) <= 1e-14 * den_scale) {
        throw DegenerateDelayChannelError("delayed coupling channel vanishes at this omega");
    }
    cplx y = num / den;
    cplx residual = -num + den * y;
    double res_scale = 1.0 + std::abs(num) + std::abs(den * y);
    if (std::abs(residual) > 1e-12 * res_scale) {
        throw NumericalFailureError("generating polynomial root failed verification");
    }
    return y;
}

double acs_gamma(double omega, const ModeSystem& mode) {
    return -std::log(std::abs(generating_root(omega, mode)));
}

AcsSample acs_sample(double omega, const ModeSystem& mode) {
    cplx y = generating_root(omega, mode);
    return AcsSample{omega, -std::log(std::abs(y)), y};
}

std::vector<AcsSample> acs_samples(const ModeSystem& mode, double omega_min, double omega_max,
                                   std::size_t count) {
    if (!std::isfinite(omega_min) || !std::isfinite(omega_max) || omega_min >= omega_max ||
        count < 2) {
        throw InvalidParameterError("acs scan needs omega_min < omega_max and count >= 2");
    }
    std::vector<AcsSample> out;
    out.reserve(count);
    double step = (omega_max - omega_min) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(acs_sample(omega_min + step * static_cast<double>(i), mode));
    }
    return out;
}

CrossingSet crossing_frequencies(const ModeSystem& mode) {
    RealGains g = real_gains_checked(mode);
    double a2 = g.h0 * g.h0 - 2.0 * g.k0 - g.ht * g.ht;
    double a0 = g.k0 * g.k0 - g.kt * g.kt;
    double delta = a2 * a2 - 4.0 * a0;

    CrossingSet set;
    set.degenerate_double = std::abs(delta) < kDiscriminantTol;
    if (delta < 0.0) {
        return set;
    }
    double sq = std::sqrt(delta) / 2.0;
    for (double nu : {-a2 / 2.0 - sq, -a2 / 2.0 + sq}) {
        if (nu > 0.0) {
            set.frequencies.push_back(std::sqrt(nu));
        }
    }
    std::sort(set.frequencies.begin(), set.frequencies.end());
    set.phases.reserve(set.frequencies.size());
    for (double w : set.frequencies) {
        double phi = -std::arg(generating_root(w, mode));
        if (phi < 0.0) {
            phi += kTwoPi;
        }
        set.phases.push_back(phi);
    }
    return set;
}

ClassLabel classify_mode(const GainVector& p0, const CouplingGainVector& pbar, double lambda,
                         double tolerance) {
    if (!std::isfinite(tolerance) || tolerance < 0.0) {
        throw InvalidParameterError("classification tolerance must be finite and nonnegative");
    }
    ModeSystem mode = mode_system(p0, pbar, cplx(lambda, 0.0), 0.0);
    RealGains g = real_gains_checked(mode);

    ClassLabel label;
    label.crossing = crossing_frequencies(mode);
    label.instantaneous_unstable = !strongly_unstable_spectrum(mode).empty();
    label.instantaneous_marginal = !instantaneous_marginal_roots(mode).empty();
    label.sum_matrix_stable = (g.k0 + g.kt > 0.0) && (g.h0 + g.ht > 0.0);

    RegionMargins margins = region_margins(g);
    AcsClass by_region = AcsClass::Zero;
    double best = margins.zero;
    if (margins.one > best) {
        by_region = AcsClass::I;
        best = margins.one;
    }
    if (margins.two > best) {
        by_region = AcsClass::II;
        best = margins.two;
    }
    if (margins.uns > best) {
        by_region = AcsClass::U;
        best = margins.uns;
    }
    label.margin = best;

    double collar = tolerance * gain_scale(g);
    if (best <= collar || label.crossing.degenerate_double) {
        label.cls = AcsClass::Boundary;
        return label;
    }

    std::size_t crossings = label.crossing.frequencies.size();
    AcsClass by_crossings;
    if (crossings == 2) {
        by_crossings = AcsClass::II;
    } else if (crossings == 1) {
        by_crossings = AcsClass::I;
    } else {
        by_crossings = label.instantaneous_unstable ? AcsClass::U : AcsClass::Zero;
    }
    if (by_region != by_crossings) {
        std::ostringstream msg;
        msg << "region inequalities give class " << class_name(by_region)
            << " but the crossing count gives class " << class_name(by_crossings);
        throw InternalConsistencyError(msg.str());
    }
    label.cls = by_region;
    return label;
}

SwitchingDelays switching_delays(const ClassLabel& label, double horizon) {
    if (!std::isfinite(horizon) || horizon < 0.0) {
        throw InvalidParameterError("switching-delay horizon must be finite and nonnegative");
    }
    if (label.cls != AcsClass::I && label.cls != AcsClass::II) {
        throw InapplicableClassError("switching delays exist only for classes I and II");
    }
    SwitchingDelays out;
    out.horizon = horizon;
    const auto& freq = label.crossing.frequencies;
    const auto& phase = label.crossing.phases;
    if (label.cls == AcsClass::I) {
        if (freq.size() != 1) {
            throw InternalConsistencyError("class I label must carry exactly one crossing");
        }
        append_delays(freq[0], phase[0], horizon, out.destabilizing);
        return out;
    }
    if (freq.size() != 2) {
        throw InternalConsistencyError("class II label must carry exactly two crossings");
    }
    append_delays(freq[1], phase[1], horizon, out.destabilizing);
    append_delays(freq[0], phase[0], horizon, out.stabilizing);
    return out;
}

SpectrumComposition classify_formation(const GainVector& p0, const CouplingGainVector& pbar,
                                       const Topology& topology, double tolerance) {
    std::vector<cplx> eigs = laplacian_eigenvalues(topology);
    SpectrumComposition comp;
    comp.modes.reserve(eigs.size());
    comp.absolutely_stable = true;
    for (cplx lam : eigs) {
        if (std::abs(lam.imag()) > kRealTol) {
            throw UnsupportedTopologyError(
                "Laplacian eigenvalue is complex; per-mode classification needs a normal "
                "topology (use the msf map)");
        }
        ClassLabel label = classify_mode(p0, pbar, lam.real(), tolerance);
        switch (label.cls) {
            case AcsClass::Zero: ++comp.zero_modes; break;
            case AcsClass::I: ++comp.class_i_modes; break;
            case AcsClass::II: ++comp.class_ii_modes; break;
            case AcsClass::U: ++comp.class_u_modes; break;
            case AcsClass::Boundary: ++comp.boundary_modes; break;
        }
        if (label.cls != AcsClass::Zero || !label.sum_matrix_stable) {
            comp.absolutely_stable = false;
        }
        if (label.cls == AcsClass::U) {
            comp.has_class_u = true;
        }
        comp.modes.emplace_back(lam.real(), std::move(label));
    }
    return comp;
}

}  // namespace delaystab
