#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "delaystab/gains.hpp"
#include "delaystab/topology.hpp"

namespace delaystab {

/// One point of the asymptotic continuous spectrum: the generating-root value
/// Y(omega) and the rescaled real part gamma(omega) = -ln|Y(omega)|.
struct AcsSample {
    double omega = 0.0;
    double gamma = 0.0;
    cplx Y{0.0, 0.0};
};

/// Imaginary-axis crossings of the asymptotic continuous spectrum.
/// Frequencies are the positive real roots of the frequency quartic, sorted
/// ascending (0, 1, or 2 of them); phases are phi_H = -arg Y(omega_H)
/// normalized to [0, 2*pi). degenerate_double marks a double root of the
/// quartic in nu = omega^2 (|discriminant| < 1e-10), which is Boundary
/// evidence rather than a clean class II.
struct CrossingSet {
    std::vector<double> frequencies;
    std::vector<double> phases;
    bool degenerate_double = false;
};

/// Delay-independent universality classes. Boundary marks points within the
/// tolerance collar of a region boundary or a degenerate double crossing.
enum class AcsClass { Zero, I, II, U, Boundary };

/// Classification of one lambda-mode. `margin` estimates the distance in
/// effective-gain space to the nearest classification boundary; points with
/// margin inside the tolerance collar carry cls == Boundary.
struct ClassLabel {
    AcsClass cls = AcsClass::Zero;
    CrossingSet crossing;
    bool instantaneous_unstable = false;
    bool instantaneous_marginal = false;
    bool sum_matrix_stable = false;
    double margin = 0.0;
};

/// Delay sequences tau_j = (phi_H + 2*pi*j) / omega_H enumerated up to
/// `horizon`. Class II uses the larger crossing frequency for the
/// destabilizing sequence and the smaller one for the stabilizing sequence;
/// class I has only the destabilizing sequence.
struct SwitchingDelays {
    std::vector<double> destabilizing;
    std::vector<double> stabilizing;
    double horizon = 0.0;
};

/// Mode-by-mode classification of a coupled formation, the composition
/// 0_i I_j II_m U_s plus boundary modes, and the formation-level verdicts.
struct SpectrumComposition {
    std::size_t zero_modes = 0;
    std::size_t class_i_modes = 0;
    std::size_t class_ii_modes = 0;
    std::size_t class_u_modes = 0;
    std::size_t boundary_modes = 0;
    std::vector<std::pair<double, ClassLabel>> modes;
    bool absolutely_stable = false;
    bool has_class_u = false;
};

/// Unique root Y(omega) of the rank-1 generating polynomial,
///   Y = -[(i w)^2 + eta (i w) + kappa] / [kappa_tau + i w eta_tau]
/// with the mode's effective gains. Throws DegenerateDelayChannelError when
/// the delayed coupling channel (the denominator) vanishes at this omega.
[[nodiscard]] cplx generating_root(double omega, const ModeSystem& mode);

/// Rescaled real part gamma(omega) = -ln|Y(omega)| of the asymptotic
/// continuous spectrum. Returns +infinity where |Y| = 0.
[[nodiscard]] double acs_gamma(double omega, const ModeSystem& mode);

/// Bundle omega, gamma(omega), Y(omega) into one sample.
[[nodiscard]] AcsSample acs_sample(double omega, const ModeSystem& mode);

/// Uniform gamma(omega) scan over [omega_min, omega_max] with `count` points,
/// for serialization. Throws InvalidParameterError on an empty or reversed
/// range or count < 2.
[[nodiscard]] std::vector<AcsSample> acs_samples(const ModeSystem& mode, double omega_min,
                                                 double omega_max, std::size_t count);

/// Positive crossing frequencies of the ACS through the imaginary axis (the
/// real roots of omega^4 + [h^2 - 2k - (h_tau)^2] omega^2 + k^2 - (k_tau)^2)
/// with their phases. Throws UnsupportedParametersError when the mode's
/// effective gains are not real within 1e-9 (complex lambda: use the msf map).
[[nodiscard]] CrossingSet crossing_frequencies(const ModeSystem& mode);

/// Delay-independent classification of the lambda-mode with effective gains
/// p0 + lambda*pbar. Evaluates the explicit region inequalities and
/// cross-checks them against the crossing count plus the instantaneous
/// spectrum; a disagreement outside the tolerance collar throws
/// InternalConsistencyError. Points within `tolerance` (relative to the
/// effective-gain scale) of a region boundary are labeled Boundary.
[[nodiscard]] ClassLabel classify_mode(const GainVector& p0, const CouplingGainVector& pbar,
                                       double lambda, double tolerance = 1e-9);

/// Destabilizing/stabilizing delay sequences for a class I or II label up to
/// `horizon`. Throws InapplicableClassError for any other class.
[[nodiscard]] SwitchingDelays switching_delays(const ClassLabel& label, double horizon);

/// Classify every Laplacian mode of the formation and compose the verdicts.
/// absolutely_stable means every mode is class 0 with a Hurwitz A + B.
/// Throws UnsupportedTopologyError when an eigenvalue has |Im| > 1e-9.
[[nodiscard]] SpectrumComposition classify_formation(const GainVector& p0,
                                                     const CouplingGainVector& pbar,
                                                     const Topology& topology,
                                                     double tolerance = 1e-9);

}  // namespace delaystab
