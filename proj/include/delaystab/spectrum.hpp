#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "delaystab/gains.hpp"

namespace delaystab {

// ---- windows and results ----------------------------------------------------

/// Rectangular search region Re mu in [re_min, re_max], |Im mu| <= im_max.
struct RootWindow {
    double re_min = -7.0;
    double re_max = 3.0;
    double im_max = 10.0;
};

/// Window used when the caller does not supply one:
/// Re in [-min(5, 10/max(tau,1)) - 2, +3], |Im| <= max(4*pi/max(tau,0.1), 10).
[[nodiscard]] RootWindow default_root_window(double tau);

/// One characteristic root with the achieved residual |det(mu I - A - B e^{-mu tau})|.
struct CharacteristicRoot {
    cplx mu;
    double residual = 0.0;
};

/// Roots found in a window. `window` is the effective (possibly perturbed)
/// rectangle the completeness count ran on. `collocation_order` is 0 when the
/// seeded path sufficed, otherwise the final Chebyshev order used.
struct SpectrumResult {
    std::vector<CharacteristicRoot> roots;
    RootWindow window;
    int collocation_order = 0;
};

/// General linear delay system x'(t) = A x(t) + B x(t - tau).
struct DelaySystem {
    Eigen::MatrixXcd A;
    Eigen::MatrixXcd B;
    double tau = 0.0;
};

[[nodiscard]] DelaySystem to_delay_system(const ModeSystem& mode);

// ---- characteristic function -------------------------------------------------

/// det(mu I - A - B e^{-mu tau}).
[[nodiscard]] cplx char_value(cplx mu, const DelaySystem& sys);
[[nodiscard]] cplx char_value(cplx mu, const ModeSystem& mode);

/// d/dmu of char_value.
[[nodiscard]] cplx char_derivative(cplx mu, const DelaySystem& sys);

// ---- root finding -------------------------------------------------------------

/// Number of characteristic roots inside the window (with multiplicity),
/// computed by tracking the phase of the characteristic function along the
/// window boundary. The window is inflated by 1e-6 increments if a root sits
/// on the boundary. Throws ContourResolutionError when phase tracking cannot
/// resolve the winding.
[[nodiscard]] int argument_principle_count(const DelaySystem& sys, const RootWindow& window);
[[nodiscard]] int argument_principle_count(const ModeSystem& mode, const RootWindow& window);

/// All characteristic roots inside the window, Newton-refined to residual
/// <= 1e-10 * (1 + |mu|^2)^(d/2) or, where the local derivative makes that
/// floor unreachable in double precision, to a Newton step below
/// 1e-13 * (1 + |mu|) with the honest residual reported. Duplicates are
/// merged within max(1e-8, 4x the local step size), multiple roots repeated
/// per multiplicity. Candidate seeds come from the asymptotic
/// spectrum bands and the instantaneous blocks, escalating to Chebyshev
/// collocation (order 64..512) whenever the winding count disagrees. Throws
/// IncompleteSpectrumError if the count still disagrees at the highest order.
[[nodiscard]] SpectrumResult char_roots(const DelaySystem& sys, const RootWindow& window);
[[nodiscard]] SpectrumResult char_roots(const ModeSystem& mode, const RootWindow& window);
[[nodiscard]] SpectrumResult char_roots(const ModeSystem& mode);

/// Largest real part over the entire characteristic spectrum. Search starts
/// from `hint` (or the default window) and is certified by a winding count
/// over the strip to the right of the returned value, using the a priori
/// bound |mu| <= R(sigma) for roots with Re mu >= sigma. The strip floor is
/// clamped at -12/max(tau, 1/2) to keep R(sigma) affordable; values below the
/// clamp are the window maximum without the strip certificate.
[[nodiscard]] double lambda_max(const DelaySystem& sys, const RootWindow* hint = nullptr);
[[nodiscard]] double lambda_max(const ModeSystem& mode, const RootWindow* hint = nullptr);

/// Eigenvalues of the instantaneous block A with Re > 1e-9 (kept for
/// arbitrarily large delay).
[[nodiscard]] std::vector<cplx> strongly_unstable_spectrum(const ModeSystem& mode);

/// Eigenvalues of A with |Re| <= 1e-9 (marginal, excluded from the strongly
/// unstable set).
[[nodiscard]] std::vector<cplx> instantaneous_marginal_roots(const ModeSystem& mode);

}  // namespace delaystab
