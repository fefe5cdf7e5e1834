#pragma once

#include <string>
#include <vector>

#include "delaystab/gains.hpp"

namespace delaystab {

/// Which parametric family a curve belongs to.
///   K0H0:                (k0(omega), h0(omega)) boundary in the leader-gain plane
///   LambdaH0:            (lambda(omega), h0(omega)) boundary in the coupling plane
///   LambdaPlaneBoundary: lambda(i*omega) in the complex coupling plane
///   LambdaPlaneContour:  lambda(c + i*omega), the level set Re mu = c
enum class CurveKind { K0H0, LambdaH0, LambdaPlaneBoundary, LambdaPlaneContour };

/// One curve sample. For the plane curves `point` stores the pair as
/// (real(), imag()) = (k0, h0) or (lambda, h0); for the complex-lambda curves
/// it is lambda itself. `segment` counts contiguous runs: the id increases at
/// every recorded gap (skipped sample or unresolvable jump).
struct CurveSample {
    double omega = 0.0;
    cplx point{0.0, 0.0};
    int segment = 0;
};

/// A parametric bifurcation or contour curve, ordered by omega. `level` is
/// 0 for boundaries and the contour constant c = Re mu otherwise. `gaps`
/// records the omega values of dropped samples.
struct ParametricCurve {
    CurveKind kind = CurveKind::K0H0;
    double level = 0.0;
    std::vector<CurveSample> samples;
    std::vector<double> gaps;
};

/// Default symmetric frequency grid: uniform step min(0.25/tau, 0.01) over
/// |omega| <= 4 * max(4*pi/tau, 5), always containing omega = 0.
[[nodiscard]] std::vector<double> default_omega_grid(double tau);

/// Imaginary-axis crossing boundary in the (k0, h0) leader-gain plane for
/// fixed delayed gains:
///   k0(omega) = omega^2 - h0_tau * omega * sin(omega*tau) - k0_tau * cos(omega*tau)
///   h0(omega) = (k0_tau / omega) * sin(omega*tau) - h0_tau * cos(omega*tau)
/// omega = 0 is skipped with a recorded gap. Every emitted point
/// back-substitutes to |char_value(i*omega)| <= 1e-8.
[[nodiscard]] ParametricCurve k0h0_boundary(double k0_tau, double h0_tau, double tau,
                                            const std::vector<double>& omega_grid);

/// Imaginary-axis crossing boundary in the (lambda, h0) plane for real
/// Laplacian eigenvalues. The h0 field of p0_partial is the solved-for
/// coordinate and is ignored. Samples where the lambda denominator
/// k + h_tau * omega * sin(omega*tau) + k_tau * cos(omega*tau) comes within
/// 1e-6 of zero are skipped with a recorded gap; a grid with every sample
/// skipped throws EmptyCurveError.
[[nodiscard]] ParametricCurve lambda_h0_boundary(const GainVector& p0_partial,
                                                 const CouplingGainVector& pbar, double tau,
                                                 const std::vector<double>& omega_grid);

/// The unique coupling eigenvalue placing mu in the spectrum:
///   lambda(mu) = -(mu^2 + h0 mu + k0 + (h0_tau mu + k0_tau) e^{-mu tau})
///                / (h mu + k + (h_tau mu + k_tau) e^{-mu tau}).
/// Throws PoleOfLambdaError when |denominator| < 1e-6. The result is
/// round-trip verified against char_value(mu; mode(lambda)).
[[nodiscard]] cplx lambda_of_mu(cplx mu, const GainVector& p0, const CouplingGainVector& pbar,
                                double tau);

/// Level set lambda(c + i*omega) in the complex coupling plane. c = 0 yields
/// the stability boundary (kind LambdaPlaneBoundary), other levels the
/// contour lines of Re mu (kind LambdaPlaneContour). Pole samples are
/// dropped and the curve split into segments.
[[nodiscard]] ParametricCurve contour_lines(double c, const GainVector& p0,
                                            const CouplingGainVector& pbar, double tau,
                                            const std::vector<double>& omega_grid);

/// contour_lines at level 0.
[[nodiscard]] ParametricCurve lambda_plane_boundary(const GainVector& p0,
                                                    const CouplingGainVector& pbar, double tau,
                                                    const std::vector<double>& omega_grid);

/// CSV rendering with header. Columns: omega, then (k0, h0), (lambda, h0) or
/// (re_point, im_point) per kind, then level and segment_id. 17 significant
/// digits.
[[nodiscard]] std::string to_csv(const ParametricCurve& curve);

}  // namespace delaystab
