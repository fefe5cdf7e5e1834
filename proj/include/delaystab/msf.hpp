#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "delaystab/bifurcation.hpp"
#include "delaystab/gains.hpp"

namespace delaystab {

/// Rectangular lattice over the complex coupling plane. Must cover lambda=0.
struct GridSpec {
    double re_min = -2.0;
    double re_max = 10.0;
    double im_min = -6.0;
    double im_max = 6.0;
    double spacing = 0.05;
};

/// Master stability function Lambda_max = max Re(mu) sampled on a lattice.
/// `values` is row-major [iy * nx + ix]; a node holds -inf when the root
/// window Re in [-3, 3], |Im| <= 10 contains no characteristic root, and NaN
/// with valid == 0 when the spectrum solver failed there. `region` flags the
/// 4-connected component of {Lambda_max < 0} containing lambda = 0; it stays
/// empty and no_stable_seed is set when the origin node is unstable or
/// invalid. `boundary` is the lambda(i*omega) curve (empty if degenerate).
struct MsfField {
    GridSpec grid;
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> valid;
    std::vector<std::uint8_t> region;
    bool no_stable_seed = false;
    ParametricCurve boundary;

    [[nodiscard]] std::size_t index(std::size_t ix, std::size_t iy) const { return iy * nx + ix; }
    [[nodiscard]] cplx node(std::size_t ix, std::size_t iy) const {
        return cplx(grid.re_min + static_cast<double>(ix) * grid.spacing,
                    grid.im_min + static_cast<double>(iy) * grid.spacing);
    }
};

/// One self-intersection of the large-delay boundary curve:
/// lambda(i*omega_j) = lambda(-i*omega_j) real, theta the angle between the
/// two branch tangents in (0, 2*pi), measured along the curve orientation.
struct SelfIntersection {
    int j = 0;
    double omega = 0.0;
    double lambda = 0.0;
    double theta = 0.0;
};

/// First-order large-delay boundary
///   lambda(i*omega) ~ lambda0 * e^{i*omega*tau} * (1 - i*omega*slope),
/// lambda0 = -k0/k_tau, slope = h_tau/k_tau - h0/k0. c_estimate is the
/// fitted constant in |exact - asymptotic| <= C / tau^2 over
/// |omega*tau| <= omega_tau_window.
struct AsymptoticCurve {
    cplx lambda0{0.0, 0.0};
    double slope = 0.0;
    double c_estimate = 0.0;
    double omega_tau_window = 0.0;
    std::vector<SelfIntersection> intersections;
};

/// theta_j two ways: numeric from central differences of the exact curve
/// (authoritative, in (0, 2*pi)) and asymptotic pi + 2*pi*j*slope/tau
/// (reported as-is, may leave (0, 2*pi) at small tau).
struct AngleReport {
    int j = 0;
    double numeric = 0.0;
    double asymptotic = 0.0;
};

/// Evaluate Lambda_max per node via the characteristic spectrum, flood-fill
/// the stable component containing the origin, and attach the boundary
/// curve. Throws InvalidParameterError when the grid does not cover
/// lambda=0. Solver failures mark single nodes invalid.
[[nodiscard]] MsfField msf_field(const GainVector& p0, const CouplingGainVector& pbar, double tau,
                                 const GridSpec& grid);

/// Bilinear interpolation of the field at lambda. NaN outside the lattice or
/// when a surrounding node is invalid.
[[nodiscard]] double field_value(const MsfField& field, cplx lambda);

/// Large-delay reduction of Theorem-type hypotheses k0_tau = h0_tau = 0,
/// k = h = 0, k0 > 0, h0 > 0, k_tau != 0 (violations throw
/// TheoremHypothesisError). Fits c_estimate on |omega*tau| <= window and
/// refines the self-intersections j = 0..floor(window/pi).
[[nodiscard]] AsymptoticCurve large_delay_asymptote(const GainVector& p0,
                                                    const CouplingGainVector& pbar, double tau,
                                                    double omega_tau_window = 6.283185307179586);

/// First-order curve value at one omega.
[[nodiscard]] cplx asymptotic_lambda(const AsymptoticCurve& curve, double omega, double tau);

/// The asymptotic curve sampled on a grid, as a lambda-plane ParametricCurve
/// (samples exactly at the grid, no refinement).
[[nodiscard]] ParametricCurve asymptote_boundary(const AsymptoticCurve& curve, double tau,
                                                 const std::vector<double>& omega_grid);

/// Self-intersections j = 0..j_max of the exact boundary curve. j = 0 is the
/// curve start at lambda0; each j >= 1 is seeded at
/// (pi*j/tau)*(1 + slope/tau) and refined by a Newton solve on
/// Im lambda(i*omega) = 0. Non-convergence in 100 iterations throws
/// IntersectionNotFoundError; a tangent magnitude below 1e-12 throws
/// DegenerateTangentError.
[[nodiscard]] std::vector<SelfIntersection> self_intersections(const GainVector& p0,
                                                               const CouplingGainVector& pbar,
                                                               double tau, int j_max);

/// Dual report of the intersection angles for a fitted curve.
[[nodiscard]] std::vector<AngleReport> intersection_angles(const AsymptoticCurve& curve,
                                                           double tau);

/// max over |omega*tau| <= 2*pi of | |lambda(i*omega)| - |lambda0| |,
/// the deviation of the boundary from a circle; O(1/tau) for large tau.
[[nodiscard]] double circle_convergence_metric(const GainVector& p0,
                                               const CouplingGainVector& pbar, double tau);

/// CSV rendering: re_lambda, im_lambda, lambda_max, in_region per node.
[[nodiscard]] std::string to_csv(const MsfField& field);

}  // namespace delaystab
