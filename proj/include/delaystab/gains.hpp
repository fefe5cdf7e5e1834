#pragma once

#include <Eigen/Dense>
#include <complex>

namespace delaystab {

using cplx = std::complex<double>;

/// Leader-feedback PD gains: instantaneous (k0, h0) and delayed (k0_tau, h0_tau)
/// position/velocity gains.
struct GainVector {
    double k0 = 0.0;
    double h0 = 0.0;
    double k0_tau = 0.0;
    double h0_tau = 0.0;
};

/// Neighbor-coupling PD gains applied through the Laplacian.
struct CouplingGainVector {
    double k = 0.0;
    double h = 0.0;
    double k_tau = 0.0;
    double h_tau = 0.0;
};

/// Second-order single-agent feedback blocks. The error dynamics of one
/// scalar component read
///   d/dt [e, xi] = (M - lambda P) [e, xi] + (M_tau - lambda P_tau) [e, xi](t - tau).
struct FeedbackMatrices {
    Eigen::Matrix2d M;
    Eigen::Matrix2d M_tau;
    Eigen::Matrix2d P;
    Eigen::Matrix2d P_tau;
};

/// One 2x2 modal delay system A = M - lambda P, B = M_tau - lambda P_tau.
/// Depends on the gains only through the effective combination p0 + lambda*pbar.
struct ModeSystem {
    Eigen::Matrix2cd A;
    Eigen::Matrix2cd B;
    cplx lambda{0.0, 0.0};
    double tau = 0.0;

    /// Effective gains read back from the companion structure.
    [[nodiscard]] cplx kappa() const { return -A(1, 0); }
    [[nodiscard]] cplx eta() const { return -A(1, 1); }
    [[nodiscard]] cplx kappa_tau() const { return -B(1, 0); }
    [[nodiscard]] cplx eta_tau() const { return -B(1, 1); }
};

/// Assemble M, M_tau, P, P_tau from the two gain vectors.
[[nodiscard]] FeedbackMatrices build_feedback_matrices(const GainVector& p0,
                                                       const CouplingGainVector& pbar);

/// Effective gains of the lambda-mode: p0 + lambda * pbar (real lambda).
[[nodiscard]] GainVector effective_gains(const GainVector& p0, const CouplingGainVector& pbar,
                                         double lambda);

/// Build the modal system for one Laplacian eigenvalue. Throws
/// InvalidParameterError for tau < 0 or non-finite inputs.
[[nodiscard]] ModeSystem mode_system(const GainVector& p0, const CouplingGainVector& pbar,
                                     cplx lambda, double tau);

}  // namespace delaystab
