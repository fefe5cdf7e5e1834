#include "delaystab/gains.hpp"

#include <cmath>

#include "delaystab/errors.hpp"

namespace delaystab {

namespace {

bool all_finite(const GainVector& g) {
    return std::isfinite(g.k0) && std::isfinite(g.h0) && std::isfinite(g.k0_tau) &&
           std::isfinite(g.h0_tau);
}

bool all_finite(const CouplingGainVector& g) {
    return std::isfinite(g.k) && std::isfinite(g.h) && std::isfinite(g.k_tau) &&
           std::isfinite(g.h_tau);
}

}  // namespace

FeedbackMatrices build_feedback_matrices(const GainVector& p0, const CouplingGainVector& pbar) {
    if (!all_finite(p0) || !all_finite(pbar)) {
        throw InvalidParameterError("build_feedback_matrices: gains must be finite");
    }
    FeedbackMatrices fb;
    fb.M << 0.0, 1.0, -p0.k0, -p0.h0;
    fb.M_tau << 0.0, 0.0, -p0.k0_tau, -p0.h0_tau;
    fb.P << 0.0, 0.0, pbar.k, pbar.h;
    fb.P_tau << 0.0, 0.0, pbar.k_tau, pbar.h_tau;
    return fb;
}

GainVector effective_gains(const GainVector& p0, const CouplingGainVector& pbar, double lambda) {
    return GainVector{p0.k0 + lambda * pbar.k, p0.h0 + lambda * pbar.h,
                      p0.k0_tau + lambda * pbar.k_tau, p0.h0_tau + lambda * pbar.h_tau};
}

ModeSystem mode_system(const GainVector& p0, const CouplingGainVector& pbar, cplx lambda,
                       double tau) {
    if (!(tau >= 0.0) || !std::isfinite(tau)) {
        throw InvalidParameterError("mode_system: tau must be finite and >= 0");
    }
    if (!all_finite(p0) || !all_finite(pbar) || !std::isfinite(lambda.real()) ||
        !std::isfinite(lambda.imag())) {
        throw InvalidParameterError("mode_system: gains and lambda must be finite");
    }
    const FeedbackMatrices fb = build_feedback_matrices(p0, pbar);
    ModeSystem m;
    m.A = fb.M.cast<cplx>() - lambda * fb.P.cast<cplx>();
    m.B = fb.M_tau.cast<cplx>() - lambda * fb.P_tau.cast<cplx>();
    m.lambda = lambda;
    m.tau = tau;
    return m;
}

}  // namespace delaystab
