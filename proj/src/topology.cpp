#include "delaystab/topology.hpp"

#include <algorithm>
#include <cmath>

#include "delaystab/errors.hpp"

namespace delaystab {

Topology topology_from_adjacency(const Eigen::MatrixXd& adjacency) {
    const auto n = adjacency.rows();
    if (n == 0 || adjacency.cols() != n) {
        throw InvalidTopologyError("adjacency matrix must be square and nonempty");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double a = adjacency(i, j);
            if (!std::isfinite(a)) {
                throw InvalidTopologyError("adjacency weights must be finite");
            }
            if (i == j && a != 0.0) {
                throw InvalidTopologyError("adjacency diagonal must be zero");
            }
            if (a < 0.0) {
                throw InvalidTopologyError("adjacency weights must be nonnegative");
            }
        }
    }
    Topology t;
    t.adjacency = adjacency;
    t.laplacian = -adjacency;
    for (Eigen::Index i = 0; i < n; ++i) {
        t.laplacian(i, i) = adjacency.row(i).sum();
    }
    return t;
}

std::vector<cplx> laplacian_eigenvalues(const Topology& topology) {
    const Eigen::EigenSolver<Eigen::MatrixXd> solver(topology.laplacian,
                                                     /*computeEigenvectors=*/false);
    std::vector<cplx> eigs(solver.eigenvalues().data(),
                           solver.eigenvalues().data() + solver.eigenvalues().size());
    for (auto& e : eigs) {
        if (std::abs(e) < 1e-12) e = cplx(0.0, 0.0);
        if (std::abs(e.imag()) < 1e-12) e = cplx(e.real(), 0.0);
    }
    std::sort(eigs.begin(), eigs.end(), [](const cplx& a, const cplx& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
    return eigs;
}

FormationSpec make_formation_spec(const Eigen::MatrixXd& adjacency, const Eigen::MatrixXd& offsets,
                                  const GainVector& p0, const CouplingGainVector& pbar,
                                  double tau) {
    FormationSpec spec;
    spec.topology = topology_from_adjacency(adjacency);
    if (offsets.rows() != spec.topology.size() || offsets.cols() != 3) {
        throw InvalidParameterError("offsets must be N x 3 with N matching the topology");
    }
    if (!offsets.allFinite()) {
        throw InvalidParameterError("offsets must be finite");
    }
    if (!(tau >= 0.0) || !std::isfinite(tau)) {
        throw InvalidParameterError("tau must be finite and >= 0");
    }
    spec.offsets = offsets;
    spec.p0 = p0;
    spec.pbar = pbar;
    spec.tau = tau;
    return spec;
}

}  // namespace delaystab
