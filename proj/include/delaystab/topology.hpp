#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "delaystab/gains.hpp"

namespace delaystab {

/// Weighted directed interaction graph. laplacian(i,i) = sum of row i weights,
/// laplacian(i,j) = -a(i,j) for i != j.
struct Topology {
    Eigen::MatrixXd adjacency;
    Eigen::MatrixXd laplacian;

    [[nodiscard]] int size() const { return static_cast<int>(adjacency.rows()); }
};

/// Validate an adjacency matrix (square, nonnegative weights, zero diagonal,
/// finite) and build the coupling Laplacian. Throws InvalidTopologyError.
[[nodiscard]] Topology topology_from_adjacency(const Eigen::MatrixXd& adjacency);

/// Eigenvalues of the Laplacian, sorted by (Re, Im). Values within 1e-12 of
/// zero are snapped to exactly zero.
[[nodiscard]] std::vector<cplx> laplacian_eigenvalues(const Topology& topology);

/// Full formation description: who couples to whom, the desired offsets from
/// the leader trajectory, the gains and the common delay.
struct FormationSpec {
    Topology topology;
    Eigen::MatrixXd offsets;  // N x 3, row i = s_i
    GainVector p0;
    CouplingGainVector pbar;
    double tau = 0.0;
};

/// Validate the pieces of a FormationSpec (offset row count matches N,
/// tau >= 0). Throws InvalidParameterError / InvalidTopologyError.
[[nodiscard]] FormationSpec make_formation_spec(const Eigen::MatrixXd& adjacency,
                                                const Eigen::MatrixXd& offsets,
                                                const GainVector& p0,
                                                const CouplingGainVector& pbar, double tau);

}  // namespace delaystab
