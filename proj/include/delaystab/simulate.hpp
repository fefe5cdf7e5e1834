#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "delaystab/topology.hpp"

namespace delaystab {

/// Leader trajectory R0(t): one polynomial of degree <= 4 per axis,
/// coefficients[axis][p] multiplying t^p. Twice continuously differentiable
/// by construction.
struct TrajectorySpec {
    std::array<std::array<double, 5>, 3> coefficients{};

    [[nodiscard]] Eigen::Vector3d position(double t) const;
    [[nodiscard]] Eigen::Vector3d velocity(double t) const;
    [[nodiscard]] Eigen::Vector3d acceleration(double t) const;
};

/// The parabola target R0(t) = (0.005 (t^2 + 1), 0.5 t, 0.8 t).
[[nodiscard]] TrajectorySpec default_trajectory();

/// Initial-history policy on [-tau, 0].
///  - PerturbedRest: agents at rest (zero velocity) at target position plus a
///    per-agent offset, held constant over the whole history interval. The
///    default offset of agent i is the unit vector along axis (i mod 3)
///    scaled by (1 + i / 3); explicit offsets override the pattern.
///  - OnTarget: agents ride the target exactly (zero position and velocity
///    error) over the whole history interval.
enum class HistoryPolicy {
    PerturbedRest,
    OnTarget,
};

/// Full simulation setup. dt == 0 selects the default step
/// default_time_step(tau); an explicit dt must satisfy dt > 0 and
/// dt <= tau / 8 when tau > 0. t_end must exceed tau. history_offsets, when
/// non-empty, must be N x 3 and replaces the default perturbation pattern;
/// history_scale multiplies whichever offsets are in effect.
struct SimulationConfig {
    FormationSpec formation;
    TrajectorySpec trajectory;
    double t_end = 0.0;
    double dt = 0.0;
    HistoryPolicy history = HistoryPolicy::PerturbedRest;
    Eigen::MatrixXd history_offsets;
    double history_scale = 1.0;
};

/// Default integration step: min(tau / 20, 0.01) for tau > 0, rounded down so
/// the delay is an integer number of steps; 0.01 when tau == 0.
[[nodiscard]] double default_time_step(double tau);

/// Positions and velocities of all agents at one instant, one row per agent.
struct AgentState {
    Eigen::MatrixXd positions;
    Eigen::MatrixXd velocities;
};

/// Per-agent control force of the delayed PD controller tracking the virtual
/// leader: neighbor coupling through the Laplacian, leader feedback, and the
/// feedforward U0(t) = acceleration of the leader. Returns an N x 3 matrix,
/// row i = U_i. Throws InvalidParameterError on shape mismatch or non-finite
/// input.
[[nodiscard]] Eigen::MatrixXd control_input(const AgentState& now, const AgentState& delayed,
                                            double t, const SimulationConfig& config);

/// Time series produced by integrate(). positions[k] and velocities[k] are
/// N x 3 snapshots at t[k]. tracking_error is the Euclidean norm of the
/// stacked position error e(t); formation_error is the norm of (L kron 1_3)
/// e(t), computed with the complete-graph Laplacian when the topology has no
/// edges (so the metric still measures shape disagreement for uncoupled
/// runs). A non-finite state or a state norm beyond 1e12 stops the run early:
/// diverged is set, divergence_time records the failed step time, and the
/// samples up to the last finite state are kept.
struct TrajectoryLog {
    std::vector<double> t;
    std::size_t agents = 0;
    std::vector<Eigen::MatrixXd> positions;
    std::vector<Eigen::MatrixXd> velocities;
    std::vector<double> tracking_error;
    std::vector<double> formation_error;
    bool diverged = false;
    double divergence_time = std::numeric_limits<double>::quiet_NaN();
};

/// Integrate the full 3-D agent dynamics with the classical 4th-order
/// one-step scheme and the method of steps: delayed lookups evaluate the
/// initial-history policy for times <= 0 and a piecewise cubic Hermite
/// interpolant of the stored (state, derivative) nodes afterwards. The node
/// history of the whole run is retained. Throws InvalidParameterError when
/// the config invariants fail.
[[nodiscard]] TrajectoryLog integrate(const SimulationConfig& config);

/// Least-squares slope of ln ||e(t)|| over samples with window_start <= t <=
/// window_end. Throws InvalidParameterError when the log does not cover the
/// window or fewer than two samples fall inside it, FitWindowExhaustedError
/// when the error norm underflows to numerical zero inside the window.
[[nodiscard]] double decay_rate_fit(const TrajectoryLog& log, double window_start,
                                    double window_end);

/// CSV with header t,agent_id,x,y,z,vx,vy,vz; one row per agent per sample.
[[nodiscard]] std::string to_trajectory_csv(const TrajectoryLog& log);

/// CSV with header t,tracking_error,formation_error; one row per sample.
[[nodiscard]] std::string to_summary_csv(const TrajectoryLog& log);

}  // namespace delaystab
