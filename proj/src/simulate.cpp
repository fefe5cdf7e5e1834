#include "delaystab/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "delaystab/errors.hpp"

namespace delaystab {

namespace {

constexpr double kDivergenceNorm = 1e12;
constexpr double kZeroErrorFloor = 1e-300;

double polynomial(const std::array<double, 5>& c, double t, int derivative) {
    double value = 0.0;
    for (int p = 4; p >= derivative; --p) {
        double factor = 1.0;
        for (int q = 0; q < derivative; ++q) factor *= static_cast<double>(p - q);
        value = value * t + factor * c[static_cast<std::size_t>(p)];
    }
    return value;
}

Eigen::Vector3d evaluate(const TrajectorySpec& spec, double t, int derivative) {
    Eigen::Vector3d out;
    for (int axis = 0; axis < 3; ++axis)
        out(axis) = polynomial(spec.coefficients[static_cast<std::size_t>(axis)], t, derivative);
    return out;
}

void check_trajectory(const TrajectorySpec& spec) {
    for (const auto& axis : spec.coefficients)
        for (double c : axis)
            if (!std::isfinite(c))
                throw InvalidParameterError("trajectory coefficients must be finite");
}

void check_gains_finite(const GainVector& p0, const CouplingGainVector& pbar) {
    for (double g : {p0.k0, p0.h0, p0.k0_tau, p0.h0_tau, pbar.k, pbar.h, pbar.k_tau, pbar.h_tau})
        if (!std::isfinite(g)) throw InvalidParameterError("gains must be finite");
}

void check_formation(const FormationSpec& formation) {
    const Eigen::Index n = formation.topology.adjacency.rows();
    if (n == 0 || formation.topology.adjacency.cols() != n ||
        formation.topology.laplacian.rows() != n || formation.topology.laplacian.cols() != n)
        throw InvalidParameterError("formation topology matrices must be square and consistent");
    if (formation.offsets.rows() != n || formation.offsets.cols() != 3)
        throw InvalidParameterError("formation offsets must be N x 3");
    if (!formation.offsets.allFinite() || !formation.topology.adjacency.allFinite() ||
        !formation.topology.laplacian.allFinite())
        throw InvalidParameterError("formation matrices must be finite");
    if (!std::isfinite(formation.tau) || formation.tau < 0.0)
        throw InvalidParameterError("tau must be finite and >= 0");
    check_gains_finite(formation.p0, formation.pbar);
}

void check_config(const SimulationConfig& config) {
    check_formation(config.formation);
    check_trajectory(config.trajectory);
    const double tau = config.formation.tau;
    if (!std::isfinite(config.t_end) || config.t_end <= tau || config.t_end <= 0.0)
        throw InvalidParameterError("t_end must be finite and exceed tau");
    if (!std::isfinite(config.dt) || config.dt < 0.0)
        throw InvalidParameterError("dt must be finite and >= 0");
    if (config.dt > 0.0 && tau > 0.0 && config.dt > tau / 8.0)
        throw InvalidParameterError("dt must not exceed tau / 8");
    if (!std::isfinite(config.history_scale))
        throw InvalidParameterError("history_scale must be finite");
    if (config.history_offsets.size() != 0) {
        if (config.history_offsets.rows() != config.formation.topology.adjacency.rows() ||
            config.history_offsets.cols() != 3)
            throw InvalidParameterError("history_offsets must be N x 3");
        if (!config.history_offsets.allFinite())
            throw InvalidParameterError("history_offsets must be finite");
    }
}

Eigen::MatrixXd perturbation_offsets(const SimulationConfig& config) {
    const Eigen::Index n = config.formation.topology.adjacency.rows();
    Eigen::MatrixXd offsets;
    if (config.history_offsets.size() != 0) {
        offsets = config.history_offsets;
    } else {
        offsets = Eigen::MatrixXd::Zero(n, 3);
        for (Eigen::Index i = 0; i < n; ++i)
            offsets(i, i % 3) = 1.0 + static_cast<double>(i / 3);
    }
    return config.history_scale * offsets;
}

/// Target positions 1 kron R0(t) + s as an N x 3 matrix.
Eigen::MatrixXd target_positions(const SimulationConfig& config, double t) {
    Eigen::MatrixXd target = config.formation.offsets;
    target.rowwise() += evaluate(config.trajectory, t, 0).transpose();
    return target;
}

AgentState history_state(const SimulationConfig& config, const Eigen::MatrixXd& perturbation,
                         double t) {
    AgentState state;
    const Eigen::Index n = config.formation.topology.adjacency.rows();
    if (config.history == HistoryPolicy::OnTarget) {
        state.positions = target_positions(config, t);
        state.velocities = Eigen::MatrixXd::Zero(n, 3);
        state.velocities.rowwise() += evaluate(config.trajectory, t, 1).transpose();
    } else {
        state.positions = target_positions(config, 0.0) + perturbation;
        state.velocities = Eigen::MatrixXd::Zero(n, 3);
    }
    return state;
}

/// Stacked state layout: rows 0..N-1 positions, rows N..2N-1 velocities.
Eigen::MatrixXd pack(const AgentState& state) {
    const Eigen::Index n = state.positions.rows();
    Eigen::MatrixXd packed(2 * n, 3);
    packed.topRows(n) = state.positions;
    packed.bottomRows(n) = state.velocities;
    return packed;
}

AgentState unpack(const Eigen::MatrixXd& packed) {
    const Eigen::Index n = packed.rows() / 2;
    return AgentState{packed.topRows(n), packed.bottomRows(n)};
}

Eigen::MatrixXd derivative(const SimulationConfig& config, double t, const Eigen::MatrixXd& packed,
                           const Eigen::MatrixXd& packed_delayed) {
    const Eigen::Index n = packed.rows() / 2;
    Eigen::MatrixXd out(2 * n, 3);
    out.topRows(n) = packed.bottomRows(n);
    out.bottomRows(n) =
        control_input(unpack(packed), unpack(packed_delayed), t, config);
    return out;
}

struct History {
    std::vector<double> times;
    std::vector<Eigen::MatrixXd> states;
    std::vector<Eigen::MatrixXd> derivatives;

    [[nodiscard]] Eigen::MatrixXd at(double t) const {
        if (t >= times.back()) return states.back();
        const auto it = std::upper_bound(times.begin(), times.end(), t);
        const std::size_t hi = std::min(
            static_cast<std::size_t>(it - times.begin()), times.size() - 1);
        const std::size_t lo = hi == 0 ? 0 : hi - 1;
        const double h = times[hi] - times[lo];
        const double s = (t - times[lo]) / h;
        const double s2 = s * s;
        const double s3 = s2 * s;
        return (2.0 * s3 - 3.0 * s2 + 1.0) * states[lo] + (s3 - 2.0 * s2 + s) * h * derivatives[lo] +
               (-2.0 * s3 + 3.0 * s2) * states[hi] + (s3 - s2) * h * derivatives[hi];
    }
};

void append_sample(TrajectoryLog& log, const SimulationConfig& config,
                   const Eigen::MatrixXd& formation_metric, double t,
                   const Eigen::MatrixXd& packed) {
    const Eigen::Index n = packed.rows() / 2;
    const Eigen::MatrixXd error = packed.topRows(n) - target_positions(config, t);
    log.t.push_back(t);
    log.positions.push_back(packed.topRows(n));
    log.velocities.push_back(packed.bottomRows(n));
    log.tracking_error.push_back(error.norm());
    log.formation_error.push_back((formation_metric * error).norm());
}

}  // namespace

Eigen::Vector3d TrajectorySpec::position(double t) const { return evaluate(*this, t, 0); }

Eigen::Vector3d TrajectorySpec::velocity(double t) const { return evaluate(*this, t, 1); }

Eigen::Vector3d TrajectorySpec::acceleration(double t) const { return evaluate(*this, t, 2); }

TrajectorySpec default_trajectory() {
    TrajectorySpec spec;
    spec.coefficients[0] = {0.005, 0.0, 0.005, 0.0, 0.0};
    spec.coefficients[1] = {0.0, 0.5, 0.0, 0.0, 0.0};
    spec.coefficients[2] = {0.0, 0.8, 0.0, 0.0, 0.0};
    return spec;
}

double default_time_step(double tau) {
    if (!std::isfinite(tau) || tau < 0.0)
        throw InvalidParameterError("tau must be finite and >= 0");
    if (tau == 0.0) return 0.01;
    const double target = std::min(tau / 20.0, 0.01);
    return tau / std::ceil(tau / target);
}

Eigen::MatrixXd control_input(const AgentState& now, const AgentState& delayed, double t,
                              const SimulationConfig& config) {
    check_formation(config.formation);
    check_trajectory(config.trajectory);
    if (!std::isfinite(t)) throw InvalidParameterError("t must be finite");
    const Eigen::Index n = config.formation.topology.adjacency.rows();
    for (const Eigen::MatrixXd* m :
         {&now.positions, &now.velocities, &delayed.positions, &delayed.velocities})
        if (m->rows() != n || m->cols() != 3)
            throw InvalidParameterError("agent states must be N x 3");

    const FormationSpec& formation = config.formation;
    const GainVector& p0 = formation.p0;
    const CouplingGainVector& pbar = formation.pbar;
    const double td = t - formation.tau;

    const Eigen::MatrixXd shape_now = now.positions - formation.offsets;
    const Eigen::MatrixXd shape_delayed = delayed.positions - formation.offsets;
    Eigen::MatrixXd control =
        -(formation.topology.laplacian *
          (pbar.k * shape_now + pbar.k_tau * shape_delayed + pbar.h * now.velocities +
           pbar.h_tau * delayed.velocities));

    control -= p0.k0 * (now.positions - target_positions(config, t));
    control -= p0.k0_tau * (delayed.positions - target_positions(config, td));

    Eigen::MatrixXd velocity_error = now.velocities;
    velocity_error.rowwise() -= evaluate(config.trajectory, t, 1).transpose();
    control -= p0.h0 * velocity_error;
    velocity_error = delayed.velocities;
    velocity_error.rowwise() -= evaluate(config.trajectory, td, 1).transpose();
    control -= p0.h0_tau * velocity_error;

    control.rowwise() += evaluate(config.trajectory, t, 2).transpose();
    return control;
}

TrajectoryLog integrate(const SimulationConfig& config) {
    check_config(config);
    const double tau = config.formation.tau;
    const double dt = config.dt > 0.0 ? config.dt : default_time_step(tau);
    const Eigen::Index n = config.formation.topology.adjacency.rows();

    Eigen::MatrixXd formation_metric = config.formation.topology.laplacian;
    if (formation_metric.norm() == 0.0) {
        formation_metric = -Eigen::MatrixXd::Ones(n, n);
        formation_metric.diagonal().array() = static_cast<double>(n - 1);
    }

    const Eigen::MatrixXd perturbation = perturbation_offsets(config);
    const auto prehistory = [&](double t) { return pack(history_state(config, perturbation, t)); };
    const auto delayed_at = [&](const History& history, double t) {
        return t <= 0.0 ? prehistory(t) : history.at(t);
    };

    History history;
    TrajectoryLog log;
    log.agents = static_cast<std::size_t>(n);

    Eigen::MatrixXd state = prehistory(0.0);
    Eigen::MatrixXd slope =
        derivative(config, 0.0, state, tau > 0.0 ? prehistory(-tau) : state);
    history.times.push_back(0.0);
    history.states.push_back(state);
    history.derivatives.push_back(slope);
    append_sample(log, config, formation_metric, 0.0, state);

    const auto steps = static_cast<std::size_t>(std::ceil(config.t_end / dt - 1e-9));
    double t = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
        const double t_next = std::min(config.t_end, dt * static_cast<double>(step + 1));
        const double h = t_next - t;
        const double t_mid = t + 0.5 * h;

        const Eigen::MatrixXd& k1 = slope;
        Eigen::MatrixXd stage = state + (0.5 * h) * k1;
        const Eigen::MatrixXd k2 = derivative(
            config, t_mid, stage, tau > 0.0 ? delayed_at(history, t_mid - tau) : stage);
        stage = state + (0.5 * h) * k2;
        const Eigen::MatrixXd k3 = derivative(
            config, t_mid, stage, tau > 0.0 ? delayed_at(history, t_mid - tau) : stage);
        stage = state + h * k3;
        const Eigen::MatrixXd k4 = derivative(
            config, t_next, stage, tau > 0.0 ? delayed_at(history, t_next - tau) : stage);

        state += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t = t_next;

        if (!state.allFinite() || state.norm() > kDivergenceNorm) {
            log.diverged = true;
            log.divergence_time = t;
            return log;
        }

        slope = derivative(config, t, state, tau > 0.0 ? delayed_at(history, t - tau) : state);
        history.times.push_back(t);
        history.states.push_back(state);
        history.derivatives.push_back(slope);
        append_sample(log, config, formation_metric, t, state);
    }
    return log;
}

double decay_rate_fit(const TrajectoryLog& log, double window_start, double window_end) {
    if (!std::isfinite(window_start) || !std::isfinite(window_end) || window_start >= window_end)
        throw InvalidParameterError("fit window must be finite with start < end");
    if (log.t.empty() || window_start < log.t.front() || window_end > log.t.back())
        throw InvalidParameterError("log does not cover the fit window");

    double sum_t = 0.0;
    double sum_y = 0.0;
    double sum_tt = 0.0;
    double sum_ty = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < log.t.size(); ++i) {
        if (log.t[i] < window_start || log.t[i] > window_end) continue;
        const double norm = log.tracking_error[i];
        if (!(norm > kZeroErrorFloor))
            throw FitWindowExhaustedError("error norm reached numerical zero inside the window");
        const double y = std::log(norm);
        sum_t += log.t[i];
        sum_y += y;
        sum_tt += log.t[i] * log.t[i];
        sum_ty += log.t[i] * y;
        ++count;
    }
    if (count < 2) throw InvalidParameterError("fit window must contain at least two samples");
    const double denom = static_cast<double>(count) * sum_tt - sum_t * sum_t;
    if (denom == 0.0) throw InvalidParameterError("fit window has no time spread");
    return (static_cast<double>(count) * sum_ty - sum_t * sum_y) / denom;
}

std::string to_trajectory_csv(const TrajectoryLog& log) {
    std::string csv = "t,agent_id,x,y,z,vx,vy,vz\n";
    char line[256];
    for (std::size_t k = 0; k < log.t.size(); ++k) {
        for (Eigen::Index i = 0; i < log.positions[k].rows(); ++i) {
            std::snprintf(line, sizeof(line),
                          "%.17g,%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", log.t[k],
                          static_cast<long long>(i), log.positions[k](i, 0),
                          log.positions[k](i, 1), log.positions[k](i, 2),
                          log.velocities[k](i, 0), log.velocities[k](i, 1),
                          log.velocities[k](i, 2));
            csv += line;
        }
    }
    return csv;
}

std::string to_summary_csv(const TrajectoryLog& log) {
    std::string csv = "t,tracking_error,formation_error\n";
    char line[128];
    for (std::size_t k = 0; k < log.t.size(); ++k) {
        std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g\n", log.t[k], log.tracking_error[k],
                      log.formation_error[k]);
        csv += line;
    }
    return csv;
}

}  // namespace delaystab
