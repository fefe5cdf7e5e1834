#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "delaystab/errors.hpp"
#include "delaystab/gains.hpp"
#include "delaystab/simulate.hpp"
#include "delaystab/spectrum.hpp"
#include "delaystab/topology.hpp"
#include "doctest.h"

using namespace delaystab;

namespace {

Eigen::MatrixXd paper_adjacency() {
    Eigen::MatrixXd adj(3, 3);
    adj << 0, 2, 1, 2, 0, 1, 2, 1, 0;
    return adj;
}

Eigen::MatrixXd triangle_offsets(double scale) {
    Eigen::MatrixXd s(3, 3);
    s << 0, -10, 0, 20, 10, 0, -20, 10, 0;
    return scale * s;
}

SimulationConfig single_agent(const GainVector& p0, double tau, double t_end) {
    SimulationConfig config;
    config.formation = make_formation_spec(Eigen::MatrixXd::Zero(1, 1),
                                           Eigen::MatrixXd::Zero(1, 3), p0,
                                           CouplingGainVector{}, tau);
    config.t_end = t_end;
    return config;
}

SimulationConfig three_agents(const GainVector& p0, bool coupled, double tau, double t_end,
                              double formation_scale) {
    SimulationConfig config;
    config.formation = make_formation_spec(
        coupled ? paper_adjacency() : Eigen::MatrixXd::Zero(3, 3),
        triangle_offsets(formation_scale), p0,
        coupled ? CouplingGainVector{3.0, 3.0, -0.5, 0.0} : CouplingGainVector{}, tau);
    config.trajectory = default_trajectory();
    config.t_end = t_end;
    return config;
}

double window_fit(const std::vector<double>& t, const std::vector<double>& value, double lo,
                  double hi) {
    double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
    double n = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] < lo || t[k] > hi) continue;
        const double y = std::log(value[k]);
        st += t[k];
        sy += y;
        stt += t[k] * t[k];
        sty += t[k] * y;
        n += 1.0;
    }
    return (n * sty - st * sy) / (n * stt - st * st);
}

}  // namespace

TEST_CASE("trajectory polynomials and their derivatives") {
    const TrajectorySpec leader = default_trajectory();
    CHECK(leader.position(3.0).isApprox(Eigen::Vector3d(0.05, 1.5, 2.4), 1e-12));
    CHECK(leader.velocity(3.0).isApprox(Eigen::Vector3d(0.03, 0.5, 0.8), 1e-12));
    CHECK(leader.acceleration(3.0).isApprox(Eigen::Vector3d(0.01, 0.0, 0.0), 1e-12));

    TrajectorySpec quartic;
    quartic.coefficients[1] = {1.0, -2.0, 3.0, -4.0, 5.0};
    const double t = 1.7;
    CHECK(quartic.position(t)(1) ==
          doctest::Approx(1.0 - 2.0 * t + 3.0 * t * t - 4.0 * t * t * t + 5.0 * t * t * t * t)
              .epsilon(1e-12));
    CHECK(quartic.velocity(t)(1) ==
          doctest::Approx(-2.0 + 6.0 * t - 12.0 * t * t + 20.0 * t * t * t).epsilon(1e-12));
    CHECK(quartic.acceleration(t)(1) ==
          doctest::Approx(6.0 - 24.0 * t + 60.0 * t * t).epsilon(1e-12));
    CHECK(quartic.position(t)(0) == 0.0);
    CHECK(quartic.position(t)(2) == 0.0);
}

TEST_CASE("default time step divides the delay") {
    CHECK(default_time_step(0.0) == 0.01);
    CHECK(default_time_step(4.5) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(default_time_step(0.1) == doctest::Approx(0.005).epsilon(1e-12));
    CHECK(default_time_step(0.013) == doctest::Approx(0.00065).epsilon(1e-12));
    for (double tau : {0.1, 1.03, 4.5, 5.7, 15.0}) {
        const double dt = default_time_step(tau);
        CHECK(dt <= std::min(tau / 20.0, 0.01) * (1.0 + 1e-12));
        const double ratio = tau / dt;
        CHECK(std::abs(ratio - std::round(ratio)) <= 1e-6);
    }
    CHECK_THROWS_AS((void)default_time_step(-1.0), InvalidParameterError);
}

TEST_CASE("simulation config invariants are enforced") {
    SimulationConfig config = single_agent(GainVector{2.0, 3.0, 0.0, 0.0}, 2.0, 1.0);
    CHECK_THROWS_AS((void)integrate(config), InvalidParameterError);

    config.t_end = 10.0;
    config.dt = 0.3;
    CHECK_THROWS_AS((void)integrate(config), InvalidParameterError);
    config.dt = -0.1;
    CHECK_THROWS_AS((void)integrate(config), InvalidParameterError);

    config.dt = 0.25;
    const TrajectoryLog log = integrate(config);
    CHECK(log.t.size() == 41);
    CHECK(log.t.back() == doctest::Approx(10.0).epsilon(1e-12));

    config.history_offsets = Eigen::MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS((void)integrate(config), InvalidParameterError);
    config.history_offsets.resize(0, 0);
    config.history_scale = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS((void)integrate(config), InvalidParameterError);
    config.history_scale = 1.0;
    config.trajectory.coefficients[0][4] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS((void)integrate(config), InvalidParameterError);
}

TEST_CASE("control input is pure feedforward at zero error") {
    SimulationConfig config = three_agents(GainVector{6.0, 0.0, 0.3, 0.0}, true, 4.5, 30.0, 1.0);
    const double t = 7.0;
    const auto on_target = [&](double at) {
        AgentState state;
        state.positions = config.formation.offsets;
        state.positions.rowwise() += config.trajectory.position(at).transpose();
        state.velocities = Eigen::MatrixXd::Zero(3, 3);
        state.velocities.rowwise() += config.trajectory.velocity(at).transpose();
        return state;
    };
    const AgentState now = on_target(t);
    const AgentState delayed = on_target(t - 4.5);
    const Eigen::MatrixXd u = control_input(now, delayed, t, config);
    const Eigen::Vector3d feedforward = config.trajectory.acceleration(t);
    CHECK((u.rowwise() - feedforward.transpose()).norm() <= 1e-12);

    AgentState shifted = now;
    const Eigen::Vector3d shift(0.7, -0.3, 0.2);
    shifted.positions.rowwise() += shift.transpose();
    const Eigen::MatrixXd u_shifted = control_input(shifted, delayed, t, config);
    const Eigen::MatrixXd expected =
        u - 6.0 * Eigen::MatrixXd::Ones(3, 1) * shift.transpose();
    CHECK((u_shifted - expected).norm() <= 1e-12);

    AgentState wrong = now;
    wrong.positions = Eigen::MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS((void)control_input(wrong, delayed, t, config), InvalidParameterError);
}

TEST_CASE("control input fires the instantaneous position term alone") {
    SimulationConfig config = single_agent(GainVector{2.0, 3.0, 0.5, 0.2}, 1.0, 10.0);
    config.trajectory = default_trajectory();
    const double t = 4.0;
    AgentState now;
    now.positions = config.trajectory.position(t).transpose();
    now.positions(0, 0) += 1.0;
    now.velocities = config.trajectory.velocity(t).transpose();
    AgentState delayed;
    delayed.positions = config.trajectory.position(t - 1.0).transpose();
    delayed.velocities = config.trajectory.velocity(t - 1.0).transpose();
    const Eigen::MatrixXd u = control_input(now, delayed, t, config);
    const Eigen::Vector3d expected =
        Eigen::Vector3d(-2.0, 0.0, 0.0) + config.trajectory.acceleration(t);
    CHECK((u.row(0).transpose() - expected).norm() <= 1e-12);
}

TEST_CASE("undelayed single agent follows the closed-form error decay") {
    SimulationConfig config = single_agent(GainVector{2.0, 3.0, 0.0, 0.0}, 0.0, 20.0);
    config.history_offsets = Eigen::MatrixXd::Zero(1, 3);
    config.history_offsets(0, 0) = 1.0;
    const TrajectoryLog log = integrate(config);
    REQUIRE(log.t.size() == 2001);
    CHECK_FALSE(log.diverged);
    for (double tq : {3.0, 5.0, 10.0}) {
        const auto k = static_cast<std::size_t>(std::llround(tq / 0.01));
        const double expected = 2.0 * std::exp(-log.t[k]) - std::exp(-2.0 * log.t[k]);
        CHECK(std::abs(log.tracking_error[k] - expected) <= 0.02 * expected);
    }
    const double rate = decay_rate_fit(log, 3.0, 15.0);
    CHECK(std::abs(rate - (-1.0)) <= 0.02);
}

TEST_CASE("doubling the initial error doubles the whole error curve") {
    SimulationConfig config = single_agent(GainVector{2.0, 3.0, 0.5, 0.2}, 1.0, 10.0);
    const TrajectoryLog base = integrate(config);
    config.history_scale = 2.0;
    const TrajectoryLog doubled = integrate(config);
    REQUIRE(base.t.size() == doubled.t.size());
    for (std::size_t k = 0; k < base.t.size(); ++k) {
        if (base.tracking_error[k] < 1e-13) continue;
        CHECK(std::abs(doubled.tracking_error[k] - 2.0 * base.tracking_error[k]) <=
              1e-9 * 2.0 * base.tracking_error[k]);
    }
}

TEST_CASE("agents starting on target stay on target") {
    SimulationConfig config = three_agents(GainVector{6.0, 0.0, 0.3, 0.0}, true, 4.5, 30.0, 1.0);
    config.history = HistoryPolicy::OnTarget;
    const TrajectoryLog log = integrate(config);
    for (double e : log.tracking_error) CHECK(e <= 1e-9);
    for (double e : log.formation_error) CHECK(e <= 1e-9);
}

TEST_CASE("identical per-agent errors reduce to the uncoupled run") {
    Eigen::MatrixXd delta(3, 3);
    for (int i = 0; i < 3; ++i) delta.row(i) << 1.0, 0.5, -0.25;
    SimulationConfig coupled = three_agents(GainVector{6.0, 0.0, 0.3, 0.0}, true, 4.5, 40.0, 0.0);
    coupled.history_offsets = delta;
    const TrajectoryLog coupled_log = integrate(coupled);
    SimulationConfig uncoupled =
        three_agents(GainVector{6.0, 0.0, 0.3, 0.0}, false, 4.5, 40.0, 0.0);
    uncoupled.history_offsets = delta;
    const TrajectoryLog uncoupled_log = integrate(uncoupled);
    REQUIRE(coupled_log.t.size() == uncoupled_log.t.size());
    for (std::size_t k = 0; k < coupled_log.t.size(); ++k) {
        CHECK((coupled_log.positions[k] - uncoupled_log.positions[k]).norm() <= 1e-9);
        CHECK(coupled_log.formation_error[k] <= 1e-9);
    }
}

TEST_CASE("projected modes decay at their own lambda_max") {
    const GainVector p0{6.0, 0.0, 0.3, 0.0};
    const CouplingGainVector pbar{3.0, 3.0, -0.5, 0.0};
    SimulationConfig config;
    config.formation = make_formation_spec(paper_adjacency(), Eigen::MatrixXd::Zero(3, 3), p0,
                                           pbar, 2.0);
    config.t_end = 45.0;
    const TrajectoryLog log = integrate(config);
    REQUIRE_FALSE(log.diverged);

    const Eigen::Matrix3d laplacian = config.formation.topology.laplacian;
    const Eigen::EigenSolver<Eigen::Matrix3d> solver(laplacian);
    const Eigen::Matrix3cd left = solver.eigenvectors().inverse();
    for (int m = 0; m < 3; ++m) {
        const double lambda = solver.eigenvalues()(m).real();
        CHECK(std::abs(solver.eigenvalues()(m).imag()) <= 1e-9);
        std::vector<double> amplitude(log.t.size());
        for (std::size_t k = 0; k < log.t.size(); ++k)
            amplitude[k] = (left.row(m) * log.positions[k].cast<cplx>()).norm();
        const double fitted = window_fit(log.t, amplitude, 8.0, 30.0);
        const double expected = lambda_max(mode_system(p0, pbar, cplx(lambda, 0.0), 2.0));
        CHECK(std::abs(fitted - expected) <= 0.05 * std::abs(expected));
    }
}

TEST_CASE("halving the step raises the accuracy like a 4th order method") {
    const GainVector p0{2.0, 3.0, 0.5, 0.2};
    double reference = 0.0;
    {
        SimulationConfig config = single_agent(p0, 1.0, 6.0);
        config.dt = 1.0 / 320.0;
        reference = integrate(config).tracking_error.back();
    }
    double errors[3];
    int i = 0;
    for (double dt : {1.0 / 20.0, 1.0 / 40.0, 1.0 / 80.0}) {
        SimulationConfig config = single_agent(p0, 1.0, 6.0);
        config.dt = dt;
        errors[i++] = std::abs(integrate(config).tracking_error.back() - reference);
    }
    CHECK(std::log2(errors[0] / errors[1]) >= 3.5);
    CHECK(std::log2(errors[1] / errors[2]) >= 3.5);
}

TEST_CASE("divergent runs stop early with a flag and a partial log") {
    SimulationConfig config;
    config.formation = make_formation_spec(Eigen::MatrixXd::Zero(2, 2),
                                           Eigen::MatrixXd::Zero(2, 3),
                                           GainVector{-3.0, 0.0, 1.5, -3.0},
                                           CouplingGainVector{}, 1.0);
    config.trajectory = default_trajectory();
    config.t_end = 40.0;
    const TrajectoryLog log = integrate(config);
    CHECK(log.diverged);
    REQUIRE_FALSE(log.t.empty());
    CHECK(log.t.back() < 40.0);
    CHECK(log.divergence_time > log.t.back());
    CHECK(log.divergence_time < 40.0);
    CHECK(log.tracking_error.back() >= 1e9);
    for (std::size_t k = 0; k < log.t.size(); ++k) CHECK(std::isfinite(log.tracking_error[k]));
}

TEST_CASE("decay rate fit guards its window") {
    SimulationConfig config = single_agent(GainVector{2.0, 3.0, 0.5, 0.2}, 1.0, 10.0);
    const TrajectoryLog log = integrate(config);
    CHECK_THROWS_AS((void)decay_rate_fit(log, 5.0, 12.0), InvalidParameterError);
    CHECK_THROWS_AS((void)decay_rate_fit(log, -1.0, 5.0), InvalidParameterError);
    CHECK_THROWS_AS((void)decay_rate_fit(log, 5.0, 5.0), InvalidParameterError);

    SimulationConfig silent = single_agent(GainVector{2.0, 3.0, 0.5, 0.2}, 1.0, 5.0);
    silent.history_scale = 0.0;
    const TrajectoryLog zero_log = integrate(silent);
    CHECK(zero_log.tracking_error.back() == 0.0);
    CHECK_THROWS_AS((void)decay_rate_fit(zero_log, 1.0, 4.0), FitWindowExhaustedError);
}

TEST_CASE("logged errors match their definitions recomputed from the state") {
    SimulationConfig config = three_agents(GainVector{6.0, 0.0, 0.3, 0.0}, true, 4.5, 20.0, 1.0);
    const TrajectoryLog log = integrate(config);
    for (std::size_t k = 0; k < log.t.size(); ++k) {
        Eigen::MatrixXd target = config.formation.offsets;
        target.rowwise() += config.trajectory.position(log.t[k]).transpose();
        const Eigen::MatrixXd error = log.positions[k] - target;
        CHECK(std::abs(error.norm() - log.tracking_error[k]) <= 1e-9);
        CHECK(std::abs((config.formation.topology.laplacian * error).norm() -
                       log.formation_error[k]) <= 1e-9);
    }
}

TEST_CASE("uncoupled scenario: stable delays shrink the formation error") {
    const TrajectoryLog log =
        integrate(three_agents(GainVector{6.0, 0.0, 0.3, 0.0}, false, 4.5, 300.0, 1.0));
    CHECK_FALSE(log.diverged);
    CHECK(log.formation_error.back() <= 1e-3 * log.formation_error.front());
    const double fitted = decay_rate_fit(log, 100.0, 250.0);
    const double expected = lambda_max(
        mode_system(GainVector{6.0, 0.0, 0.3, 0.0}, CouplingGainVector{}, cplx(0.0, 0.0), 4.5));
    CHECK(expected < 0.0);
    CHECK(std::abs(fitted - expected) <= 0.05 * std::abs(expected));
}

TEST_CASE("uncoupled scenario: the unstable delay grows with oscillations") {
    const TrajectoryLog log =
        integrate(three_agents(GainVector{6.0, 0.0, 0.3, 0.0}, false, 5.7, 300.0, 1.0));
    double peak = 0.0;
    for (double e : log.tracking_error) peak = std::max(peak, e);
    CHECK(peak >= 10.0 * log.tracking_error.front());
    const double fitted = decay_rate_fit(log, 50.0, 150.0);
    const double expected = lambda_max(
        mode_system(GainVector{6.0, 0.0, 0.3, 0.0}, CouplingGainVector{}, cplx(0.0, 0.0), 5.7));
    CHECK(expected > 0.0);
    CHECK(std::abs(fitted - expected) <= 0.05 * expected);

    std::size_t sign_changes = 0;
    for (std::size_t k = log.t.size() / 2 + 1; k < log.t.size(); ++k) {
        const double prev = log.positions[k - 1](0, 0) -
                            (0.005 * (log.t[k - 1] * log.t[k - 1] + 1.0));
        const double curr = log.positions[k](0, 0) - (0.005 * (log.t[k] * log.t[k] + 1.0));
        if ((prev < 0.0) != (curr < 0.0)) ++sign_changes;
    }
    CHECK(sign_changes >= 10);
}

TEST_CASE("coupling holds the formation even at the unstable tracking delay") {
    const TrajectoryLog log =
        integrate(three_agents(GainVector{6.0, 0.0, 0.3, 0.0}, true, 5.7, 300.0, 1.0));
    CHECK_FALSE(log.diverged);
    CHECK(log.formation_error.back() <= 1e-3 * log.formation_error.front());
    double peak = 0.0;
    for (double e : log.tracking_error) peak = std::max(peak, e);
    CHECK(peak >= 10.0 * log.tracking_error.front());
}

TEST_CASE("absolutely stable coupled scenario tracks and forms") {
    const TrajectoryLog log =
        integrate(three_agents(GainVector{2.0, 3.0, 1.5, 1.2}, true, 15.0, 300.0, 10.0));
    CHECK_FALSE(log.diverged);
    CHECK(log.formation_error.back() <= 1e-3 * log.formation_error.front());
    const double fitted = decay_rate_fit(log, 100.0, 250.0);
    const CouplingGainVector pbar{3.0, 3.0, -0.5, 0.0};
    double dominant = -std::numeric_limits<double>::infinity();
    for (double lambda : {0.0, 4.0, 5.0})
        dominant = std::max(dominant, lambda_max(mode_system(GainVector{2.0, 3.0, 1.5, 1.2},
                                                             pbar, cplx(lambda, 0.0), 15.0)));
    CHECK(fitted < 0.0);
    CHECK(std::abs(fitted - dominant) <= 0.05 * std::abs(dominant));
}

TEST_CASE("trajectory and summary csv layouts") {
    SimulationConfig config = single_agent(GainVector{2.0, 3.0, 0.5, 0.2}, 1.0, 2.0);
    config.trajectory = default_trajectory();
    const TrajectoryLog log = integrate(config);
    const std::string trajectory = to_trajectory_csv(log);
    REQUIRE(trajectory.rfind("t,agent_id,x,y,z,vx,vy,vz\n", 0) == 0);
    std::size_t rows = 0;
    for (char c : trajectory)
        if (c == '\n') ++rows;
    CHECK(rows == 1 + log.t.size() * log.agents);

    const std::string summary = to_summary_csv(log);
    REQUIRE(summary.rfind("t,tracking_error,formation_error\n", 0) == 0);
    rows = 0;
    for (char c : summary)
        if (c == '\n') ++rows;
    CHECK(rows == 1 + log.t.size());
}
