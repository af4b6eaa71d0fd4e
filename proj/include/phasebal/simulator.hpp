#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "phasebal/stability.hpp"

namespace phasebal {

// Constant-power consumption deviation switched in at t_start. dP/dQ carry
// one entry per connected phase of the node.
struct LoadStep {
  NodeId node = 0;
  double t_start = 0.0;
  Eigen::VectorXd dP, dQ;
};

// The stock unbalanced disturbance: a load of total active power `level`
// drawn between phases a and c (per-phase dP = level/2 on a and c, with
// dQ = dP/3). Requires a three-phase node.
LoadStep ac_load(const NetworkModel& model, NodeId bus, double level,
                 double t_start = 0.0);

struct Trajectory {
  Eigen::VectorXd t;
  Eigen::MatrixXd X;      // converter states (physical frame), column = sample
  Eigen::MatrixXd V_ext;  // exterior voltage deviations
  Eigen::MatrixXd V_int;  // recovered interior voltage deviations
  Eigen::MatrixXd S_int;  // interior power injections
  Eigen::MatrixXd omega;  // per angle channel, analytic d(theta)/dt
  Eigen::MatrixXd P, Q;   // converter injections per exterior phase
  std::vector<std::string> omega_labels;
  std::vector<std::string> phase_labels;
  std::vector<CoordBlock> ext_blocks, int_blocks;
  std::vector<StateBlock> state_blocks;
};

// Exact piecewise propagation through the eigendecomposition of J_cl_red;
// the input is constant between load-step start times.
Trajectory simulate(const ClosedLoopModel& cl, const Eigen::VectorXd& x0,
                    const std::vector<LoadStep>& loads, double t_end,
                    double dt);

// Fixed-step classical Runge-Kutta on the same sampling grid; cross-check
// path for the exact propagator.
Trajectory rk4_simulate(const ClosedLoopModel& cl, const Eigen::VectorXd& x0,
                        const std::vector<LoadStep>& loads, double t_end,
                        double dt);

struct SteadyState {
  double omega = 0.0;      // common frequency deviation of the drift
  Eigen::VectorXd x_perp;  // offset orthogonal to the synchronous direction
  Eigen::VectorXd u;       // constant forcing (scaled frame)
  double residual = 0.0;
};

// Asymptotic regime under the final (all steps active) constant load.
SteadyState steady_state(const ClosedLoopModel& cl,
                         const std::vector<LoadStep>& loads,
                         const StabilityCertificate& cert);

struct UnbalancePoint {
  double V_UF = 0.0, P_UF = 0.0, Q_UF = 0.0, V_UF_N = 0.0;
  bool degenerate = false;  // positive-sequence magnitude below threshold
};

// Metrics from one three-phase sample; theta/v are per-phase deviations,
// P/Q per-phase injections.
UnbalancePoint unbalance_point(const Eigen::Vector3d& theta,
                               const Eigen::Vector3d& v,
                               const Eigen::Vector3d& P,
                               const Eigen::Vector3d& Q);

struct UnbalanceReport {
  NodeId bus = 0;
  Eigen::VectorXd t;
  std::vector<UnbalancePoint> samples;
};

UnbalanceReport unbalance_factors(const Trajectory& traj, NodeId bus);

// Metrics of the steady-state operating point at `bus`.
UnbalancePoint steady_state_unbalance(const ClosedLoopModel& cl,
                                      const SteadyState& ss,
                                      const std::vector<LoadStep>& loads,
                                      NodeId bus);

struct CorrelationStudy {
  std::vector<double> v_uf, v_uf_n;
  bool defined = false;
  double r = 0.0;
  std::string note;  // why r is undefined, when it is
};

CorrelationStudy correlation_study(const std::vector<UnbalancePoint>& points);

struct SweepSpec {
  std::vector<double> k_bal_values;
  std::vector<double> load_values;
  std::vector<NodeId> sweep_buses;  // each receives the a-c pattern
  NodeId measure_bus = 0;
};

struct SweepRow {
  double k_bal = 0.0, load = 0.0;
  bool stable = false;
  double omega = 0.0;
  UnbalancePoint metrics;
  std::string error;  // nonempty when this point failed
};

struct SweepResult {
  std::vector<SweepRow> rows;  // k_bal-major, load-minor order
};

// Steady-state metrics over the (k_bal, load) grid. k_bal overrides apply to
// every GeneralizedDroop converter. Jobs are independent and may run in
// parallel; row order is fixed by the grid.
SweepResult run_sweep(const NetworkModel& model,
                      const std::vector<ControllerSpec>& specs,
                      const SweepSpec& sweep, double tol_rank = 1e-8,
                      double tol_zero = 1e-9);

}  // namespace phasebal
