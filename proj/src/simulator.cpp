#include "phasebal/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <set>

namespace phasebal {

LoadStep ac_load(const NetworkModel& model, NodeId bus, double level,
                 double t_start) {
  const NodeSpec& n = model.node(bus);
  if (n.phase_count != 3)
    throw SemanticError("a-c load pattern requires a three-phase node");
  LoadStep step;
  step.node = bus;
  step.t_start = t_start;
  step.dP = Eigen::Vector3d(level / 2.0, 0.0, level / 2.0);
  step.dQ = Eigen::Vector3d(level / 6.0, 0.0, level / 6.0);
  return step;
}

namespace {

struct PlacedLoad {
  LoadStep step;
  bool exterior = false;
  int offset = 0;  // within the ext/int stacked coordinate vector
  int n = 0;
};

std::vector<PlacedLoad> place_loads(const ClosedLoopModel& cl,
                                    const std::vector<LoadStep>& loads) {
  std::vector<PlacedLoad> out;
  for (const LoadStep& s : loads) {
    const NodeSpec& node = cl.model.node(s.node);
    PlacedLoad p;
    p.step = s;
    p.n = node.phase_count;
    if (s.dP.size() != p.n || s.dQ.size() != p.n)
      throw DimensionMismatch("load on node " + std::to_string(s.node) +
                              " needs one dP/dQ entry per connected phase");
    if (!s.dP.allFinite() || !s.dQ.allFinite() || !std::isfinite(s.t_start))
      throw SemanticError("load on node " + std::to_string(s.node) +
                          " has non-finite entries");
    p.exterior = node.role == NodeRole::Exterior;
    const std::vector<CoordBlock>& blocks =
        p.exterior ? cl.red.ext_blocks : cl.red.int_blocks;
    p.offset = -1;
    for (const CoordBlock& b : blocks)
      if (b.id == s.node) p.offset = b.offset;
    if (p.offset < 0)
      throw SemanticError("load node " + std::to_string(s.node) +
                          " is not in the partition");
    out.push_back(p);
  }
  return out;
}

void consumption_at(const std::vector<PlacedLoad>& placed, double t, int ne,
                    int ni, Eigen::VectorXd& d_ext, Eigen::VectorXd& d_int) {
  d_ext = Eigen::VectorXd::Zero(ne);
  d_int = Eigen::VectorXd::Zero(ni);
  for (const PlacedLoad& p : placed) {
    if (p.step.t_start > t) continue;
    Eigen::VectorXd& target = p.exterior ? d_ext : d_int;
    target.segment(p.offset, p.n) += p.step.dP;
    target.segment(p.offset + p.n, p.n) += p.step.dQ;
  }
}

// Injections are negated consumption deviations.
Eigen::VectorXd forcing(const ClosedLoopModel& cl,
                        const Eigen::VectorXd& d_ext,
                        const Eigen::VectorXd& d_int) {
  return cl.input_map_cl * (-d_int) + cl.ext_inject_map * (-d_ext);
}

Eigen::VectorXd forcing_at(const ClosedLoopModel& cl,
                           const std::vector<PlacedLoad>& placed, double t) {
  Eigen::VectorXd d_ext, d_int;
  consumption_at(placed, t, cl.red.n_ext(), cl.red.n_int(), d_ext, d_int);
  return forcing(cl, d_ext, d_int);
}

Trajectory make_trajectory(const ClosedLoopModel& cl, int samples) {
  Trajectory tr;
  const int ns = cl.n_states(), ne = cl.red.n_ext(), ni = cl.red.n_int();
  tr.t.resize(samples);
  tr.X.resize(ns, samples);
  tr.V_ext.resize(ne, samples);
  tr.V_int.resize(ni, samples);
  tr.S_int.resize(ni, samples);
  tr.omega.resize(static_cast<Eigen::Index>(cl.angle_channels.size()), samples);
  tr.P.resize(ne / 2, samples);
  tr.Q.resize(ne / 2, samples);
  tr.omega_labels = cl.angle_labels;
  tr.ext_blocks = cl.red.ext_blocks;
  tr.int_blocks = cl.red.int_blocks;
  tr.state_blocks = cl.states.blocks;
  auto push_labels = [&tr](const std::vector<CoordBlock>& blocks) {
    for (const CoordBlock& b : blocks) {
      const int n = b.width / 2;
      for (int p = 0; p < n; ++p) {
        std::string label = std::to_string(b.id);
        if (n == 3)
          label += std::string("_") + to_string(static_cast<Phase>(p));
        tr.phase_labels.push_back(label);
      }
    }
  };
  push_labels(cl.red.ext_blocks);
  push_labels(cl.red.int_blocks);
  return tr;
}

void fill_sample(const ClosedLoopModel& cl,
                 const std::vector<PlacedLoad>& placed, double t,
                 const Eigen::VectorXd& y, Trajectory& tr, int col) {
  Eigen::VectorXd d_ext, d_int;
  consumption_at(placed, t, cl.red.n_ext(), cl.red.n_int(), d_ext, d_int);
  const Eigen::VectorXd u = forcing(cl, d_ext, d_int);
  const Eigen::VectorXd x = cl.m_sqrt.cwiseProduct(y);
  const Eigen::VectorXd xdot = cl.m_sqrt.cwiseProduct(cl.J_cl_red * y + u);

  tr.t(col) = t;
  tr.X.col(col) = x;
  const Eigen::VectorXd V_ext = cl.E_ext * x;
  tr.V_ext.col(col) = V_ext;
  const Eigen::VectorXd S_int = -d_int;
  tr.S_int.col(col) = S_int;
  tr.V_int.col(col) = recover_interior(cl.red, S_int, V_ext);
  for (size_t i = 0; i < cl.angle_channels.size(); ++i)
    tr.omega(static_cast<Eigen::Index>(i), col) = xdot(cl.angle_channels[i]);

  const Eigen::VectorXd C =
      cl.red.J_red * V_ext + cl.red.input_map * S_int + d_ext;
  for (const CoordBlock& b : cl.red.ext_blocks) {
    const int n = b.width / 2;
    tr.P.col(col).segment(b.offset / 2, n) = C.segment(b.offset, n);
    tr.Q.col(col).segment(b.offset / 2, n) = C.segment(b.offset + n, n);
  }
}

void check_sim_inputs(const ClosedLoopModel& cl, const Eigen::VectorXd& x0,
                      double t_end, double dt) {
  if (x0.size() != cl.n_states())
    throw DimensionMismatch("x0 size does not match the converter state dimension");
  if (!x0.allFinite()) throw SemanticError("x0 has non-finite entries");
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw SemanticError("dt must be positive");
  if (!(t_end >= 0.0) || !std::isfinite(t_end))
    throw SemanticError("t_end must be nonnegative");
}

}  // namespace

Trajectory simulate(const ClosedLoopModel& cl, const Eigen::VectorXd& x0,
                    const std::vector<LoadStep>& loads, double t_end,
                    double dt) {
  check_sim_inputs(cl, x0, t_end, dt);
  const std::vector<PlacedLoad> placed = place_loads(cl, loads);
  const int K = static_cast<int>(std::floor(t_end / dt + 1e-9));
  Trajectory tr = make_trajectory(cl, K + 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cl.J_cl_red);
  const Eigen::MatrixXd& Qm = es.eigenvectors();
  const Eigen::VectorXd& lam = es.eigenvalues();

  std::set<double> breakpoints;
  for (const PlacedLoad& p : placed)
    if (p.step.t_start > 0.0 && p.step.t_start <= K * dt)
      breakpoints.insert(p.step.t_start);

  Eigen::VectorXd y = x0.cwiseQuotient(cl.m_sqrt);
  Eigen::VectorXd z = Qm.transpose() * y;
  fill_sample(cl, placed, 0.0, y, tr, 0);

  auto propagate = [&](double span, const Eigen::VectorXd& u) {
    if (!(span > 0.0)) return;
    const Eigen::VectorXd w = Qm.transpose() * u;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double a = lam(i) * span;
      const double phi = lam(i) == 0.0 ? span : std::expm1(a) / lam(i);
      z(i) = std::exp(a) * z(i) + phi * w(i);
    }
  };

  double tc = 0.0;
  for (int k = 1; k <= K; ++k) {
    const double target = k * dt;
    while (true) {
      auto it = breakpoints.upper_bound(tc);
      if (it == breakpoints.end() || *it >= target) break;
      propagate(*it - tc, forcing_at(cl, placed, tc));
      tc = *it;
    }
    propagate(target - tc, forcing_at(cl, placed, tc));
    tc = target;
    y = Qm * z;
    fill_sample(cl, placed, tc, y, tr, k);
  }
  return tr;
}

Trajectory rk4_simulate(const ClosedLoopModel& cl, const Eigen::VectorXd& x0,
                        const std::vector<LoadStep>& loads, double t_end,
                        double dt) {
  check_sim_inputs(cl, x0, t_end, dt);
  const std::vector<PlacedLoad> placed = place_loads(cl, loads);
  const int K = static_cast<int>(std::floor(t_end / dt + 1e-9));
  Trajectory tr = make_trajectory(cl, K + 1);

  Eigen::VectorXd y = x0.cwiseQuotient(cl.m_sqrt);
  fill_sample(cl, placed, 0.0, y, tr, 0);

  for (int k = 1; k <= K; ++k) {
    const double t0 = (k - 1) * dt;
    // the forcing is constant between switch times; hold the step's initial
    // value across the stages so a switch on the grid cannot leak into the
    // preceding step through the endpoint stage
    const Eigen::VectorXd u = forcing_at(cl, placed, t0);
    auto f = [&](const Eigen::VectorXd& yy) -> Eigen::VectorXd {
      return cl.J_cl_red * yy + u;
    };
    const Eigen::VectorXd k1 = f(y);
    const Eigen::VectorXd k2 = f(y + (dt / 2) * k1);
    const Eigen::VectorXd k3 = f(y + (dt / 2) * k2);
    const Eigen::VectorXd k4 = f(y + dt * k3);
    y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    fill_sample(cl, placed, k * dt, y, tr, k);
  }
  return tr;
}

SteadyState steady_state(const ClosedLoopModel& cl,
                         const std::vector<LoadStep>& loads,
                         const StabilityCertificate& cert) {
  if (cert.verdict != StabilityCertificate::Verdict::Stable)
    throw Error("steady state requires a stable certificate");
  const std::vector<PlacedLoad> placed = place_loads(cl, loads);
  Eigen::VectorXd d_ext, d_int;
  consumption_at(placed, std::numeric_limits<double>::infinity(),
                 cl.red.n_ext(), cl.red.n_int(), d_ext, d_int);

  SteadyState ss;
  ss.u = forcing(cl, d_ext, d_int);
  const Eigen::VectorXd& xi = cl.xi_y;
  const double xi2 = xi.squaredNorm();
  ss.omega = xi.dot(ss.u) / xi2;
  const Eigen::VectorXd u_perp = ss.u - (xi.dot(ss.u) / xi2) * xi;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cl.J_cl_red);
  const Eigen::VectorXd& lam = es.eigenvalues();
  const Eigen::MatrixXd& Qm = es.eigenvectors();
  const Eigen::VectorXd w = Qm.transpose() * (-u_perp);
  Eigen::VectorXd zp = Eigen::VectorXd::Zero(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    if (std::abs(lam(i)) > cert.kernel.zero_threshold) zp(i) = w(i) / lam(i);
  const Eigen::VectorXd y_perp = Qm * zp;

  ss.residual = (cl.J_cl_red * y_perp + u_perp).norm();
  if (!(ss.residual < 1e-9))
    throw Error("steady-state solve residual exceeds 1e-9");
  ss.x_perp = cl.m_sqrt.cwiseProduct(y_perp);
  return ss;
}

UnbalancePoint unbalance_point(const Eigen::Vector3d& theta,
                               const Eigen::Vector3d& v,
                               const Eigen::Vector3d& P,
                               const Eigen::Vector3d& Q) {
  UnbalancePoint pt;
  const double pi = std::acos(-1.0);
  const std::complex<double> j(0.0, 1.0);
  const std::complex<double> a = std::exp(j * (2.0 * pi / 3.0));
  const double th_star[3] = {0.0, -2.0 * pi / 3.0, 2.0 * pi / 3.0};
  std::complex<double> ph[3];
  for (int k = 0; k < 3; ++k)
    ph[k] = (1.0 + v(k)) * std::exp(j * (th_star[k] + theta(k)));
  const std::complex<double> neg = ph[0] + a * a * ph[1] + a * ph[2];
  const std::complex<double> pos = ph[0] + a * ph[1] + a * a * ph[2];
  if (std::abs(pos) < 1e-12) {
    pt.degenerate = true;
    pt.V_UF = std::numeric_limits<double>::quiet_NaN();
  } else {
    pt.V_UF = std::abs(neg) / std::abs(pos);
  }
  const Eigen::Vector3d dv = v - Eigen::Vector3d::Constant(v(0));
  const Eigen::Vector3d dth = theta - Eigen::Vector3d::Constant(theta(0));
  pt.V_UF_N = std::sqrt(dv.squaredNorm() + dth.squaredNorm()) / 3.0;
  pt.P_UF = (P - Eigen::Vector3d::Constant(P(0))).norm() / 3.0;
  pt.Q_UF = (Q - Eigen::Vector3d::Constant(Q(0))).norm() / 3.0;
  return pt;
}

namespace {

const CoordBlock* find_block(const std::vector<CoordBlock>& blocks,
                             NodeId id) {
  for (const CoordBlock& b : blocks)
    if (b.id == id) return &b;
  return nullptr;
}

}  // namespace

UnbalanceReport unbalance_factors(const Trajectory& traj, NodeId bus) {
  UnbalanceReport rep;
  rep.bus = bus;
  rep.t = traj.t;
  const CoordBlock* cb = find_block(traj.ext_blocks, bus);
  const bool exterior = cb != nullptr;
  if (!cb) cb = find_block(traj.int_blocks, bus);
  if (!cb) throw SemanticError("unknown bus " + std::to_string(bus));
  if (cb->width != 6)
    throw SemanticError("unbalance factors need a three-phase bus");

  for (Eigen::Index col = 0; col < traj.t.size(); ++col) {
    Eigen::Vector3d theta, v, P, Q;
    if (exterior) {
      theta = traj.V_ext.col(col).segment(cb->offset, 3);
      v = traj.V_ext.col(col).segment(cb->offset + 3, 3);
      P = traj.P.col(col).segment(cb->offset / 2, 3);
      Q = traj.Q.col(col).segment(cb->offset / 2, 3);
    } else {
      theta = traj.V_int.col(col).segment(cb->offset, 3);
      v = traj.V_int.col(col).segment(cb->offset + 3, 3);
      P = traj.S_int.col(col).segment(cb->offset, 3);
      Q = traj.S_int.col(col).segment(cb->offset + 3, 3);
    }
    rep.samples.push_back(unbalance_point(theta, v, P, Q));
  }
  return rep;
}

UnbalancePoint steady_state_unbalance(const ClosedLoopModel& cl,
                                      const SteadyState& ss,
                                      const std::vector<LoadStep>& loads,
                                      NodeId bus) {
  const std::vector<PlacedLoad> placed = place_loads(cl, loads);
  Eigen::VectorXd d_ext, d_int;
  consumption_at(placed, std::numeric_limits<double>::infinity(),
                 cl.red.n_ext(), cl.red.n_int(), d_ext, d_int);
  const Eigen::VectorXd V_ext = cl.E_ext * ss.x_perp;
  const Eigen::VectorXd S_int = -d_int;
  const Eigen::VectorXd V_int = recover_interior(cl.red, S_int, V_ext);
  const Eigen::VectorXd C =
      cl.red.J_red * V_ext + cl.red.input_map * S_int + d_ext;

  const CoordBlock* cb = find_block(cl.red.ext_blocks, bus);
  const bool exterior = cb != nullptr;
  if (!cb) cb = find_block(cl.red.int_blocks, bus);
  if (!cb) throw SemanticError("unknown bus " + std::to_string(bus));
  if (cb->width != 6)
    throw SemanticError("unbalance factors need a three-phase bus");

  Eigen::Vector3d theta, v, P, Q;
  if (exterior) {
    theta = V_ext.segment(cb->offset, 3);
    v = V_ext.segment(cb->offset + 3, 3);
    P = C.segment(cb->offset, 3);
    Q = C.segment(cb->offset + 3, 3);
  } else {
    theta = V_int.segment(cb->offset, 3);
    v = V_int.segment(cb->offset + 3, 3);
    P = S_int.segment(cb->offset, 3);
    Q = S_int.segment(cb->offset + 3, 3);
  }
  return unbalance_point(theta, v, P, Q);
}

CorrelationStudy correlation_study(const std::vector<UnbalancePoint>& points) {
  CorrelationStudy st;
  for (const UnbalancePoint& p : points) {
    if (p.degenerate) continue;
    st.v_uf.push_back(p.V_UF);
    st.v_uf_n.push_back(p.V_UF_N);
  }
  const size_t n = st.v_uf.size();
  if (n < 2) {
    st.note = "undefined: fewer than two usable points";
    return st;
  }
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += st.v_uf[i];
    my += st.v_uf_n[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = st.v_uf[i] - mx, dy = st.v_uf_n[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  // relative threshold: constant data accumulates rounding noise ~eps^2
  const double nd = static_cast<double>(n);
  if (sxx <= 1e-20 * std::max(1.0, mx * mx) * nd ||
      syy <= 1e-20 * std::max(1.0, my * my) * nd) {
    st.note = "undefined: zero variance";
    return st;
  }
  st.defined = true;
  st.r = sxy / std::sqrt(sxx * syy);
  return st;
}

SweepResult run_sweep(const NetworkModel& model,
                      const std::vector<ControllerSpec>& specs,
                      const SweepSpec& sweep, double tol_rank,
                      double tol_zero) {
  if (sweep.k_bal_values.empty() || sweep.load_values.empty())
    throw SemanticError("sweep needs at least one k_bal and one load value");
  if (sweep.sweep_buses.empty())
    throw SemanticError("sweep needs at least one load bus");
  model.node(sweep.measure_bus);
  for (NodeId bus : sweep.sweep_buses) model.node(bus);

  const AssembledSystem sys = assemble(model, specs);
  const ReducedNetwork red = kron_reduce(sys, tol_rank);

  const int nl = static_cast<int>(sweep.load_values.size());
  const int jobs = static_cast<int>(sweep.k_bal_values.size()) * nl;
  SweepResult out;
  out.rows.resize(jobs);

#pragma omp parallel for schedule(dynamic)
  for (int idx = 0; idx < jobs; ++idx) {
    SweepRow row;
    row.k_bal = sweep.k_bal_values[static_cast<size_t>(idx / nl)];
    row.load = sweep.load_values[static_cast<size_t>(idx % nl)];
    try {
      std::vector<ControllerSpec> sp = specs;
      for (ControllerSpec& s : sp)
        if (s.law == ControlLaw::GeneralizedDroop) s.k_bal = row.k_bal;
      const ClosedLoopModel cl = assemble_closed_loop(red, model, sp);
      const StabilityCertificate cert = certify(cl, tol_zero);
      row.stable =
          cert.verdict == StabilityCertificate::Verdict::Stable;
      if (row.stable) {
        std::vector<LoadStep> loads;
        for (NodeId bus : sweep.sweep_buses)
          loads.push_back(ac_load(model, bus, row.load));
        const SteadyState ss = steady_state(cl, loads, cert);
        row.omega = ss.omega;
        row.metrics = steady_state_unbalance(cl, ss, loads, sweep.measure_bus);
      } else {
        row.error = std::string("not stable: ") + to_string(cert.verdict);
      }
    } catch (const std::exception& e) {
      row.stable = false;
      row.error = e.what();
    }
    out.rows[static_cast<size_t>(idx)] = row;
  }
  return out;
}

}  // namespace phasebal
