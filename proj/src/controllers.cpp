#include "phasebal/controllers.hpp"

#include <cmath>
#include <sstream>

namespace phasebal {

GainCheck normalize_gains(double m_p, double m_q, double tau) {
  if (!(m_p > 0.0) || !(m_q > 0.0) || !(tau > 0.0))
    throw SemanticError("droop gains and time constant must be positive");
  GainCheck out;
  out.m_d = m_p;
  const double implied = m_q / tau;
  out.conforming = std::abs(m_p - implied) <= 1e-9 * std::abs(m_p);
  if (!out.conforming) {
    std::ostringstream os;
    os << "gains are outside the normalized model: m_p = " << m_p
       << " but m_q/tau = " << implied << "; the model requires m_p = m_q/tau";
    out.detail = os.str();
  }
  return out;
}

double require_conforming_gains(double m_p, double m_q, double tau) {
  GainCheck g = normalize_gains(m_p, m_q, tau);
  if (!g.conforming) throw NonConformingGains(g.detail);
  return g.m_d;
}

Eigen::MatrixXd balancing_matrix() {
  Eigen::Matrix3d m;
  m << 1, 0, -1, -1, 1, 0, 0, -1, 1;
  m *= 0.5;
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(6, 6);
  S.topLeftCorner(3, 3) = m;
  S.bottomRightCorner(3, 3) = m;
  return S;
}

static void check_gains(const ControllerSpec& spec) {
  if (!(spec.m_d > 0.0))
    throw SemanticError("converter " + std::to_string(spec.node) +
                        ": m_d must be positive");
  if (!(spec.tau > 0.0))
    throw SemanticError("converter " + std::to_string(spec.node) +
                        ": tau must be positive");
  if (spec.k_bal < 0.0)
    throw SemanticError("converter " + std::to_string(spec.node) +
                        ": k_bal must be nonnegative");
  if (spec.law != ControlLaw::GeneralizedDroop && spec.k_bal != 0.0)
    throw SemanticError("converter " + std::to_string(spec.node) +
                        ": k_bal applies only to GeneralizedDroop");
}

ControlMatrices control_matrices(const ControllerSpec& spec) {
  check_gains(spec);
  ControlMatrices out;
  const double rt = 1.0 / spec.tau;
  switch (spec.law) {
    case ControlLaw::SinglePhaseDroop: {
      out.E = Eigen::MatrixXd::Identity(2, 2);
      out.F = Eigen::MatrixXd::Zero(2, 1);
      out.F(1, 0) = 1.0;
      out.local_term = rt * out.F * out.F.transpose();
      out.state_dim = 2;
      out.voltage_dim = 2;
      break;
    }
    case ControlLaw::PositiveSequenceDroop: {
      out.E = Eigen::MatrixXd::Zero(6, 2);
      out.E.col(0).head(3).setOnes();
      out.E.col(1).tail(3).setOnes();
      out.F = Eigen::MatrixXd::Zero(6, 3);
      out.F.bottomRows(3) = Eigen::Matrix3d::Identity();
      out.local_term = Eigen::MatrixXd::Zero(2, 2);
      out.local_term(1, 1) = rt;
      out.state_dim = 2;
      out.voltage_dim = 6;
      break;
    }
    case ControlLaw::GeneralizedDroop: {
      out.E = Eigen::MatrixXd::Identity(6, 6);
      out.F = Eigen::MatrixXd::Zero(6, 3);
      out.F.bottomRows(3) = Eigen::Matrix3d::Identity();
      out.S = balancing_matrix();
      out.local_term = rt * out.F * out.F.transpose() +
                       spec.k_bal * out.S * out.S.transpose();
      out.state_dim = 6;
      out.voltage_dim = 6;
      break;
    }
  }
  return out;
}

const StateBlock& StateLayout::block_of(NodeId id) const {
  for (const StateBlock& b : blocks)
    if (b.id == id) return b;
  throw SemanticError("no converter on node " + std::to_string(id));
}

StateLayout state_layout(const NetworkModel& model,
                         const std::vector<ControllerSpec>& specs) {
  for (const ControllerSpec& s : specs) {
    const NodeSpec& n = model.node(s.node);
    if (n.role != NodeRole::Exterior)
      throw SemanticError("converter on interior node " +
                          std::to_string(s.node));
    const bool single = s.law == ControlLaw::SinglePhaseDroop;
    if (single != (n.phase_count == 1))
      throw SemanticError("converter law on node " + std::to_string(s.node) +
                          " does not match its phase count");
    check_gains(s);
  }

  StateLayout layout;
  for (size_t i = 0; i < model.nodes.size(); ++i) {
    const NodeSpec& n = model.nodes[i];
    if (n.role != NodeRole::Exterior) continue;
    const ControllerSpec* found = nullptr;
    for (const ControllerSpec& s : specs) {
      if (s.node != n.id) continue;
      if (found)
        throw SemanticError("multiple converters on node " +
                            std::to_string(n.id));
      found = &s;
    }
    if (!found)
      throw SemanticError("exterior node " + std::to_string(n.id) +
                          " has no converter");
    StateBlock b;
    b.node_index = static_cast<int>(i);
    b.id = n.id;
    b.offset = layout.total;
    b.state_dim =
        found->law == ControlLaw::PositiveSequenceDroop ? 2 : 2 * n.phase_count;
    b.law = found->law;
    b.m_d = found->m_d;
    b.tau = found->tau;
    b.k_bal = found->k_bal;
    layout.blocks.push_back(b);
    layout.total += b.state_dim;
  }
  if (layout.blocks.empty()) throw SemanticError("no exterior nodes");

  layout.m_d_ref = layout.blocks.front().m_d;
  for (const StateBlock& b : layout.blocks)
    if (std::abs(b.m_d - layout.m_d_ref) > 1e-12 * layout.m_d_ref)
      layout.uniform_m_d = false;
  return layout;
}

}  // namespace phasebal
