#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "phasebal/types.hpp"

namespace phasebal {

struct GainCheck {
  double m_d = 0.0;
  bool conforming = false;
  std::string detail;
};

// m_d = m_p; conforming iff m_q/tau matches m_p to 1e-9 relative.
GainCheck normalize_gains(double m_p, double m_q, double tau);

// Same check, but throws NonConformingGains. Analysis entry point for
// documents that give (m_p, m_q) instead of m_d.
double require_conforming_gains(double m_p, double m_q, double tau);

// I2 (x) (1/2) [[1,0,-1],[-1,1,0],[0,-1,1]]
Eigen::MatrixXd balancing_matrix();

// Per-converter constant matrices. E maps the controller state to the node's
// voltage deviations; state coordinates equal voltage coordinates except for
// PositiveSequenceDroop, whose state is (gamma, vartheta) with E = I2 (x) 1_3.
// local_term is the state-coordinate stabilization block entering the closed
// loop: diag(0, 1/tau) per magnitude channel, plus k_bal * S S^T.
struct ControlMatrices {
  Eigen::MatrixXd E;           // voltage_dim x state_dim
  Eigen::MatrixXd F;           // voltage_dim x n_i magnitude selector
  Eigen::MatrixXd S;           // 6x6 for GeneralizedDroop, else 0x0
  Eigen::MatrixXd local_term;  // state_dim x state_dim
  int state_dim = 0;
  int voltage_dim = 0;
};

ControlMatrices control_matrices(const ControllerSpec& spec);

struct StateBlock {
  int node_index = 0;  // position in model.nodes
  NodeId id = 0;
  int offset = 0;  // into the stacked converter state vector
  int state_dim = 0;
  ControlLaw law = ControlLaw::GeneralizedDroop;
  double m_d = 0.0, tau = 0.0, k_bal = 0.0;
};

struct StateLayout {
  std::vector<StateBlock> blocks;  // exterior nodes in model order
  int total = 0;
  bool uniform_m_d = true;
  double m_d_ref = 0.0;

  const StateBlock& block_of(NodeId id) const;
};

// Exactly one spec per exterior node, none elsewhere; checks law/phase-count
// pairing and gain ranges.
StateLayout state_layout(const NetworkModel& model,
                         const std::vector<ControllerSpec>& specs);

}  // namespace phasebal
