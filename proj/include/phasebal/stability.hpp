#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "phasebal/controllers.hpp"
#include "phasebal/network.hpp"

namespace phasebal {

// [[P3, P4],[-P4, P3]]: the angle/magnitude mixing applied to a nullspace
// block by one YgD traversal.
Eigen::MatrixXd h_matrix();

// h^r; h^0 = I6, and for r >= 1 the exponent is reduced mod 6 (h^7 = h).
// Negative r is an error.
Eigen::MatrixXd h_power(long r);

// (I3; 0_3x3) angle-coordinate selector.
Eigen::MatrixXd mu3();

enum class StructuralCondition { None, PosSeqExterior, BalancingGain, YgdPath };
const char* to_string(StructuralCondition c);

struct ConditionScan {
  StructuralCondition fired = StructuralCondition::None;
  std::vector<NodeId> witness_path;  // for YgdPath
  bool searched_paths = true;  // false when the path-search size guard tripped
  std::string note;
};

// Structural conditions under which the synchronous subspace is the whole
// nullspace: (1) a three-phase exterior under PositiveSequenceDroop; (2) a
// three-phase exterior under GeneralizedDroop with k_bal > 0; (3) a path
// between two exterior nodes containing at least one YgD branch, with every
// YgD branch on it traversed in the same orientation.
ConditionScan structural_stability_conditions(
    const NetworkModel& model, const std::vector<ControllerSpec>& specs);

// Closed loop in the gain-symmetrized frame y = M^{-1/2} x with
// M = blkdiag(m_d,i I). For uniform m_d this is the physical frame up to one
// global scalar. Dynamics: dy/dt = J_cl_red y + input_map_cl S_int
// + ext_inject_map S_ext, with S_* power injections (loads enter negated).
struct ClosedLoopModel {
  NetworkModel model;
  StateLayout states;
  ReducedNetwork red;
  Eigen::MatrixXd E_ext;    // exterior voltage coords x state dim
  Eigen::VectorXd m_sqrt;   // per-state sqrt(m_d)
  Eigen::MatrixXd L;        // block-diagonal local stabilization terms
  Eigen::MatrixXd J_cl;     // full node set: [[M^.5 E^T J_ext E M^.5 + L, ...]]
  Eigen::MatrixXd J_cl_red;  // -(M^.5 E^T J_red E M^.5 + L)
  Eigen::MatrixXd input_map_cl;    // n_states x n_int
  Eigen::MatrixXd ext_inject_map;  // n_states x n_ext
  Eigen::VectorXd xi_x;  // stacked balanced direction in physical states
  Eigen::VectorXd xi_y;  // M^{-1/2} xi_x, nullvector of J_cl_red
  double cross_check = 0.0;  // gap between direct and Schur reduction routes
  std::vector<int> angle_channels;         // state indices carrying angles
  std::vector<std::string> angle_labels;   // omega_<node>[_<phase>]

  int n_states() const { return states.total; }
};

ClosedLoopModel assemble_closed_loop(const ReducedNetwork& red,
                                     const NetworkModel& model,
                                     const std::vector<ControllerSpec>& specs);

struct NullspaceResult {
  Eigen::MatrixXd basis;     // orthonormal kernel of J_cl_red
  int dim = 0;
  Eigen::VectorXd spectrum;  // ascending eigenvalues of J_cl_red
  Eigen::MatrixXd basis_full;  // kernel of the unreduced J_cl
  int dim_full = 0;
  double zero_threshold = 0.0;  // tol_zero * max |eigenvalue|
};

NullspaceResult nullspace(const ClosedLoopModel& model, double tol_zero = 1e-9);

struct StabilityCertificate {
  enum class Verdict { Stable, Indeterminate, UnstableStructure };
  Verdict verdict = Verdict::Indeterminate;
  ConditionScan conditions;
  NullspaceResult kernel;
  bool balanced_subspace = false;  // kernel inside per-node balanced spans
  bool uniform_gains = true;
  std::vector<std::string> notes;

  std::string text() const;
};

const char* to_string(StabilityCertificate::Verdict v);

StabilityCertificate certify(const NetworkModel& model,
                             const std::vector<ControllerSpec>& specs,
                             double tol_rank = 1e-8, double tol_zero = 1e-9);

// Certify a prebuilt closed loop; converter specs are reconstructed from its
// state layout.
StabilityCertificate certify(const ClosedLoopModel& cl, double tol_zero = 1e-9);

// Residual of projecting the columns of `sub` onto the column span of
// `space` (columns orthonormalized internally); 0 means contained.
double span_residual(const Eigen::MatrixXd& sub, const Eigen::MatrixXd& space);

}  // namespace phasebal
