#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <vector>

#include "phasebal/branch.hpp"
#include "phasebal/types.hpp"

namespace phasebal {

// One node's slice of a stacked coordinate vector; width = 2 * phase_count,
// angles first, magnitudes second.
struct CoordBlock {
  int node_index = 0;  // position in model.nodes
  NodeId id = 0;
  int offset = 0;
  int width = 0;
};

struct SystemLayout {
  std::vector<CoordBlock> blocks;  // model.nodes order
  int total = 0;

  const CoordBlock& block_of(NodeId id) const;
};

SystemLayout make_layout(const NetworkModel& model);

struct AssembledSystem {
  NetworkModel model;
  SystemLayout layout;
  std::vector<JacobianBlocks> branch_blocks;  // model.branches order
  std::vector<int> branch_col;                // column offset of each branch in B
  Eigen::MatrixXd B;
  Eigen::VectorXd W_diag;  // susceptance weight per column of B
  Eigen::MatrixXd J;       // B diag(W) B^T
  std::vector<int> ext_coords, int_coords;         // global coordinate indices
  std::vector<CoordBlock> ext_blocks, int_blocks;  // offsets within ext/int
  double assembly_gap = 0.0;  // Frobenius gap between the two assembly routes

  Eigen::MatrixXd W() const;
};

// Validates first and throws ValidationFailed carrying the report text.
AssembledSystem assemble(const NetworkModel& model,
                         const std::vector<ControllerSpec>& specs);

// Assembly without the well-posedness gate, for harnesses that need matrices
// of deliberately broken models. Node references must still resolve.
AssembledSystem assemble_unchecked(const NetworkModel& model);

struct PartitionView {
  Eigen::MatrixXd J_ext, J_c, J_int;  // J = [[J_ext, J_c],[J_c^T, J_int]]
};

PartitionView partition(const AssembledSystem& sys);

struct ReducedNetwork {
  Eigen::MatrixXd J_red;      // J_ext - J_c J_int^{-1} J_c^T
  Eigen::MatrixXd input_map;  // J_c J_int^{-1}
  Eigen::MatrixXd J_ext, J_c, J_int;
  Eigen::LDLT<Eigen::MatrixXd> factor;      // of J_int
  double sigma_min = 0.0, sigma_max = 0.0;  // of J_int; 0/0 when no interior
  std::vector<int> ext_coords, int_coords;
  std::vector<CoordBlock> ext_blocks, int_blocks;

  int n_ext() const { return static_cast<int>(J_red.rows()); }
  int n_int() const { return static_cast<int>(J_int.rows()); }
  Eigen::VectorXd solve_interior(const Eigen::VectorXd& rhs) const;
};

// tol_rank: relative singular-value cutoff below which the interior block is
// declared rank deficient.
ReducedNetwork kron_reduce(const AssembledSystem& sys, double tol_rank = 1e-8);

// V_int = J_int^{-1} (S_int - J_c^T V_ext), residual-checked to 1e-9.
Eigen::VectorXd recover_interior(const ReducedNetwork& red,
                                 const Eigen::VectorXd& S_int,
                                 const Eigen::VectorXd& V_ext);

// Stacked per-node balanced directions (1_n, 0_n) over the given blocks.
Eigen::VectorXd balanced_stack(const std::vector<CoordBlock>& blocks);

}  // namespace phasebal
