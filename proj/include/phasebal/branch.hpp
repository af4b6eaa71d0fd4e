#pragma once

#include <Eigen/Dense>

#include "phasebal/types.hpp"

namespace phasebal {

// Constant blocks of the linearized branch power-flow model and of the
// branch admittance model. All are exact closed forms (rationals times
// sqrt(3)); the linearization point is 1 p.u. magnitude at zero branch flow.
namespace blocks {

Eigen::Matrix3d P1();  // (1/6)  [[4,1,1],[1,4,1],[1,1,4]]
Eigen::Matrix3d P2();  // (s3/6) [[0,1,-1],[-1,0,1],[1,-1,0]]
Eigen::Matrix3d P3();  // (1/2)  [[1,0,1],[1,1,0],[0,1,1]]
Eigen::Matrix3d P4();  // (s3/6) [[1,0,-1],[-1,1,0],[0,-1,1]]

Eigen::Matrix3d Y1();   // I3 - (1/3) 1 1^T
Eigen::Matrix3d Y2();   // (1/s3) [[-1,1,0],[0,-1,1],[1,0,-1]]

// [[P, -R^T],[-R, P]]
Eigen::MatrixXd angle_magnitude_block(const Eigen::MatrixXd& P,
                                      const Eigen::MatrixXd& R);

}  // namespace blocks

struct AdmittanceBlocks {
  Eigen::MatrixXcd Y_ii, Y_ik, Y_kk;
  int n_i = 3, n_k = 3;

  // j*b*[[Y_ii, Y_ik],[Y_ik^T, Y_kk]]
  Eigen::MatrixXcd full(double b) const;
};

// Real linearized blocks. P_ii/R_ii are n_i x n_i. The cross blocks P_ik,
// R_ik are n_k rows by n_i columns, so J_ik (2n_k x 2n_i) right-multiplies
// the primary-side deviation vector and lands on secondary-side rows; that
// is the orientation under which J = B W B^T comes out symmetric PSD.
struct JacobianBlocks {
  Eigen::MatrixXd P_ii, R_ii;  // n_i x n_i
  Eigen::MatrixXd P_ik, R_ik;  // n_k x n_i
  Eigen::MatrixXd J_ii;        // 2n_i x 2n_i  [[P_ii, -R_ii^T],[-R_ii, P_ii]]
  Eigen::MatrixXd J_ik;        // 2n_k x 2n_i  [[-P_ik, -R_ik],[R_ik, -P_ik]]
  int n_i = 3, n_k = 3;
};

struct BranchPFMatrix {
  Eigen::MatrixXd J_branch;  // b * [J_ii; J_ik] [J_ii^T J_ik^T]
};

// `phase` is required iff kind == Single and the secondary is three-phase;
// pass std::nullopt for a 1ph-1ph Single branch.
AdmittanceBlocks admittance_blocks(BranchKind kind, std::optional<Phase> phase);
JacobianBlocks jacobian_blocks(BranchKind kind, std::optional<Phase> phase);

BranchPFMatrix branch_pf_matrix(double b, const JacobianBlocks& jb);

// Balanced direction (1_n, 0_n) in a node's (angle, magnitude) coordinates.
Eigen::VectorXd balanced_direction(int n);

struct Property1Report {
  bool branch_psd = false;          // min eig(J_branch) >= -1e-10
  bool jii_psd = false;             // min eig(J_ii) >= -1e-10
  bool annihilates_balanced = false;
  bool sync = false;
  bool jii_pd = false;              // sync kinds only
  bool schur_zero = false;          // sync kinds only
  double max_violation = 0.0;
  bool pass() const;
};

Property1Report verify_property1(BranchKind kind,
                                 std::optional<Phase> phase = std::nullopt);

}  // namespace phasebal
