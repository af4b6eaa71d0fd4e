#include "phasebal/branch.hpp"

#include <cmath>

namespace phasebal {

namespace blocks {

static const double s3 = std::sqrt(3.0);

Eigen::Matrix3d P1() {
  Eigen::Matrix3d m;
  m << 4, 1, 1, 1, 4, 1, 1, 1, 4;
  return m / 6.0;
}

Eigen::Matrix3d P2() {
  Eigen::Matrix3d m;
  m << 0, 1, -1, -1, 0, 1, 1, -1, 0;
  return m * (s3 / 6.0);
}

Eigen::Matrix3d P3() {
  Eigen::Matrix3d m;
  m << 1, 0, 1, 1, 1, 0, 0, 1, 1;
  return m / 2.0;
}

Eigen::Matrix3d P4() {
  Eigen::Matrix3d m;
  m << 1, 0, -1, -1, 1, 0, 0, -1, 1;
  return m * (s3 / 6.0);
}

Eigen::Matrix3d Y1() {
  return Eigen::Matrix3d::Identity() -
         Eigen::Matrix3d::Constant(1.0 / 3.0);
}

Eigen::Matrix3d Y2() {
  Eigen::Matrix3d m;
  m << -1, 1, 0, 0, -1, 1, 1, 0, -1;
  return m / s3;
}

Eigen::MatrixXd angle_magnitude_block(const Eigen::MatrixXd& P,
                                      const Eigen::MatrixXd& R) {
  const auto n = P.rows();
  Eigen::MatrixXd out(2 * n, 2 * n);
  out << P, -R.transpose(), -R, P;
  return out;
}

}  // namespace blocks

Eigen::MatrixXcd AdmittanceBlocks::full(double b) const {
  Eigen::MatrixXcd out(n_i + n_k, n_i + n_k);
  out << Y_ii, Y_ik, Y_ik.transpose(), Y_kk;
  return std::complex<double>(0.0, b) * out;
}

static Eigen::Vector3d unit_phase(Phase p) {
  Eigen::Vector3d e = Eigen::Vector3d::Zero();
  e(static_cast<int>(p)) = 1.0;
  return e;
}

static void require_phase_usage(BranchKind kind, std::optional<Phase> phase) {
  if (kind == BranchKind::Single) return;  // optional there
  if (phase)
    throw SemanticError(std::string("phase incidence given for kind ") +
                        to_string(kind));
}

AdmittanceBlocks admittance_blocks(BranchKind kind,
                                   std::optional<Phase> phase) {
  require_phase_usage(kind, phase);
  using Eigen::Matrix3d;
  using Eigen::MatrixXcd;
  const Matrix3d I = Matrix3d::Identity();
  AdmittanceBlocks out;
  auto set3 = [&](const Matrix3d& yii, const Matrix3d& yik,
                  const Matrix3d& ykk) {
    out.Y_ii = yii.cast<std::complex<double>>();
    out.Y_ik = yik.cast<std::complex<double>>();
    out.Y_kk = ykk.cast<std::complex<double>>();
    out.n_i = out.n_k = 3;
  };
  switch (kind) {
    case BranchKind::YgYg:
    case BranchKind::Line3:
      set3(I, -I, I);
      break;
    case BranchKind::YgY:
    case BranchKind::YY:
    case BranchKind::DD:
      set3(blocks::Y1(), -blocks::Y1(), blocks::Y1());
      break;
    case BranchKind::YgD:
      set3(I, blocks::Y2(), blocks::Y1());
      break;
    case BranchKind::YD:
      set3(blocks::Y1(), blocks::Y2(), blocks::Y1());
      break;
    case BranchKind::Single: {
      out.n_i = 1;
      if (phase) {
        const Eigen::Vector3d e = unit_phase(*phase);
        out.n_k = 3;
        out.Y_ii = MatrixXcd::Ones(1, 1);
        out.Y_ik = (-e.transpose()).cast<std::complex<double>>();
        out.Y_kk = (e * e.transpose()).cast<std::complex<double>>();
      } else {
        out.n_k = 1;
        out.Y_ii = MatrixXcd::Ones(1, 1);
        out.Y_ik = -MatrixXcd::Ones(1, 1);
        out.Y_kk = MatrixXcd::Ones(1, 1);
      }
      break;
    }
  }
  return out;
}

JacobianBlocks jacobian_blocks(BranchKind kind, std::optional<Phase> phase) {
  require_phase_usage(kind, phase);
  using Eigen::Matrix3d;
  using Eigen::MatrixXd;
  const Matrix3d I = Matrix3d::Identity();
  const Matrix3d Z = Matrix3d::Zero();
  JacobianBlocks out;

  auto assemble = [&] {
    out.J_ii = blocks::angle_magnitude_block(out.P_ii, out.R_ii);
    // Cross pattern: [[-P_ik, -R_ik],[R_ik, -P_ik]], untransposed.
    const auto nk = out.P_ik.rows(), ni = out.P_ik.cols();
    out.J_ik.resize(2 * nk, 2 * ni);
    out.J_ik << -out.P_ik, -out.R_ik, out.R_ik, -out.P_ik;
    out.n_i = static_cast<int>(ni);
    out.n_k = static_cast<int>(nk);
  };

  switch (kind) {
    case BranchKind::YgYg:
    case BranchKind::Line3:
      out.P_ii = I; out.R_ii = Z; out.P_ik = I; out.R_ik = Z;
      break;
    case BranchKind::YgY:
    case BranchKind::YY:
    case BranchKind::DD:
      // J_ik = -J_ii: the pattern absorbs the sign into P_ik = P1, R_ik = P2.
      out.P_ii = blocks::P1(); out.R_ii = blocks::P2();
      out.P_ik = blocks::P1(); out.R_ik = blocks::P2();
      break;
    case BranchKind::YgD:
      out.P_ii = I; out.R_ii = Z;
      out.P_ik = blocks::P3(); out.R_ik = blocks::P4();
      break;
    case BranchKind::YD:
      out.P_ii = blocks::P1(); out.R_ii = blocks::P2();
      out.P_ik = blocks::P3(); out.R_ik = blocks::P4();
      break;
    case BranchKind::Single: {
      out.P_ii = MatrixXd::Identity(1, 1);
      out.R_ii = MatrixXd::Zero(1, 1);
      if (phase) {
        out.P_ik = unit_phase(*phase);  // 3x1 column
        out.R_ik = MatrixXd::Zero(3, 1);
      } else {
        out.P_ik = MatrixXd::Identity(1, 1);
        out.R_ik = MatrixXd::Zero(1, 1);
      }
      break;
    }
  }
  assemble();
  return out;
}

BranchPFMatrix branch_pf_matrix(double b, const JacobianBlocks& jb) {
  if (!(b > 0.0)) throw SemanticError("susceptance must be positive");
  const auto rows = jb.J_ii.rows() + jb.J_ik.rows();
  Eigen::MatrixXd stacked(rows, jb.J_ii.cols());
  stacked << jb.J_ii, jb.J_ik;
  return {b * stacked * stacked.transpose()};
}

Eigen::VectorXd balanced_direction(int n) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(2 * n);
  v.head(n).setOnes();
  return v;
}

bool Property1Report::pass() const {
  bool ok = branch_psd && jii_psd && annihilates_balanced;
  if (sync) ok = ok && jii_pd && schur_zero;
  return ok;
}

Property1Report verify_property1(BranchKind kind, std::optional<Phase> phase) {
  const double tol = 1e-10;
  Property1Report rep;
  rep.sync = is_sync_kind(kind);
  const auto jb = jacobian_blocks(kind, phase);
  const auto pf = branch_pf_matrix(1.0, jb).J_branch;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_pf(pf);
  const double min_pf = es_pf.eigenvalues().minCoeff();
  rep.branch_psd = min_pf >= -tol;
  rep.max_violation = std::max(rep.max_violation, std::max(0.0, -min_pf));

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_ii(jb.J_ii);
  const double min_ii = es_ii.eigenvalues().minCoeff();
  rep.jii_psd = min_ii >= -tol;
  rep.max_violation = std::max(rep.max_violation, std::max(0.0, -min_ii));

  Eigen::VectorXd nu(2 * (jb.n_i + jb.n_k));
  nu << balanced_direction(jb.n_i), balanced_direction(jb.n_k);
  const double ann = (pf * nu).norm();
  rep.annihilates_balanced = ann < tol;
  rep.max_violation = std::max(rep.max_violation, ann);

  if (rep.sync) {
    rep.jii_pd = min_ii > tol;
    const Eigen::MatrixXd gram = jb.J_ii * jb.J_ii.transpose();
    const Eigen::MatrixXd schur =
        jb.J_ik * jb.J_ik.transpose() -
        jb.J_ik * jb.J_ii * gram.ldlt().solve(jb.J_ii * jb.J_ik.transpose());
    const double s = schur.norm();
    rep.schur_zero = s < tol;
    rep.max_violation = std::max(rep.max_violation, s);
  }
  return rep;
}

}  // namespace phasebal
