#include "phasebal/stability.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "phasebal/format.hpp"

namespace phasebal {

Eigen::MatrixXd h_matrix() {
  Eigen::MatrixXd H(6, 6);
  H << blocks::P3(), blocks::P4(), -blocks::P4(), blocks::P3();
  return H;
}

Eigen::MatrixXd h_power(long r) {
  if (r < 0) throw SemanticError("h_power: negative exponent");
  if (r == 0) return Eigen::MatrixXd::Identity(6, 6);
  const long e = (r - 1) % 6 + 1;
  const Eigen::MatrixXd H = h_matrix();
  Eigen::MatrixXd out = H;
  for (long i = 1; i < e; ++i) out = out * H;
  return out;
}

Eigen::MatrixXd mu3() {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(6, 3);
  m.topRows(3) = Eigen::Matrix3d::Identity();
  return m;
}

const char* to_string(StructuralCondition c) {
  switch (c) {
    case StructuralCondition::None: return "none";
    case StructuralCondition::PosSeqExterior: return "posseq-exterior";
    case StructuralCondition::BalancingGain: return "balancing-gain";
    case StructuralCondition::YgdPath: return "ygd-path";
  }
  return "?";
}

namespace {

struct Arc {
  size_t branch;
  NodeId to;
  int dir;  // +1 when traversed from -> to
};

bool ygd_path_between(const NetworkModel& model,
                      const std::map<NodeId, std::vector<Arc>>& adj,
                      NodeId start, NodeId goal, std::vector<NodeId>& path) {
  std::map<NodeId, bool> visited;
  std::vector<NodeId> stack{start};
  std::function<bool(NodeId, int, int)> dfs = [&](NodeId u, int pos,
                                                  int neg) -> bool {
    if (u == goal) {
      if (pos + neg >= 1 && (pos == 0 || neg == 0)) {
        path = stack;
        return true;
      }
      return false;
    }
    visited[u] = true;
    auto it = adj.find(u);
    if (it != adj.end()) {
      for (const Arc& a : it->second) {
        if (visited[a.to]) continue;
        int p = pos, n = neg;
        if (model.branches[a.branch].kind == BranchKind::YgD)
          (a.dir > 0 ? p : n) += 1;
        stack.push_back(a.to);
        if (dfs(a.to, p, n)) return true;
        stack.pop_back();
      }
    }
    visited[u] = false;
    return false;
  };
  return dfs(start, 0, 0);
}

}  // namespace

ConditionScan structural_stability_conditions(
    const NetworkModel& model, const std::vector<ControllerSpec>& specs) {
  ConditionScan scan;

  for (const ControllerSpec& s : specs) {
    if (s.law != ControlLaw::PositiveSequenceDroop) continue;
    const NodeSpec& n = model.node(s.node);
    if (n.role == NodeRole::Exterior && n.phase_count == 3) {
      scan.fired = StructuralCondition::PosSeqExterior;
      return scan;
    }
  }

  for (const ControllerSpec& s : specs) {
    if (s.law != ControlLaw::GeneralizedDroop || !(s.k_bal > 0.0)) continue;
    const NodeSpec& n = model.node(s.node);
    if (n.role == NodeRole::Exterior && n.phase_count == 3) {
      scan.fired = StructuralCondition::BalancingGain;
      return scan;
    }
  }

  int three_phase = 0;
  for (const NodeSpec& n : model.nodes)
    if (n.phase_count == 3) ++three_phase;
  if (three_phase > 20) {
    scan.searched_paths = false;
    scan.note = "path search skipped (more than 20 three-phase nodes); "
                "certification is spectral-only";
    return scan;
  }

  std::map<NodeId, std::vector<Arc>> adj;
  for (size_t l = 0; l < model.branches.size(); ++l) {
    const BranchSpec& br = model.branches[l];
    adj[br.from].push_back({l, br.to, +1});
    adj[br.to].push_back({l, br.from, -1});
  }

  std::vector<NodeId> exteriors;
  for (const NodeSpec& n : model.nodes)
    if (n.role == NodeRole::Exterior) exteriors.push_back(n.id);

  for (size_t a = 0; a < exteriors.size(); ++a) {
    for (size_t b = a + 1; b < exteriors.size(); ++b) {
      std::vector<NodeId> path;
      if (ygd_path_between(model, adj, exteriors[a], exteriors[b], path)) {
        scan.fired = StructuralCondition::YgdPath;
        scan.witness_path = path;
        return scan;
      }
    }
  }
  return scan;
}

ClosedLoopModel assemble_closed_loop(const ReducedNetwork& red,
                                     const NetworkModel& model,
                                     const std::vector<ControllerSpec>& specs) {
  ClosedLoopModel cl;
  cl.model = model;
  cl.red = red;
  cl.states = state_layout(model, specs);

  if (cl.states.blocks.size() != red.ext_blocks.size())
    throw DimensionMismatch("converter layout does not match partition");

  const int ne = red.n_ext();
  const int ni = red.n_int();
  const int ns = cl.states.total;

  cl.E_ext = Eigen::MatrixXd::Zero(ne, ns);
  cl.L = Eigen::MatrixXd::Zero(ns, ns);
  cl.m_sqrt = Eigen::VectorXd::Zero(ns);
  cl.xi_x = Eigen::VectorXd::Zero(ns);

  for (size_t j = 0; j < cl.states.blocks.size(); ++j) {
    const StateBlock& sb = cl.states.blocks[j];
    const CoordBlock& cb = red.ext_blocks[j];
    if (sb.id != cb.id)
      throw DimensionMismatch("converter layout does not match partition");
    ControllerSpec spec;
    spec.node = sb.id;
    spec.law = sb.law;
    spec.m_d = sb.m_d;
    spec.tau = sb.tau;
    spec.k_bal = sb.k_bal;
    const ControlMatrices cm = control_matrices(spec);
    if (cm.voltage_dim != cb.width || cm.state_dim != sb.state_dim)
      throw DimensionMismatch("control matrices do not fit node block");
    cl.E_ext.block(cb.offset, sb.offset, cb.width, sb.state_dim) = cm.E;
    cl.L.block(sb.offset, sb.offset, sb.state_dim, sb.state_dim) =
        cm.local_term;
    cl.m_sqrt.segment(sb.offset, sb.state_dim)
        .setConstant(std::sqrt(sb.m_d));
    const int half = sb.state_dim / 2;
    cl.xi_x.segment(sb.offset, half).setOnes();
    for (int c = 0; c < half; ++c) {
      cl.angle_channels.push_back(sb.offset + c);
      std::string label = "omega_" + std::to_string(sb.id);
      if (sb.law == ControlLaw::GeneralizedDroop)
        label += std::string("_") + to_string(static_cast<Phase>(c));
      cl.angle_labels.push_back(label);
    }
  }

  cl.xi_y = cl.xi_x.cwiseQuotient(cl.m_sqrt);

  const Eigen::MatrixXd ED = cl.E_ext * cl.m_sqrt.asDiagonal();  // E M^{1/2}
  const Eigen::MatrixXd TL = ED.transpose() * red.J_ext * ED + cl.L;
  const Eigen::MatrixXd TR = ED.transpose() * red.J_c;

  cl.J_cl = Eigen::MatrixXd::Zero(ns + ni, ns + ni);
  cl.J_cl.topLeftCorner(ns, ns) = TL;
  cl.J_cl.topRightCorner(ns, ni) = TR;
  cl.J_cl.bottomLeftCorner(ni, ns) = TR.transpose();
  cl.J_cl.bottomRightCorner(ni, ni) = red.J_int;

  Eigen::MatrixXd direct = -(ED.transpose() * red.J_red * ED + cl.L);
  Eigen::MatrixXd schur =
      ni > 0 ? Eigen::MatrixXd(-(TL - TR * red.factor.solve(TR.transpose())))
             : Eigen::MatrixXd(-TL);
  cl.cross_check = (direct - schur).norm();
  if (!(cl.cross_check <= 1e-10))
    throw Error("closed-loop reduction routes disagree beyond 1e-10");
  cl.J_cl_red = 0.5 * (direct + direct.transpose());

  cl.input_map_cl = -(ED.transpose() * red.input_map);
  cl.ext_inject_map = ED.transpose();
  return cl;
}

static Eigen::MatrixXd kernel_of(const Eigen::MatrixXd& A, double tol_zero,
                                 Eigen::VectorXd* spectrum_out,
                                 double* threshold_out) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  const Eigen::VectorXd lam = es.eigenvalues();
  if (spectrum_out) *spectrum_out = lam;
  const Eigen::Index n = lam.size();
  const double maxabs = std::max(std::abs(lam(0)), std::abs(lam(n - 1)));
  if (maxabs == 0.0) {
    if (threshold_out) *threshold_out = 0.0;
    return Eigen::MatrixXd::Identity(n, n);
  }
  const double thr = tol_zero * maxabs;
  if (threshold_out) *threshold_out = thr;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(lam(i)) < thr) keep.push_back(i);
  Eigen::MatrixXd basis(n, static_cast<Eigen::Index>(keep.size()));
  for (size_t c = 0; c < keep.size(); ++c)
    basis.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]);
  return basis;
}

NullspaceResult nullspace(const ClosedLoopModel& model, double tol_zero) {
  NullspaceResult out;
  out.basis = kernel_of(model.J_cl_red, tol_zero, &out.spectrum,
                        &out.zero_threshold);
  out.dim = static_cast<int>(out.basis.cols());
  double thr_full = 0.0;
  out.basis_full = kernel_of(model.J_cl, tol_zero, nullptr, &thr_full);
  out.dim_full = static_cast<int>(out.basis_full.cols());
  return out;
}

double span_residual(const Eigen::MatrixXd& sub, const Eigen::MatrixXd& space) {
  if (space.cols() == 0) return sub.norm();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(space);
  const Eigen::Index r = qr.rank();
  const Eigen::MatrixXd Q =
      Eigen::MatrixXd(qr.householderQ()).leftCols(r);
  return (sub - Q * (Q.transpose() * sub)).norm();
}

const char* to_string(StabilityCertificate::Verdict v) {
  switch (v) {
    case StabilityCertificate::Verdict::Stable: return "stable";
    case StabilityCertificate::Verdict::Indeterminate: return "indeterminate";
    case StabilityCertificate::Verdict::UnstableStructure:
      return "unstable-structure";
  }
  return "?";
}

StabilityCertificate certify(const NetworkModel& model,
                             const std::vector<ControllerSpec>& specs,
                             double tol_rank, double tol_zero) {
  const AssembledSystem sys = assemble(model, specs);
  const ReducedNetwork red = kron_reduce(sys, tol_rank);
  return certify(assemble_closed_loop(red, model, specs), tol_zero);
}

StabilityCertificate certify(const ClosedLoopModel& cl, double tol_zero) {
  std::vector<ControllerSpec> specs;
  for (const StateBlock& b : cl.states.blocks)
    specs.push_back({b.id, b.law, b.m_d, b.tau, b.k_bal});

  StabilityCertificate cert;
  cert.kernel = nullspace(cl, tol_zero);
  cert.uniform_gains = cl.states.uniform_m_d;
  if (cert.uniform_gains) {
    cert.conditions = structural_stability_conditions(cl.model, specs);
  } else {
    cert.conditions.note =
        "heterogeneous m_d: structural conditions not applied, "
        "analysis is numerical only";
  }
  if (!cert.conditions.note.empty()) cert.notes.push_back(cert.conditions.note);

  Eigen::MatrixXd balanced(cl.n_states(),
                           static_cast<Eigen::Index>(cl.states.blocks.size()));
  balanced.setZero();
  for (size_t j = 0; j < cl.states.blocks.size(); ++j) {
    const StateBlock& sb = cl.states.blocks[j];
    balanced.col(static_cast<Eigen::Index>(j))
        .segment(sb.offset, sb.state_dim / 2)
        .setOnes();
  }
  cert.balanced_subspace =
      cert.kernel.dim > 0 &&
      span_residual(cert.kernel.basis, balanced) < 1e-8;

  bool margin = true;
  const Eigen::Index n = cert.kernel.spectrum.size();
  for (Eigen::Index i = 0; i < n - cert.kernel.dim; ++i)
    if (!(cert.kernel.spectrum(i) < -cert.kernel.zero_threshold))
      margin = false;

  if (cert.kernel.dim > 1) {
    cert.verdict = StabilityCertificate::Verdict::UnstableStructure;
    cert.notes.push_back(
        "nullspace dimension exceeds the synchronous subspace");
  } else if (cert.kernel.dim == 1 && margin && cert.balanced_subspace &&
             cert.conditions.fired != StructuralCondition::None) {
    cert.verdict = StabilityCertificate::Verdict::Stable;
  } else {
    cert.verdict = StabilityCertificate::Verdict::Indeterminate;
    if (cert.kernel.dim == 0)
      cert.notes.push_back("no zero eigenvalue found at this threshold");
    if (!margin)
      cert.notes.push_back("nonzero eigenvalues lack a clear negative margin");
    if (cert.kernel.dim == 1 && !cert.balanced_subspace)
      cert.notes.push_back("zero mode is not the balanced direction");
    if (cert.kernel.dim == 1 && margin && cert.balanced_subspace &&
        cert.conditions.fired == StructuralCondition::None)
      cert.notes.push_back(
          "spectrum is clean but no structural condition holds; "
          "the conditions are sufficient, not necessary");
  }
  return cert;
}

std::string StabilityCertificate::text() const {
  std::ostringstream os;
  os << "verdict: " << to_string(verdict) << "\n";
  os << "condition: " << to_string(conditions.fired) << "\n";
  if (!conditions.witness_path.empty()) {
    os << "witness_path:";
    for (NodeId v : conditions.witness_path) os << " " << v;
    os << "\n";
  }
  if (!conditions.searched_paths) os << "path_search: skipped\n";
  os << "nullspace_dim: " << kernel.dim << "\n";
  os << "nullspace_dim_unreduced: " << kernel.dim_full << "\n";
  os << "balanced_subspace: " << (balanced_subspace ? "yes" : "no") << "\n";
  os << "uniform_gains: " << (uniform_gains ? "yes" : "no") << "\n";
  os << "zero_threshold: " << format_double(kernel.zero_threshold) << "\n";

  std::vector<double> lam(kernel.spectrum.data(),
                          kernel.spectrum.data() + kernel.spectrum.size());
  std::sort(lam.begin(), lam.end(),
            [](double a, double b) { return std::abs(a) < std::abs(b); });
  os << "eigenvalues_near_zero:";
  for (size_t i = 0; i < lam.size() && i < 10; ++i)
    os << " " << format_double(lam[i]);
  os << "\n";
  for (const std::string& note : notes) os << "note: " << note << "\n";
  return os.str();
}

}  // namespace phasebal
