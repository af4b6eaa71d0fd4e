#include "phasebal/network.hpp"

#include <Eigen/SVD>

#include <sstream>

#include "phasebal/topology.hpp"

namespace phasebal {

const CoordBlock& SystemLayout::block_of(NodeId id) const {
  for (const CoordBlock& b : blocks)
    if (b.id == id) return b;
  throw SemanticError("unknown node id " + std::to_string(id));
}

SystemLayout make_layout(const NetworkModel& model) {
  SystemLayout layout;
  int off = 0;
  for (size_t i = 0; i < model.nodes.size(); ++i) {
    const NodeSpec& n = model.nodes[i];
    layout.blocks.push_back(
        {static_cast<int>(i), n.id, off, 2 * n.phase_count});
    off += 2 * n.phase_count;
  }
  layout.total = off;
  return layout;
}

Eigen::MatrixXd AssembledSystem::W() const {
  return Eigen::MatrixXd(W_diag.asDiagonal());
}

AssembledSystem assemble_unchecked(const NetworkModel& model) {
  AssembledSystem sys;
  sys.model = model;
  sys.layout = make_layout(model);
  const int N = sys.layout.total;

  int cols = 0;
  for (const BranchSpec& br : model.branches) {
    sys.branch_blocks.push_back(jacobian_blocks(br.kind, br.phase));
    sys.branch_col.push_back(cols);
    cols += 2 * sys.branch_blocks.back().n_i;
  }

  sys.B = Eigen::MatrixXd::Zero(N, cols);
  sys.W_diag = Eigen::VectorXd::Zero(cols);
  Eigen::MatrixXd per_branch = Eigen::MatrixXd::Zero(N, N);

  for (size_t l = 0; l < model.branches.size(); ++l) {
    const BranchSpec& br = model.branches[l];
    const JacobianBlocks& jb = sys.branch_blocks[l];
    if (!(br.b > 0.0))
      throw SemanticError("branch " + std::to_string(br.from) + "-" +
                          std::to_string(br.to) + ": susceptance must be positive");
    const CoordBlock& bi = sys.layout.block_of(br.from);
    const CoordBlock& bk = sys.layout.block_of(br.to);
    const int wi = 2 * jb.n_i, wk = 2 * jb.n_k;
    if (bi.width != wi || bk.width != wk)
      throw SemanticError("branch " + std::to_string(br.from) + "-" +
                          std::to_string(br.to) +
                          ": kind incompatible with node phase counts");

    const int col = sys.branch_col[l];
    sys.B.block(bi.offset, col, wi, wi) = jb.J_ii;
    sys.B.block(bk.offset, col, wk, wi) = jb.J_ik;
    sys.W_diag.segment(col, wi).setConstant(br.b);

    const Eigen::MatrixXd Jl = branch_pf_matrix(br.b, jb).J_branch;
    per_branch.block(bi.offset, bi.offset, wi, wi) += Jl.topLeftCorner(wi, wi);
    per_branch.block(bi.offset, bk.offset, wi, wk) += Jl.topRightCorner(wi, wk);
    per_branch.block(bk.offset, bi.offset, wk, wi) += Jl.bottomLeftCorner(wk, wi);
    per_branch.block(bk.offset, bk.offset, wk, wk) += Jl.bottomRightCorner(wk, wk);
  }

  sys.J = sys.B * sys.W_diag.asDiagonal() * sys.B.transpose();
  sys.assembly_gap = (sys.J - per_branch).norm();
  if (!(sys.assembly_gap < 1e-12))
    throw Error("assembly routes disagree; incidence scatter is inconsistent");
  const double asym = (sys.J - sys.J.transpose()).norm();
  if (!(asym < 1e-12))
    throw Error("network matrix asymmetric beyond tolerance");

  for (const CoordBlock& b : sys.layout.blocks) {
    const bool ext = model.nodes[b.node_index].role == NodeRole::Exterior;
    std::vector<int>& coords = ext ? sys.ext_coords : sys.int_coords;
    std::vector<CoordBlock>& sub = ext ? sys.ext_blocks : sys.int_blocks;
    CoordBlock copy = b;
    copy.offset = static_cast<int>(coords.size());
    sub.push_back(copy);
    for (int c = 0; c < b.width; ++c) coords.push_back(b.offset + c);
  }
  return sys;
}

AssembledSystem assemble(const NetworkModel& model,
                         const std::vector<ControllerSpec>& specs) {
  WellPosednessReport rep = validate(model, specs);
  if (!rep.pass())
    throw ValidationFailed("model failed validation\n" + rep.text());
  return assemble_unchecked(model);
}

static Eigen::MatrixXd select(const Eigen::MatrixXd& J,
                              const std::vector<int>& rows,
                              const std::vector<int>& cols) {
  Eigen::MatrixXd out(rows.size(), cols.size());
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < cols.size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          J(rows[r], cols[c]);
  return out;
}

PartitionView partition(const AssembledSystem& sys) {
  if (sys.ext_coords.empty())
    throw SemanticError("network has no exterior nodes");
  PartitionView p;
  p.J_ext = select(sys.J, sys.ext_coords, sys.ext_coords);
  p.J_c = select(sys.J, sys.ext_coords, sys.int_coords);
  p.J_int = select(sys.J, sys.int_coords, sys.int_coords);
  return p;
}

Eigen::VectorXd ReducedNetwork::solve_interior(const Eigen::VectorXd& rhs) const {
  if (n_int() == 0) return Eigen::VectorXd::Zero(0);
  Eigen::VectorXd x = factor.solve(rhs);
  x += factor.solve(rhs - J_int * x);  // one refinement step
  return x;
}

ReducedNetwork kron_reduce(const AssembledSystem& sys, double tol_rank) {
  PartitionView p = partition(sys);
  ReducedNetwork red;
  red.J_ext = p.J_ext;
  red.J_c = p.J_c;
  red.J_int = p.J_int;
  red.ext_coords = sys.ext_coords;
  red.int_coords = sys.int_coords;
  red.ext_blocks = sys.ext_blocks;
  red.int_blocks = sys.int_blocks;

  const Eigen::Index ni = p.J_int.rows();
  if (ni == 0) {
    red.J_red = p.J_ext;
    red.input_map = Eigen::MatrixXd::Zero(p.J_ext.rows(), 0);
    red.factor.compute(Eigen::MatrixXd::Zero(0, 0));
    return red;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(p.J_int);
  red.sigma_max = svd.singularValues()(0);
  red.sigma_min = svd.singularValues()(ni - 1);
  if (!(red.sigma_min > tol_rank * red.sigma_max)) {
    std::ostringstream os;
    os << "interior block numerically rank deficient (sigma_min "
       << red.sigma_min << ", sigma_max " << red.sigma_max
       << "); network is not interior-exterior connected or is degenerate";
    throw RankDeficientInterior(os.str(), red.sigma_min, red.sigma_max);
  }

  red.factor.compute(p.J_int);
  red.input_map = red.factor.solve(p.J_c.transpose()).transpose();
  red.J_red = p.J_ext - red.input_map * p.J_c.transpose();
  const double asym = (red.J_red - red.J_red.transpose()).norm();
  if (!(asym < 1e-10))
    throw Error("reduced matrix asymmetric beyond tolerance");
  red.J_red = 0.5 * (red.J_red + red.J_red.transpose()).eval();
  return red;
}

Eigen::VectorXd recover_interior(const ReducedNetwork& red,
                                 const Eigen::VectorXd& S_int,
                                 const Eigen::VectorXd& V_ext) {
  if (S_int.size() != red.n_int() || V_ext.size() != red.n_ext())
    throw DimensionMismatch("recover_interior: S_int/V_ext sizes do not match partition");
  if (red.n_int() == 0) return Eigen::VectorXd::Zero(0);
  const Eigen::VectorXd rhs = S_int - red.J_c.transpose() * V_ext;
  const Eigen::VectorXd V_int = red.solve_interior(rhs);
  const double resid =
      (red.J_c.transpose() * V_ext + red.J_int * V_int - S_int).norm();
  if (!(resid < 1e-9))
    throw Error("interior recovery residual exceeds 1e-9");
  return V_int;
}

Eigen::VectorXd balanced_stack(const std::vector<CoordBlock>& blocks) {
  int total = 0;
  for (const CoordBlock& b : blocks) total += b.width;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(total);
  int off = 0;
  for (const CoordBlock& b : blocks) {
    v.segment(off, b.width / 2).setOnes();
    off += b.width;
  }
  return v;
}

}  // namespace phasebal
