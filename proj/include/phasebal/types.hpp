#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace phasebal {

using NodeId = int;

enum class BranchKind { YgYg, YgY, YgD, YY, YD, DD, Line3, Single };
enum class Phase { A = 0, B = 1, C = 2 };
enum class NodeRole { Exterior, Interior };
enum class ControlLaw { SinglePhaseDroop, PositiveSequenceDroop, GeneralizedDroop };

const char* to_string(BranchKind k);
const char* to_string(Phase p);
const char* to_string(NodeRole r);
const char* to_string(ControlLaw l);

std::optional<BranchKind> branch_kind_from(const std::string& s);
std::optional<Phase> phase_from(const std::string& s);
std::optional<ControlLaw> control_law_from(const std::string& s);

// Transformer kinds are every 3ph-3ph kind except the plain line.
bool is_transformer(BranchKind k);

// Branches whose power flow pins the full angle/magnitude difference across
// the terminals: YgYg and YgD transformers, three-phase lines, and
// single-phase branches.
bool is_sync_kind(BranchKind k);

struct NodeSpec {
  NodeId id = 0;
  int phase_count = 3;  // 1 or 3
  NodeRole role = NodeRole::Interior;
};

// Orientation is meaningful: `from` is the primary terminal. For Single
// branches onto a three-phase node, `phase` selects the phase of the
// secondary; it must be absent otherwise. `ratio_tag` is a label used only
// by the path-consistency check (the electrical model is per-unit, ratio 1).
struct BranchSpec {
  NodeId from = 0;
  NodeId to = 0;
  BranchKind kind = BranchKind::Line3;
  double b = 1.0;
  std::optional<Phase> phase;
  std::string ratio_tag;
};

struct ControllerSpec {
  NodeId node = 0;
  ControlLaw law = ControlLaw::GeneralizedDroop;
  double m_d = 0.05;
  double tau = 0.1;
  double k_bal = 0.0;
};

struct NetworkModel {
  std::vector<NodeSpec> nodes;
  std::vector<BranchSpec> branches;

  int index_of(NodeId id) const;  // -1 when absent
  const NodeSpec& node(NodeId id) const;
  bool has_node(NodeId id) const { return index_of(id) >= 0; }
};

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : Error {
  int line, col;
  ParseError(const std::string& what, int line_, int col_)
      : Error(what), line(line_), col(col_) {}
};

struct SemanticError : Error {
  using Error::Error;
};

struct ValidationFailed : Error {
  using Error::Error;
};

// Interior block of the network matrix is numerically rank deficient; the
// model violates interior-exterior connectivity or is degenerate.
struct RankDeficientInterior : Error {
  double sigma_min, sigma_max;
  RankDeficientInterior(const std::string& what, double smin, double smax)
      : Error(what), sigma_min(smin), sigma_max(smax) {}
};

struct NonConformingGains : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

}  // namespace phasebal
