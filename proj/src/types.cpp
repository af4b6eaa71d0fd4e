#include "phasebal/types.hpp"

namespace phasebal {

const char* to_string(BranchKind k) {
  switch (k) {
    case BranchKind::YgYg: return "YgYg";
    case BranchKind::YgY: return "YgY";
    case BranchKind::YgD: return "YgD";
    case BranchKind::YY: return "YY";
    case BranchKind::YD: return "YD";
    case BranchKind::DD: return "DD";
    case BranchKind::Line3: return "Line3";
    case BranchKind::Single: return "Single";
  }
  return "?";
}

const char* to_string(Phase p) {
  switch (p) {
    case Phase::A: return "a";
    case Phase::B: return "b";
    case Phase::C: return "c";
  }
  return "?";
}

const char* to_string(NodeRole r) {
  return r == NodeRole::Exterior ? "exterior" : "interior";
}

const char* to_string(ControlLaw l) {
  switch (l) {
    case ControlLaw::SinglePhaseDroop: return "SinglePhaseDroop";
    case ControlLaw::PositiveSequenceDroop: return "PositiveSequenceDroop";
    case ControlLaw::GeneralizedDroop: return "GeneralizedDroop";
  }
  return "?";
}

std::optional<BranchKind> branch_kind_from(const std::string& s) {
  if (s == "YgYg") return BranchKind::YgYg;
  if (s == "YgY") return BranchKind::YgY;
  if (s == "YgD") return BranchKind::YgD;
  if (s == "YY") return BranchKind::YY;
  if (s == "YD") return BranchKind::YD;
  if (s == "DD") return BranchKind::DD;
  if (s == "Line3") return BranchKind::Line3;
  if (s == "Single") return BranchKind::Single;
  return std::nullopt;
}

std::optional<Phase> phase_from(const std::string& s) {
  if (s == "a") return Phase::A;
  if (s == "b") return Phase::B;
  if (s == "c") return Phase::C;
  return std::nullopt;
}

std::optional<ControlLaw> control_law_from(const std::string& s) {
  if (s == "SinglePhaseDroop") return ControlLaw::SinglePhaseDroop;
  if (s == "PositiveSequenceDroop") return ControlLaw::PositiveSequenceDroop;
  if (s == "GeneralizedDroop") return ControlLaw::GeneralizedDroop;
  return std::nullopt;
}

bool is_transformer(BranchKind k) {
  return k != BranchKind::Line3 && k != BranchKind::Single;
}

bool is_sync_kind(BranchKind k) {
  return k == BranchKind::YgYg || k == BranchKind::Line3 ||
         k == BranchKind::YgD || k == BranchKind::Single;
}

int NetworkModel::index_of(NodeId id) const {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].id == id) return static_cast<int>(i);
  return -1;
}

const NodeSpec& NetworkModel::node(NodeId id) const {
  int i = index_of(id);
  if (i < 0) throw SemanticError("unknown node id " + std::to_string(id));
  return nodes[static_cast<size_t>(i)];
}

}  // namespace phasebal
