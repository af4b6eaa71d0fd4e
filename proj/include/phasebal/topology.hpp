#pragma once

#include <map>
#include <set>
#include <vector>

#include "phasebal/types.hpp"

namespace phasebal {

// Indices (into model.branches) of branches whose kind synchronizes the
// terminal deviations: YgYg, Line3, YgD, Single.
std::set<size_t> sync_edges(const NetworkModel& model);

struct ConnectivityResult {
  bool ok = false;
  // One witness per interior node: node sequence from the interior node to
  // an exterior node, every hop a sync edge traversed primary -> secondary.
  std::map<NodeId, std::vector<NodeId>> witnesses;
  std::vector<NodeId> violators;
  // True when some witness terminates at a single-phase exterior node; the
  // strict reading of the connectivity definition targets three-phase
  // exteriors, so this is surfaced rather than silently accepted.
  bool used_1phi_exterior = false;
};

ConnectivityResult is_interior_exterior_connected(const NetworkModel& model);

struct ConsistencyReport {
  bool ok = false;
  std::vector<NodeId> cycle;  // on failure: closed walk with mismatched counts
  std::string detail;
};

// Every path between two nodes must traverse the same signed multiset of
// (transformer kind, ratio tag) pairs. Checked via a spanning tree of the
// three-phase subgraph plus the cycle condition on non-tree edges.
ConsistencyReport check_path_consistency(const NetworkModel& model);

struct BridgeReport {
  bool ok = false;
  std::vector<NodeId> path;  // offending path between two 3ph nodes
};

// The subgraph of Single branches must not connect two three-phase nodes.
BridgeReport check_no_1phi_bridge(const NetworkModel& model);

struct WellPosednessReport {
  bool structural = false;  // field-level invariants
  bool simple = false;
  bool connected = false;
  bool converters_consistent = false;  // exterior <=> converter present
  ConnectivityResult connectivity;
  ConsistencyReport consistency;
  BridgeReport bridge;
  bool no_converters = false;  // warning, not a failure
  std::vector<std::string> problems;

  bool pass() const;
  std::string text() const;
};

WellPosednessReport validate(const NetworkModel& model,
                             const std::vector<ControllerSpec>& specs);

}  // namespace phasebal
