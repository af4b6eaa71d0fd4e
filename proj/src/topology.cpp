#include "phasebal/topology.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace phasebal {

std::set<size_t> sync_edges(const NetworkModel& model) {
  std::set<size_t> out;
  for (size_t l = 0; l < model.branches.size(); ++l)
    if (is_sync_kind(model.branches[l].kind)) out.insert(l);
  return out;
}

ConnectivityResult is_interior_exterior_connected(const NetworkModel& model) {
  ConnectivityResult res;
  const auto sync = sync_edges(model);

  // Directed adjacency over sync edges, primary -> secondary only.
  std::map<NodeId, std::vector<NodeId>> adj;
  for (size_t l : sync) {
    const auto& br = model.branches[l];
    adj[br.from].push_back(br.to);
  }

  res.ok = true;
  for (const auto& n : model.nodes) {
    if (n.role != NodeRole::Interior) continue;
    // BFS from the interior node; parents give the witness path.
    std::map<NodeId, NodeId> parent;
    std::deque<NodeId> q{n.id};
    parent[n.id] = n.id;
    NodeId hit = 0;
    bool found = false;
    while (!q.empty() && !found) {
      NodeId u = q.front();
      q.pop_front();
      auto it = adj.find(u);
      if (it == adj.end()) continue;
      for (NodeId v : it->second) {
        if (parent.count(v)) continue;
        parent[v] = u;
        if (model.node(v).role == NodeRole::Exterior) {
          hit = v;
          found = true;
          break;
        }
        q.push_back(v);
      }
    }
    if (!found) {
      res.ok = false;
      res.violators.push_back(n.id);
      continue;
    }
    if (model.node(hit).phase_count == 1) res.used_1phi_exterior = true;
    std::vector<NodeId> path{hit};
    while (path.back() != n.id) path.push_back(parent[path.back()]);
    std::reverse(path.begin(), path.end());
    res.witnesses[n.id] = std::move(path);
  }
  return res;
}

namespace {

using CountKey = std::pair<BranchKind, std::string>;
using Counts = std::map<CountKey, int>;

void add_traversal(Counts& c, const BranchSpec& br, int sign) {
  if (!is_transformer(br.kind) || br.kind == BranchKind::Single) return;
  c[{br.kind, br.ratio_tag}] += sign;
}

}  // namespace

ConsistencyReport check_path_consistency(const NetworkModel& model) {
  ConsistencyReport rep;
  // Undirected adjacency over 3ph-3ph branches, remembering direction.
  struct Arc {
    size_t branch;
    NodeId other;
    int sign;  // +1 when traversed primary -> secondary
  };
  std::map<NodeId, std::vector<Arc>> adj;
  std::vector<size_t> edges3;
  for (size_t l = 0; l < model.branches.size(); ++l) {
    const auto& br = model.branches[l];
    if (br.kind == BranchKind::Single) continue;
    edges3.push_back(l);
    adj[br.from].push_back({l, br.to, +1});
    adj[br.to].push_back({l, br.from, -1});
  }

  // Spanning forest labels: signed transformer counts along the tree path
  // from each component root.
  std::map<NodeId, Counts> label;
  std::map<NodeId, NodeId> parent;
  std::set<size_t> tree_edges;
  for (const auto& n : model.nodes) {
    if (n.phase_count != 3 || label.count(n.id)) continue;
    label[n.id] = {};
    parent[n.id] = n.id;
    std::deque<NodeId> q{n.id};
    while (!q.empty()) {
      NodeId u = q.front();
      q.pop_front();
      for (const auto& a : adj[u]) {
        if (label.count(a.other)) continue;
        Counts c = label[u];
        add_traversal(c, model.branches[a.branch], a.sign);
        label[a.other] = std::move(c);
        parent[a.other] = u;
        tree_edges.insert(a.branch);
        q.push_back(a.other);
      }
    }
  }

  // Cycle condition: every non-tree edge must close with matching labels.
  for (size_t l : edges3) {
    if (tree_edges.count(l)) continue;
    const auto& br = model.branches[l];
    Counts c = label[br.from];
    add_traversal(c, br, +1);
    Counts want = label[br.to];
    // Drop zero entries before comparing.
    for (auto it = c.begin(); it != c.end();)
      it = it->second == 0 ? c.erase(it) : std::next(it);
    for (auto it = want.begin(); it != want.end();)
      it = it->second == 0 ? want.erase(it) : std::next(it);
    if (c != want) {
      rep.ok = false;
      // Report the closing walk: tree path from -> root -> to plus edge.
      std::vector<NodeId> up;
      for (NodeId u = br.from; parent[u] != u; u = parent[u]) up.push_back(u);
      std::vector<NodeId> down;
      for (NodeId u = br.to; parent[u] != u; u = parent[u]) down.push_back(u);
      rep.cycle = up;
      rep.cycle.push_back(parent.count(br.from) ? [&] {
        NodeId u = br.from;
        while (parent[u] != u) u = parent[u];
        return u;
      }() : br.from);
      for (auto it = down.rbegin(); it != down.rend(); ++it)
        rep.cycle.push_back(*it);
      std::ostringstream os;
      os << "transformer counts differ around the cycle closed by branch "
         << br.from << " -> " << br.to << " (" << to_string(br.kind) << ")";
      rep.detail = os.str();
      return rep;
    }
  }
  rep.ok = true;
  return rep;
}

BridgeReport check_no_1phi_bridge(const NetworkModel& model) {
  BridgeReport rep;
  std::map<NodeId, std::vector<NodeId>> adj;
  for (const auto& br : model.branches) {
    if (br.kind != BranchKind::Single) continue;
    adj[br.from].push_back(br.to);
    adj[br.to].push_back(br.from);
  }
  for (const auto& n : model.nodes) {
    if (n.phase_count != 3 || !adj.count(n.id)) continue;
    // BFS from this 3ph node; do not expand through other 3ph nodes.
    std::map<NodeId, NodeId> parent{{n.id, n.id}};
    std::deque<NodeId> q{n.id};
    while (!q.empty()) {
      NodeId u = q.front();
      q.pop_front();
      if (u != n.id && model.node(u).phase_count == 3) {
        rep.ok = false;
        std::vector<NodeId> path{u};
        while (path.back() != n.id) path.push_back(parent[path.back()]);
        std::reverse(path.begin(), path.end());
        rep.path = std::move(path);
        return rep;
      }
      if (u != n.id && model.node(u).phase_count == 3) continue;
      for (NodeId v : adj[u]) {
        if (parent.count(v)) continue;
        parent[v] = u;
        q.push_back(v);
      }
    }
  }
  rep.ok = true;
  return rep;
}

bool WellPosednessReport::pass() const {
  return structural && simple && connected && converters_consistent &&
         connectivity.ok && consistency.ok && bridge.ok;
}

std::string WellPosednessReport::text() const {
  std::ostringstream os;
  auto line = [&](const char* name, bool ok) {
    os << name << ": " << (ok ? "pass" : "fail") << "\n";
  };
  line("structural", structural);
  line("simple", simple);
  line("connected", connected);
  line("converters", converters_consistent);
  line("interior_exterior_connected", connectivity.ok);
  if (!connectivity.ok) {
    os << "  violators:";
    for (NodeId v : connectivity.violators) os << " " << v;
    os << "\n";
  } else {
    for (const auto& [n, path] : connectivity.witnesses) {
      os << "  witness " << n << ":";
      for (NodeId v : path) os << " " << v;
      os << "\n";
    }
    if (connectivity.used_1phi_exterior)
      os << "  note: a witness terminates at a single-phase exterior node\n";
  }
  line("path_consistency", consistency.ok);
  if (!consistency.ok) os << "  " << consistency.detail << "\n";
  line("no_single_phase_bridge", bridge.ok);
  if (!bridge.ok) {
    os << "  path:";
    for (NodeId v : bridge.path) os << " " << v;
    os << "\n";
  }
  for (const auto& p : problems) os << "  problem: " << p << "\n";
  if (no_converters) os << "warning: no converters attached\n";
  os << "verdict: " << (pass() ? "pass" : "fail") << "\n";
  return os.str();
}

WellPosednessReport validate(const NetworkModel& model,
                             const std::vector<ControllerSpec>& specs) {
  WellPosednessReport rep;

  // Field-level invariants.
  rep.structural = true;
  std::set<NodeId> ids;
  for (const auto& n : model.nodes) {
    if (n.phase_count != 1 && n.phase_count != 3) {
      rep.structural = false;
      rep.problems.push_back("node " + std::to_string(n.id) +
                             ": phase_count must be 1 or 3");
    }
    if (!ids.insert(n.id).second) {
      rep.structural = false;
      rep.problems.push_back("duplicate node id " + std::to_string(n.id));
    }
  }
  for (const auto& br : model.branches) {
    if (!model.has_node(br.from) || !model.has_node(br.to)) {
      rep.structural = false;
      rep.problems.push_back("branch references unknown node");
      continue;
    }
    if (!(br.b > 0.0)) {
      rep.structural = false;
      rep.problems.push_back("branch " + std::to_string(br.from) + "->" +
                             std::to_string(br.to) +
                             ": susceptance must be positive");
    }
    const int pf = model.node(br.from).phase_count;
    const int pt = model.node(br.to).phase_count;
    if (br.kind == BranchKind::Single) {
      const bool ok = pf == 1 && ((pt == 1 && !br.phase) ||
                                  (pt == 3 && br.phase.has_value()));
      if (!ok) {
        rep.structural = false;
        rep.problems.push_back(
            "branch " + std::to_string(br.from) + "->" +
            std::to_string(br.to) +
            ": Single must join 1ph->1ph (no phase) or 1ph->3ph (with phase)");
      }
    } else {
      if (pf != 3 || pt != 3 || br.phase) {
        rep.structural = false;
        rep.problems.push_back("branch " + std::to_string(br.from) + "->" +
                               std::to_string(br.to) + ": " +
                               to_string(br.kind) +
                               " must join two 3ph nodes without a phase");
      }
    }
    if (br.from == br.to) {
      rep.structural = false;
      rep.problems.push_back("self loop at node " + std::to_string(br.from));
    }
  }

  // Simplicity: at most one branch per unordered node pair.
  rep.simple = true;
  std::set<std::pair<NodeId, NodeId>> seen;
  for (const auto& br : model.branches) {
    auto key = std::minmax(br.from, br.to);
    if (!seen.insert({key.first, key.second}).second) {
      rep.simple = false;
      rep.problems.push_back("parallel branches between " +
                             std::to_string(br.from) + " and " +
                             std::to_string(br.to) +
                             " (combine them before modeling)");
    }
  }

  // Connectivity over all branches, undirected.
  rep.connected = true;
  if (!model.nodes.empty()) {
    std::map<NodeId, std::vector<NodeId>> adj;
    for (const auto& br : model.branches)
      if (model.has_node(br.from) && model.has_node(br.to)) {
        adj[br.from].push_back(br.to);
        adj[br.to].push_back(br.from);
      }
    std::set<NodeId> vis{model.nodes.front().id};
    std::deque<NodeId> q{model.nodes.front().id};
    while (!q.empty()) {
      NodeId u = q.front();
      q.pop_front();
      for (NodeId v : adj[u])
        if (vis.insert(v).second) q.push_back(v);
    }
    rep.connected = vis.size() == model.nodes.size();
    if (!rep.connected) rep.problems.push_back("graph is not connected");
  }

  // Exterior <=> converter attached.
  rep.converters_consistent = true;
  std::set<NodeId> with_spec;
  for (const auto& s : specs) {
    if (!with_spec.insert(s.node).second) {
      rep.converters_consistent = false;
      rep.problems.push_back("multiple converters at node " +
                             std::to_string(s.node));
    }
    if (!model.has_node(s.node)) {
      rep.converters_consistent = false;
      rep.problems.push_back("converter at unknown node " +
                             std::to_string(s.node));
      continue;
    }
    const auto& n = model.node(s.node);
    if (n.role != NodeRole::Exterior) {
      rep.converters_consistent = false;
      rep.problems.push_back("converter at interior node " +
                             std::to_string(s.node));
    }
    const bool needs3 = s.law != ControlLaw::SinglePhaseDroop;
    if ((needs3 && n.phase_count != 3) || (!needs3 && n.phase_count != 1)) {
      rep.converters_consistent = false;
      rep.problems.push_back("law/phase-count mismatch at node " +
                             std::to_string(s.node));
    }
    if (!(s.m_d > 0.0) || !(s.tau > 0.0) || s.k_bal < 0.0) {
      rep.converters_consistent = false;
      rep.problems.push_back("invalid gains at node " + std::to_string(s.node));
    }
  }
  int n_ext = 0;
  for (const auto& n : model.nodes) {
    if (n.role == NodeRole::Exterior) {
      ++n_ext;
      if (!with_spec.count(n.id)) {
        rep.converters_consistent = false;
        rep.problems.push_back("exterior node " + std::to_string(n.id) +
                               " has no converter");
      }
    }
  }
  rep.no_converters = n_ext == 0;

  rep.connectivity = is_interior_exterior_connected(model);
  rep.consistency = check_path_consistency(model);
  rep.bridge = check_no_1phi_bridge(model);
  return rep;
}

}  // namespace phasebal
