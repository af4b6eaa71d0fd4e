#include "phasebal/netfile.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "phasebal/controllers.hpp"
#include "phasebal/format.hpp"

namespace phasebal {

namespace {

struct Token {
  std::string text;
  int col = 0;  // 1-based
};

std::vector<Token> tokenize(const std::string& line) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < line.size()) {
    if (line[i] == ' ' || line[i] == '\t') {
      ++i;
      continue;
    }
    size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    out.push_back({line.substr(start, i - start), static_cast<int>(start) + 1});
  }
  return out;
}

double parse_double(const Token& tok, int line, int col_shift = 0) {
  const char* begin = tok.text.data() + col_shift;
  const char* end = tok.text.data() + tok.text.size();
  double value = 0.0;
  auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc{} || res.ptr != end)
    throw ParseError("expected a number, got '" + tok.text.substr(col_shift) +
                         "'",
                     line, tok.col + col_shift);
  return value;
}

int parse_int(const Token& tok, int line, int col_shift = 0) {
  const char* begin = tok.text.data() + col_shift;
  const char* end = tok.text.data() + tok.text.size();
  int value = 0;
  auto res = std::from_chars(begin, end, value);
  if (res.ec != std::errc{} || res.ptr != end)
    throw ParseError("expected an integer, got '" +
                         tok.text.substr(col_shift) + "'",
                     line, tok.col + col_shift);
  return value;
}

std::vector<double> parse_list(const Token& tok, int line, int col_shift) {
  std::vector<double> out;
  const std::string body = tok.text.substr(col_shift);
  size_t pos = 0;
  while (true) {
    const size_t comma = body.find(',', pos);
    const std::string item = body.substr(pos, comma - pos);
    if (item.empty())
      throw ParseError("empty entry in list", line,
                       tok.col + col_shift + static_cast<int>(pos));
    double value = 0.0;
    auto res = std::from_chars(item.data(), item.data() + item.size(), value);
    if (res.ec != std::errc{} || res.ptr != item.data() + item.size())
      throw ParseError("expected a number, got '" + item + "'", line,
                       tok.col + col_shift + static_cast<int>(pos));
    out.push_back(value);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// Splits "key=value"; returns false when the token has no '='.
bool split_kv(const Token& tok, std::string& key, std::string& val,
              int& val_shift) {
  const size_t eq = tok.text.find('=');
  if (eq == std::string::npos) return false;
  key = tok.text.substr(0, eq);
  val = tok.text.substr(eq + 1);
  val_shift = static_cast<int>(eq) + 1;
  return true;
}

enum class Section { None, Nodes, Branches, Converters, Loads, Analysis, Skip };

}  // namespace

Document parse(const std::string& text, bool strict,
               std::vector<std::string>* warnings) {
  Document doc;
  Section section = Section::None;
  std::set<std::string> analysis_seen;

  auto warn = [&](int line, const std::string& msg) {
    if (warnings)
      warnings->push_back("line " + std::to_string(line) + ": " + msg);
  };

  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::vector<Token> toks = tokenize(raw);
    if (toks.empty()) continue;

    if (toks[0].text.front() == '[') {
      if (toks.size() != 1)
        throw ParseError("unexpected token after section header", lineno,
                         toks[1].col);
      const std::string& h = toks[0].text;
      if (h == "[nodes]")
        section = Section::Nodes;
      else if (h == "[branches]")
        section = Section::Branches;
      else if (h == "[converters]")
        section = Section::Converters;
      else if (h == "[loads]")
        section = Section::Loads;
      else if (h == "[analysis]")
        section = Section::Analysis;
      else if (strict)
        throw ParseError("unknown section " + h, lineno, toks[0].col);
      else {
        warn(lineno, "unknown section " + h + " ignored");
        section = Section::Skip;
      }
      continue;
    }

    switch (section) {
      case Section::None:
        throw ParseError("content before any section header", lineno,
                         toks[0].col);
      case Section::Skip:
        break;

      case Section::Nodes: {
        if (toks.size() != 3)
          throw ParseError("node line needs: id phases role", lineno,
                           toks[0].col);
        NodeSpec n;
        n.id = parse_int(toks[0], lineno);
        const int phases = parse_int(toks[1], lineno);
        if (phases != 1 && phases != 3)
          throw ParseError("phase count must be 1 or 3", lineno, toks[1].col);
        n.phase_count = phases;
        if (toks[2].text == "exterior")
          n.role = NodeRole::Exterior;
        else if (toks[2].text == "interior")
          n.role = NodeRole::Interior;
        else
          throw ParseError("role must be exterior or interior", lineno,
                           toks[2].col);
        if (doc.model.has_node(n.id))
          throw ParseError("duplicate node id " + std::to_string(n.id), lineno,
                           toks[0].col);
        doc.model.nodes.push_back(n);
        break;
      }

      case Section::Branches: {
        if (toks.size() < 4)
          throw ParseError("branch line needs: from to kind b", lineno,
                           toks[0].col);
        BranchSpec b;
        b.from = parse_int(toks[0], lineno);
        b.to = parse_int(toks[1], lineno);
        const auto kind = branch_kind_from(toks[2].text);
        if (!kind)
          throw ParseError("unknown branch kind '" + toks[2].text + "'",
                           lineno, toks[2].col);
        b.kind = *kind;
        b.b = parse_double(toks[3], lineno);
        if (!std::isfinite(b.b) || b.b <= 0.0)
          throw ParseError("susceptance must be positive", lineno,
                           toks[3].col);
        for (size_t i = 4; i < toks.size(); ++i) {
          std::string key, val;
          int shift = 0;
          if (!split_kv(toks[i], key, val, shift))
            throw ParseError("expected key=value, got '" + toks[i].text + "'",
                             lineno, toks[i].col);
          if (key == "phase") {
            if (b.phase)
              throw ParseError("duplicate phase=", lineno, toks[i].col);
            if (b.kind != BranchKind::Single)
              throw ParseError("phase= only applies to Single branches",
                               lineno, toks[i].col);
            const auto ph = phase_from(val);
            if (!ph)
              throw ParseError("phase must be a, b or c", lineno,
                               toks[i].col + shift);
            b.phase = *ph;
          } else if (key == "ratio") {
            if (!b.ratio_tag.empty())
              throw ParseError("duplicate ratio=", lineno, toks[i].col);
            if (val.empty())
              throw ParseError("ratio tag must be nonempty", lineno,
                               toks[i].col + shift);
            b.ratio_tag = val;
          } else if (strict) {
            throw ParseError("unknown branch key '" + key + "'", lineno,
                             toks[i].col);
          } else {
            warn(lineno, "unknown branch key '" + key + "' ignored");
          }
        }
        doc.model.branches.push_back(b);
        break;
      }

      case Section::Converters: {
        if (toks.size() < 2)
          throw ParseError("converter line needs: node law ...", lineno,
                           toks[0].col);
        ControllerSpec c;
        c.node = parse_int(toks[0], lineno);
        const auto law = control_law_from(toks[1].text);
        if (!law)
          throw ParseError("unknown control law '" + toks[1].text + "'",
                           lineno, toks[1].col);
        c.law = *law;
        std::optional<double> md, tau, kbal, mp, mq;
        for (size_t i = 2; i < toks.size(); ++i) {
          std::string key, val;
          int shift = 0;
          if (!split_kv(toks[i], key, val, shift))
            throw ParseError("expected key=value, got '" + toks[i].text + "'",
                             lineno, toks[i].col);
          std::optional<double>* slot = nullptr;
          if (key == "md")
            slot = &md;
          else if (key == "tau")
            slot = &tau;
          else if (key == "kbal")
            slot = &kbal;
          else if (key == "mp")
            slot = &mp;
          else if (key == "mq")
            slot = &mq;
          if (!slot) {
            if (strict)
              throw ParseError("unknown converter key '" + key + "'", lineno,
                               toks[i].col);
            warn(lineno, "unknown converter key '" + key + "' ignored");
            continue;
          }
          if (*slot)
            throw ParseError("duplicate " + key + "=", lineno, toks[i].col);
          *slot = parse_double(toks[i], lineno, shift);
        }
        if (md && (mp || mq))
          throw ParseError("md= and mp=/mq= are mutually exclusive", lineno,
                           toks[0].col);
        if (static_cast<bool>(mp) != static_cast<bool>(mq))
          throw ParseError("mp= and mq= must be given together", lineno,
                           toks[0].col);
        if (kbal && c.law != ControlLaw::GeneralizedDroop)
          throw ParseError("kbal= only applies to GeneralizedDroop", lineno,
                           toks[0].col);
        if (tau) {
          if (!(*tau > 0.0) || !std::isfinite(*tau))
            throw ParseError("tau must be positive", lineno, toks[0].col);
          c.tau = *tau;
        }
        if (md) {
          if (!(*md > 0.0) || !std::isfinite(*md))
            throw ParseError("md must be positive", lineno, toks[0].col);
          c.m_d = *md;
        } else if (mp) {
          c.m_d = require_conforming_gains(*mp, *mq, c.tau);
        }
        if (kbal) {
          if (*kbal < 0.0 || !std::isfinite(*kbal))
            throw ParseError("kbal must be nonnegative", lineno, toks[0].col);
          c.k_bal = *kbal;
        }
        doc.converters.push_back(c);
        break;
      }

      case Section::Loads: {
        if (toks.size() < 2)
          throw ParseError("load line needs: node dP=... [t=] [dQ=]", lineno,
                           toks[0].col);
        LoadStep l;
        l.node = parse_int(toks[0], lineno);
        std::optional<std::vector<double>> dP, dQ;
        std::optional<double> t;
        for (size_t i = 1; i < toks.size(); ++i) {
          std::string key, val;
          int shift = 0;
          if (!split_kv(toks[i], key, val, shift))
            throw ParseError("expected key=value, got '" + toks[i].text + "'",
                             lineno, toks[i].col);
          if (key == "t") {
            if (t) throw ParseError("duplicate t=", lineno, toks[i].col);
            t = parse_double(toks[i], lineno, shift);
          } else if (key == "dP") {
            if (dP) throw ParseError("duplicate dP=", lineno, toks[i].col);
            dP = parse_list(toks[i], lineno, shift);
          } else if (key == "dQ") {
            if (dQ) throw ParseError("duplicate dQ=", lineno, toks[i].col);
            dQ = parse_list(toks[i], lineno, shift);
          } else if (strict) {
            throw ParseError("unknown load key '" + key + "'", lineno,
                             toks[i].col);
          } else {
            warn(lineno, "unknown load key '" + key + "' ignored");
          }
        }
        if (!dP)
          throw ParseError("load line needs dP=", lineno, toks[0].col);
        if (dQ && dQ->size() != dP->size())
          throw ParseError("dP and dQ must have the same length", lineno,
                           toks[0].col);
        for (double v : *dP)
          if (!std::isfinite(v))
            throw ParseError("load entries must be finite", lineno,
                             toks[0].col);
        if (dQ)
          for (double v : *dQ)
            if (!std::isfinite(v))
              throw ParseError("load entries must be finite", lineno,
                               toks[0].col);
        if (t) {
          if (!std::isfinite(*t) || *t < 0.0)
            throw ParseError("t must be nonnegative", lineno, toks[0].col);
          l.t_start = *t;
        }
        const Eigen::Index n = static_cast<Eigen::Index>(dP->size());
        l.dP = Eigen::Map<const Eigen::VectorXd>(dP->data(), n);
        l.dQ = dQ ? Eigen::Map<const Eigen::VectorXd>(dQ->data(), n).eval()
                  : Eigen::VectorXd::Zero(n).eval();
        doc.loads.push_back(l);
        break;
      }

      case Section::Analysis: {
        if (toks.size() != 2)
          throw ParseError("analysis line needs: key value", lineno,
                           toks[0].col);
        const std::string& key = toks[0].text;
        static const std::set<std::string> known = {
            "t_end",     "dt",          "kbal_sweep", "load_sweep",
            "sweep_bus", "measure_bus", "tol_rank",   "tol_zero"};
        if (!known.count(key)) {
          if (strict)
            throw ParseError("unknown analysis key '" + key + "'", lineno,
                             toks[0].col);
          warn(lineno, "unknown analysis key '" + key + "' ignored");
          break;
        }
        if (!analysis_seen.insert(key).second)
          throw ParseError("duplicate analysis key '" + key + "'", lineno,
                           toks[0].col);
        AnalysisParams& a = doc.analysis;
        if (key == "t_end") {
          a.t_end = parse_double(toks[1], lineno);
          if (!std::isfinite(a.t_end) || a.t_end < 0.0)
            throw ParseError("t_end must be nonnegative", lineno, toks[1].col);
        } else if (key == "dt") {
          a.dt = parse_double(toks[1], lineno);
          if (!std::isfinite(a.dt) || a.dt <= 0.0)
            throw ParseError("dt must be positive", lineno, toks[1].col);
        } else if (key == "kbal_sweep") {
          a.k_bal_sweep = parse_list(toks[1], lineno, 0);
          for (double v : a.k_bal_sweep)
            if (!std::isfinite(v) || v < 0.0)
              throw ParseError("kbal_sweep entries must be nonnegative",
                               lineno, toks[1].col);
        } else if (key == "load_sweep") {
          a.load_sweep = parse_list(toks[1], lineno, 0);
          for (double v : a.load_sweep)
            if (!std::isfinite(v))
              throw ParseError("load_sweep entries must be finite", lineno,
                               toks[1].col);
        } else if (key == "sweep_bus") {
          for (double v : parse_list(toks[1], lineno, 0)) {
            const int id = static_cast<int>(v);
            if (static_cast<double>(id) != v)
              throw ParseError("sweep_bus entries must be integers", lineno,
                               toks[1].col);
            a.sweep_buses.push_back(id);
          }
        } else if (key == "measure_bus") {
          a.measure_bus = parse_int(toks[1], lineno);
        } else if (key == "tol_rank") {
          a.tol_rank = parse_double(toks[1], lineno);
          if (!std::isfinite(a.tol_rank) || a.tol_rank <= 0.0)
            throw ParseError("tol_rank must be positive", lineno, toks[1].col);
        } else if (key == "tol_zero") {
          a.tol_zero = parse_double(toks[1], lineno);
          if (!std::isfinite(a.tol_zero) || a.tol_zero <= 0.0)
            throw ParseError("tol_zero must be positive", lineno, toks[1].col);
        }
        break;
      }
    }
  }

  if (doc.model.nodes.empty()) throw SemanticError("no nodes");
  for (const BranchSpec& b : doc.model.branches) {
    if (!doc.model.has_node(b.from))
      throw SemanticError("branch references unknown node " +
                          std::to_string(b.from));
    if (!doc.model.has_node(b.to))
      throw SemanticError("branch references unknown node " +
                          std::to_string(b.to));
    if (b.kind == BranchKind::Single) {
      const bool three = doc.model.node(b.to).phase_count == 3;
      if (three && !b.phase)
        throw SemanticError("Single branch onto three-phase node " +
                            std::to_string(b.to) + " needs phase=");
      if (!three && b.phase)
        throw SemanticError(
            "phase= given for a single-phase secondary on node " +
            std::to_string(b.to));
    }
  }
  for (const ControllerSpec& c : doc.converters)
    if (!doc.model.has_node(c.node))
      throw SemanticError("converter on unknown node " +
                          std::to_string(c.node));
  for (const LoadStep& l : doc.loads) {
    if (!doc.model.has_node(l.node))
      throw SemanticError("load on unknown node " + std::to_string(l.node));
    const int n = doc.model.node(l.node).phase_count;
    if (l.dP.size() != n)
      throw SemanticError("load on node " + std::to_string(l.node) +
                          " needs " + std::to_string(n) + " dP entries");
  }
  for (NodeId bus : doc.analysis.sweep_buses)
    if (!doc.model.has_node(bus))
      throw SemanticError("sweep_bus references unknown node " +
                          std::to_string(bus));
  if (doc.analysis.measure_bus &&
      !doc.model.has_node(*doc.analysis.measure_bus))
    throw SemanticError("measure_bus references unknown node " +
                        std::to_string(*doc.analysis.measure_bus));
  return doc;
}

Document parse_file(const std::string& path, bool strict,
                    std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SemanticError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), strict, warnings);
}

namespace {

std::string join(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_double(v(i));
  }
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_double(v[i]);
  }
  return out;
}

std::string join_ids(const std::vector<NodeId>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

std::string serialize(const Document& doc) {
  std::string out;
  out += "[nodes]\n";
  for (const NodeSpec& n : doc.model.nodes)
    out += std::to_string(n.id) + " " + std::to_string(n.phase_count) + " " +
           to_string(n.role) + "\n";

  out += "\n[branches]\n";
  for (const BranchSpec& b : doc.model.branches) {
    out += std::to_string(b.from) + " " + std::to_string(b.to) + " " +
           to_string(b.kind) + " " + format_double(b.b);
    if (b.phase) out += std::string(" phase=") + to_string(*b.phase);
    if (!b.ratio_tag.empty()) out += " ratio=" + b.ratio_tag;
    out += "\n";
  }

  out += "\n[converters]\n";
  for (const ControllerSpec& c : doc.converters) {
    out += std::to_string(c.node) + " " + to_string(c.law) +
           " md=" + format_double(c.m_d) + " tau=" + format_double(c.tau);
    if (c.law == ControlLaw::GeneralizedDroop)
      out += " kbal=" + format_double(c.k_bal);
    out += "\n";
  }

  out += "\n[loads]\n";
  for (const LoadStep& l : doc.loads)
    out += std::to_string(l.node) + " t=" + format_double(l.t_start) +
           " dP=" + join(l.dP) + " dQ=" + join(l.dQ) + "\n";

  out += "\n[analysis]\n";
  const AnalysisParams& a = doc.analysis;
  out += "t_end " + format_double(a.t_end) + "\n";
  out += "dt " + format_double(a.dt) + "\n";
  if (!a.k_bal_sweep.empty()) out += "kbal_sweep " + join(a.k_bal_sweep) + "\n";
  if (!a.load_sweep.empty()) out += "load_sweep " + join(a.load_sweep) + "\n";
  if (!a.sweep_buses.empty())
    out += "sweep_bus " + join_ids(a.sweep_buses) + "\n";
  if (a.measure_bus)
    out += "measure_bus " + std::to_string(*a.measure_bus) + "\n";
  if (a.tol_rank != 1e-8) out += "tol_rank " + format_double(a.tol_rank) + "\n";
  if (a.tol_zero != 1e-9) out += "tol_zero " + format_double(a.tol_zero) + "\n";
  return out;
}

}  // namespace phasebal
