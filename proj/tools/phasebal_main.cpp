#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "phasebal/format.hpp"
#include "phasebal/netfile.hpp"
#include "phasebal/network.hpp"
#include "phasebal/stability.hpp"
#include "phasebal/topology.hpp"

using namespace phasebal;

namespace {

// "a,b,c" or "lo:hi:step"
std::vector<double> parse_value_list(const std::string& s) {
  std::vector<double> out;
  if (s.find(':') != std::string::npos) {
    const size_t c1 = s.find(':');
    const size_t c2 = s.find(':', c1 + 1);
    if (c2 == std::string::npos || s.find(':', c2 + 1) != std::string::npos)
      throw SemanticError("range must be lo:hi:step");
    const double lo = std::stod(s.substr(0, c1));
    const double hi = std::stod(s.substr(c1 + 1, c2 - c1 - 1));
    const double step = std::stod(s.substr(c2 + 1));
    if (!(step > 0.0)) throw SemanticError("range step must be positive");
    for (int i = 0;; ++i) {
      const double v = lo + i * step;
      if (v > hi + 1e-12) break;
      out.push_back(v);
    }
    if (out.empty()) throw SemanticError("empty range");
    return out;
  }
  size_t pos = 0;
  while (true) {
    const size_t comma = s.find(',', pos);
    const std::string item = s.substr(pos, comma - pos);
    try {
      size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw SemanticError("expected a number, got '" + item + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw SemanticError("cannot write " + path.string());
  f << text;
}

std::string matrix_lines(const Eigen::MatrixXd& m) {
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += " ";
      out += format_double(m(r, c));
    }
    out += "\n";
  }
  return out;
}

std::string matrices_text(const AssembledSystem& sys,
                          const ReducedNetwork& red) {
  std::string out = "layout\n";
  for (const CoordBlock& b : sys.layout.blocks)
    out += "node " + std::to_string(b.id) + " offset " +
           std::to_string(b.offset) + " width " + std::to_string(b.width) +
           "\n";
  out += "B " + std::to_string(sys.B.rows()) + " " +
         std::to_string(sys.B.cols()) + "\n" + matrix_lines(sys.B);
  out += "W " + std::to_string(sys.W_diag.size()) + "\n" +
         matrix_lines(sys.W_diag.transpose());
  out += "J " + std::to_string(sys.J.rows()) + "\n" + matrix_lines(sys.J);
  out += "J_red " + std::to_string(red.J_red.rows()) + "\n" +
         matrix_lines(red.J_red);
  return out;
}

std::string trajectory_csv(const Trajectory& tr) {
  // phase_labels lists exterior phases first, then interior ones, matching
  // the V_ext / V_int emission order; injections exist only at the exterior
  const size_t n_ext = static_cast<size_t>(tr.V_ext.rows() / 2);
  std::string out = "t";
  for (const std::string& l : tr.omega_labels) out += "," + l;
  for (const std::string& l : tr.phase_labels)
    out += ",theta_" + l + ",v_" + l;
  for (size_t i = 0; i < n_ext; ++i)
    out += ",P_" + tr.phase_labels[i] + ",Q_" + tr.phase_labels[i];
  out += "\n";
  const Eigen::Index ne2 = tr.V_ext.rows(), ni2 = tr.V_int.rows();
  for (Eigen::Index k = 0; k < tr.t.size(); ++k) {
    out += format_double(tr.t(k));
    for (Eigen::Index i = 0; i < tr.omega.rows(); ++i)
      out += "," + format_double(tr.omega(i, k));
    for (Eigen::Index i = 0; i < ne2 / 2; ++i)
      out += "," + format_double(tr.V_ext(i, k)) + "," +
             format_double(tr.V_ext(ne2 / 2 + i, k));
    for (Eigen::Index i = 0; i < ni2 / 2; ++i)
      out += "," + format_double(tr.V_int(i, k)) + "," +
             format_double(tr.V_int(ni2 / 2 + i, k));
    for (Eigen::Index i = 0; i < tr.P.rows(); ++i)
      out += "," + format_double(tr.P(i, k)) + "," +
             format_double(tr.Q(i, k));
    out += "\n";
  }
  return out;
}

std::string unbalance_csv(const UnbalanceReport& rep) {
  std::string out = "t,V_UF,P_UF,Q_UF,V_UF_N,degenerate\n";
  for (size_t k = 0; k < rep.samples.size(); ++k) {
    const UnbalancePoint& p = rep.samples[k];
    out += format_double(rep.t(static_cast<Eigen::Index>(k))) + "," +
           format_double(p.V_UF) + "," + format_double(p.P_UF) + "," +
           format_double(p.Q_UF) + "," + format_double(p.V_UF_N) + "," +
           (p.degenerate ? "1" : "0") + "\n";
  }
  return out;
}

std::string sweep_csv(const SweepResult& res) {
  std::string out = "kbal,load,stable,omega,V_UF,P_UF,Q_UF,V_UF_N,degenerate,error\n";
  for (const SweepRow& r : res.rows) {
    std::string err = r.error;
    for (char& c : err)
      if (c == ',' || c == '\n') c = ';';
    out += format_double(r.k_bal) + "," + format_double(r.load) + "," +
           (r.stable ? "1" : "0") + "," + format_double(r.omega) + "," +
           format_double(r.metrics.V_UF) + "," +
           format_double(r.metrics.P_UF) + "," +
           format_double(r.metrics.Q_UF) + "," +
           format_double(r.metrics.V_UF_N) + "," +
           (r.metrics.degenerate ? "1" : "0") + "," + err + "\n";
  }
  return out;
}

struct Options {
  std::string file;
  std::string out_dir;
  bool lenient = false;
  double tol_rank = std::nan("");
  double tol_zero = std::nan("");
  double t_end = std::nan("");
  double dt = std::nan("");
  std::string kbal_list, load_list;
  std::optional<int> bus;
  std::optional<int> measure_bus;
};

NodeId pick_bus(const Options& opt, const Document& doc, const char* what) {
  if (opt.bus) return *opt.bus;
  if (doc.analysis.measure_bus) return *doc.analysis.measure_bus;
  throw SemanticError(std::string(what) +
                      " needs --bus or an analysis measure_bus entry");
}

int cmd_validate(const Document& doc) {
  const WellPosednessReport report = validate(doc.model, doc.converters);
  std::cout << report.text();
  return report.pass() ? 0 : 1;
}

int cmd_matrix(const Options& opt, const Document& doc) {
  const AssembledSystem sys = assemble(doc.model, doc.converters);
  const ReducedNetwork red = kron_reduce(sys, opt.tol_rank);
  const std::string text = matrices_text(sys, red);
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    write_text(std::filesystem::path(opt.out_dir) / "matrices.txt", text);
    std::cout << "wrote " << (std::filesystem::path(opt.out_dir) / "matrices.txt").string()
              << "\n";
  } else {
    std::cout << text;
  }
  return 0;
}

int cmd_certify(const Options& opt, const Document& doc) {
  const StabilityCertificate cert =
      certify(doc.model, doc.converters, opt.tol_rank, opt.tol_zero);
  std::cout << cert.text();
  return cert.verdict == StabilityCertificate::Verdict::Stable ? 0 : 1;
}

int cmd_simulate(const Options& opt, const Document& doc) {
  const AssembledSystem sys = assemble(doc.model, doc.converters);
  const ReducedNetwork red = kron_reduce(sys, opt.tol_rank);
  const ClosedLoopModel cl = assemble_closed_loop(red, doc.model, doc.converters);
  const StabilityCertificate cert = certify(cl, opt.tol_zero);

  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(cl.n_states());
  const Trajectory tr = simulate(cl, x0, doc.loads, opt.t_end, opt.dt);
  const Eigen::Index last = tr.t.size() - 1;

  std::cout << "verdict " << to_string(cert.verdict) << "\n";
  std::cout << "samples " << tr.t.size() << "\n";
  std::cout << "t_end " << format_double(opt.t_end) << "\n";
  std::cout << "dt " << format_double(opt.dt) << "\n";
  for (Eigen::Index i = 0; i < tr.omega.rows(); ++i)
    std::cout << tr.omega_labels[static_cast<size_t>(i)] << "_final "
              << format_double(tr.omega(i, last)) << "\n";

  std::optional<UnbalanceReport> rep;
  const NodeId bus = opt.bus ? *opt.bus
                             : doc.analysis.measure_bus.value_or(-1);
  if (doc.model.has_node(bus) && doc.model.node(bus).phase_count == 3) {
    rep = unbalance_factors(tr, bus);
    const UnbalancePoint& p = rep->samples.back();
    std::cout << "bus " << bus << "\n";
    std::cout << "V_UF_final " << format_double(p.V_UF) << "\n";
    std::cout << "V_UF_N_final " << format_double(p.V_UF_N) << "\n";
  }

  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    write_text(std::filesystem::path(opt.out_dir) / "trajectory.csv",
               trajectory_csv(tr));
    if (rep)
      write_text(std::filesystem::path(opt.out_dir) / "unbalance.csv",
                 unbalance_csv(*rep));
  }
  return 0;
}

int cmd_unbalance(const Options& opt, const Document& doc) {
  const NodeId bus = pick_bus(opt, doc, "unbalance");
  const AssembledSystem sys = assemble(doc.model, doc.converters);
  const ReducedNetwork red = kron_reduce(sys, opt.tol_rank);
  const ClosedLoopModel cl = assemble_closed_loop(red, doc.model, doc.converters);

  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(cl.n_states());
  const Trajectory tr = simulate(cl, x0, doc.loads, opt.t_end, opt.dt);
  const UnbalanceReport rep = unbalance_factors(tr, bus);
  const CorrelationStudy study = correlation_study(rep.samples);
  const UnbalancePoint& p = rep.samples.back();

  std::cout << "bus " << bus << "\n";
  std::cout << "samples " << rep.samples.size() << "\n";
  std::cout << "V_UF_final " << format_double(p.V_UF) << "\n";
  std::cout << "P_UF_final " << format_double(p.P_UF) << "\n";
  std::cout << "Q_UF_final " << format_double(p.Q_UF) << "\n";
  std::cout << "V_UF_N_final " << format_double(p.V_UF_N) << "\n";
  if (study.defined)
    std::cout << "correlation_r " << format_double(study.r) << "\n";
  else
    std::cout << "correlation " << study.note << "\n";

  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    write_text(std::filesystem::path(opt.out_dir) / "unbalance.csv",
               unbalance_csv(rep));
  }
  return 0;
}

int cmd_sweep(const Options& opt, const Document& doc) {
  SweepSpec sw;
  sw.k_bal_values = opt.kbal_list.empty() ? doc.analysis.k_bal_sweep
                                          : parse_value_list(opt.kbal_list);
  sw.load_values = opt.load_list.empty() ? doc.analysis.load_sweep
                                         : parse_value_list(opt.load_list);
  sw.sweep_buses = doc.analysis.sweep_buses;
  if (opt.measure_bus)
    sw.measure_bus = *opt.measure_bus;
  else if (doc.analysis.measure_bus)
    sw.measure_bus = *doc.analysis.measure_bus;
  else
    throw SemanticError("sweep needs --measure-bus or an analysis measure_bus entry");

  const SweepResult res =
      run_sweep(doc.model, doc.converters, sw, opt.tol_rank, opt.tol_zero);

  bool all_ok = true;
  for (const SweepRow& r : res.rows) {
    std::cout << "kbal=" << format_double(r.k_bal)
              << " load=" << format_double(r.load)
              << " stable=" << (r.stable ? "1" : "0");
    if (!r.error.empty()) {
      std::cout << " error=" << r.error << "\n";
      all_ok = false;
      continue;
    }
    std::cout << " omega=" << format_double(r.omega)
              << " V_UF=" << format_double(r.metrics.V_UF)
              << " V_UF_N=" << format_double(r.metrics.V_UF_N)
              << " P_UF=" << format_double(r.metrics.P_UF) << "\n";
    if (!r.stable) all_ok = false;
  }
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    write_text(std::filesystem::path(opt.out_dir) / "sweep.csv",
               sweep_csv(res));
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quasi-steady-state analysis of unbalanced droop-controlled networks"};
  app.require_subcommand(1);
  Options opt;

  auto add_file = [&](CLI::App* c) {
    c->add_option("file", opt.file, "network file")->required();
    c->add_flag("--lenient", opt.lenient,
                "warn on unknown sections and keys instead of failing");
  };
  auto add_tols = [&](CLI::App* c) {
    c->add_option("--tol-rank", opt.tol_rank,
                  "relative rank tolerance of the interior solve");
    c->add_option("--tol-zero-eig", opt.tol_zero,
                  "relative threshold for zero eigenvalues");
  };

  CLI::App* c_validate = app.add_subcommand("validate", "check well-posedness");
  add_file(c_validate);

  CLI::App* c_matrix = app.add_subcommand("matrix", "dump assembled matrices");
  add_file(c_matrix);
  add_tols(c_matrix);
  c_matrix->add_option("--out", opt.out_dir, "directory for matrices.txt");

  CLI::App* c_certify = app.add_subcommand("certify", "stability certificate");
  add_file(c_certify);
  add_tols(c_certify);

  CLI::App* c_simulate = app.add_subcommand("simulate", "run the load steps");
  add_file(c_simulate);
  add_tols(c_simulate);
  c_simulate->add_option("--t-end", opt.t_end, "horizon (s)");
  c_simulate->add_option("--dt", opt.dt, "sample spacing (s)");
  c_simulate->add_option("--bus", opt.bus, "bus for unbalance metrics");
  c_simulate->add_option("--out", opt.out_dir, "directory for CSV output");

  CLI::App* c_unbalance =
      app.add_subcommand("unbalance", "unbalance metrics along a trajectory");
  add_file(c_unbalance);
  add_tols(c_unbalance);
  c_unbalance->add_option("--t-end", opt.t_end, "horizon (s)");
  c_unbalance->add_option("--dt", opt.dt, "sample spacing (s)");
  c_unbalance->add_option("--bus", opt.bus, "bus for unbalance metrics");
  c_unbalance->add_option("--out", opt.out_dir, "directory for CSV output");

  CLI::App* c_sweep =
      app.add_subcommand("sweep", "steady-state metrics over a gain/load grid");
  add_file(c_sweep);
  add_tols(c_sweep);
  c_sweep->add_option("--kbal", opt.kbal_list, "balancing gains (list or lo:hi:step)");
  c_sweep->add_option("--load", opt.load_list, "load levels (list or lo:hi:step)");
  c_sweep->add_option("--measure-bus", opt.measure_bus, "bus for metrics");
  c_sweep->add_option("--out", opt.out_dir, "directory for sweep.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    std::vector<std::string> warnings;
    const Document doc = parse_file(opt.file, !opt.lenient, &warnings);
    for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";

    if (std::isnan(opt.tol_rank)) opt.tol_rank = doc.analysis.tol_rank;
    if (std::isnan(opt.tol_zero)) opt.tol_zero = doc.analysis.tol_zero;
    if (std::isnan(opt.t_end)) opt.t_end = doc.analysis.t_end;
    if (std::isnan(opt.dt)) opt.dt = doc.analysis.dt;

    if (app.got_subcommand(c_validate)) return cmd_validate(doc);
    if (app.got_subcommand(c_matrix)) return cmd_matrix(opt, doc);
    if (app.got_subcommand(c_certify)) return cmd_certify(opt, doc);
    if (app.got_subcommand(c_simulate)) return cmd_simulate(opt, doc);
    if (app.got_subcommand(c_unbalance)) return cmd_unbalance(opt, doc);
    if (app.got_subcommand(c_sweep)) return cmd_sweep(opt, doc);
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error at line " << e.line << ", col " << e.col << ": "
              << e.what() << "\n";
    return 2;
  } catch (const ValidationFailed& e) {
    std::cerr << "validation failed: " << e.what() << "\n";
    return 1;
  } catch (const RankDeficientInterior& e) {
    std::cerr << "rank-deficient interior: " << e.what() << "\n";
    return 1;
  } catch (const NonConformingGains& e) {
    std::cerr << "non-conforming gains: " << e.what() << "\n";
    return 2;
  } catch (const DimensionMismatch& e) {
    std::cerr << "dimension mismatch: " << e.what() << "\n";
    return 2;
  } catch (const SemanticError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
