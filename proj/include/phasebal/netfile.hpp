#pragma once

#include <optional>
#include <string>
#include <vector>

#include "phasebal/simulator.hpp"

namespace phasebal {

struct AnalysisParams {
  double t_end = 2.0;
  double dt = 1e-3;
  std::vector<double> k_bal_sweep;
  std::vector<double> load_sweep;
  std::vector<NodeId> sweep_buses;
  std::optional<NodeId> measure_bus;
  double tol_rank = 1e-8;
  double tol_zero = 1e-9;
};

struct Document {
  NetworkModel model;
  std::vector<ControllerSpec> converters;
  std::vector<LoadStep> loads;
  AnalysisParams analysis;
};

// Text format with sections [nodes], [branches], [converters], [loads],
// [analysis]. '#' starts a comment anywhere. Strict mode rejects unknown
// sections and keys; lenient mode records a warning and skips them.
Document parse(const std::string& text, bool strict = true,
               std::vector<std::string>* warnings = nullptr);
Document parse_file(const std::string& path, bool strict = true,
                    std::vector<std::string>* warnings = nullptr);

// Canonical form. parse(serialize(doc)) reproduces doc, and serializing a
// file that is already canonical reproduces it byte for byte.
std::string serialize(const Document& doc);

}  // namespace phasebal
