#pragma once

// Flat typed key-value configuration with [section] headers. Unknown keys are
// rejected; every tolerance must be positive. The raw text is embedded in the
// run manifest so any output is recomputable from manifest + seed alone.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "raysplit/common.hpp"
#include "raysplit/flow.hpp"
#include "raysplit/geometry.hpp"
#include "raysplit/profile1d.hpp"
#include "raysplit/spectral1d.hpp"
#include "raysplit/transfer.hpp"

namespace raysplit {

class ExperimentConfig {
 public:
  static ExperimentConfig parse(const std::string& text) {
    ExperimentConfig cfg;
    cfg.raw_ = text;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') fail(lineno, "malformed section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section != "model" && section != "dynamics" && section != "run" &&
            section != "observables")
          fail(lineno, "unknown section [" + section + "]");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail(lineno, "expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (section.empty()) fail(lineno, "key outside any section");
      if (!known_keys(section).count(key))
        fail(lineno, "unknown key '" + key + "' in [" + section + "]");
      cfg.values_[section + "." + key] = value;
    }
    cfg.validate();
    return cfg;
  }

  const std::string& raw_text() const { return raw_; }
  std::uint64_t hash() const { return fnv1a64(raw_); }

  bool has(const std::string& dotted) const { return values_.count(dotted) > 0; }

  std::string str(const std::string& dotted, const std::string& fallback = "") const {
    auto it = values_.find(dotted);
    return it == values_.end() ? fallback : it->second;
  }

  double num(const std::string& dotted, std::optional<double> fallback = {}) const {
    auto it = values_.find(dotted);
    if (it == values_.end()) {
      if (fallback) return *fallback;
      throw ConfigError("missing required key " + dotted);
    }
    return parse_num(it->second, dotted);
  }

  std::vector<double> num_list(const std::string& dotted) const {
    auto it = values_.find(dotted);
    if (it == values_.end()) throw ConfigError("missing required key " + dotted);
    std::vector<double> out;
    std::istringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(parse_num(trim(tok), dotted));
    return out;
  }

  // ------------------------------------------------------------------
  ModelDomain model() const {
    const std::string variant = str("model.variant");
    ModelDomain m = [&]() {
      if (variant == "layered1d") {
        Layered1DSpec spec;
        spec.lengths = num_list("model.lengths");
        spec.stiffness = num_list("model.stiffness");
        const std::string braw = str("model.b", "calibrated");
        if (braw == "calibrated") {
          for (std::size_t i = 0; i + 1 < spec.stiffness.size(); ++i)
            spec.b.push_back(spectral::calibrate_b(spec.stiffness[i], spec.stiffness[i + 1]));
        } else {
          spec.b = num_list("model.b");
        }
        spec.left = end_condition(str("model.left_end", "dirichlet"));
        spec.right = end_condition(str("model.right_end", "dirichlet"));
        return ModelDomain::layered1d(spec);
      }
      if (variant == "glued_disks") {
        const std::string chi = str("model.chi", "sine");
        if (chi == "identity") return ModelDomain::glued_disks(CircleMap::identity());
        if (chi == "sine")
          return ModelDomain::glued_disks(
              CircleMap::sine(num("model.eps", 0.3), num("model.phi0", 0.0)));
        if (chi == "table")
          return ModelDomain::glued_disks(CircleMap::table(num_list("model.chi_table")));
        throw ConfigError("model.chi must be identity, sine or table");
      }
      if (variant == "hemispheres")
        return ModelDomain::hemispheres(num("model.c_plus"), num("model.c_minus"));
      throw ConfigError("model.variant must be layered1d, glued_disks or hemispheres");
    }();
    m.grazing_tol = num("dynamics.grazing_tol", kGrazingTol);
    m.corner_tol = num("dynamics.corner_tol", kCornerTol);
    return m;
  }

  PrunePolicy policy() const {
    PrunePolicy pol;
    pol.eps_amp = num("dynamics.eps_amp", 1e-6);
    pol.max_branches = static_cast<std::size_t>(num("dynamics.max_branches", 65536.0));
    pol.max_events = static_cast<int>(num("dynamics.max_events", 64.0));
    return pol;
  }

  double merge_tol() const { return num("dynamics.merge_tol", kMergeTol); }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(num("run.seed", 1.0)); }
  int samples() const { return static_cast<int>(num("run.samples", 1000.0)); }
  int threads() const { return static_cast<int>(num("run.threads", 1.0)); }
  std::string out_dir() const { return str("run.out", "out"); }

  // Observable factory; the window names mirror the bundled diagnostics.
  Observable observable(const ModelDomain& m) const {
    const std::string name = str("observables.name", "const");
    if (name == "const") return constant_observable(num("observables.value", 1.0));
    if (name == "disk_u") return disk_angular_momentum();
    if (name == "disk_u2") return disk_angular_momentum_squared();
    if (name == "disk_quadrupole") return disk_quadrupole();
    if (name == "disk_side") return disk_side_indicator();
    if (name == "hemi_eta") return hemi_polar_momentum();
    if (name == "hemi_eta2") return hemi_polar_momentum_squared(m);
    if (name == "layer_taper") {
      const int layer = static_cast<int>(num("observables.layer", 1.0)) - 1;
      if (m.variant != ModelVariant::Layered1D || layer < 0 || layer >= m.layer_count())
        throw ConfigError("observables.layer out of range");
      const double ramp = num("observables.ramp", 0.05);
      const Profile1D prof =
          Profile1D::raised_cosine_window(m.cumulative[layer], m.cumulative[layer + 1], ramp);
      return observable_1d(m, prof, 0, "layer_taper");
    }
    if (name == "cos_taper") {
      const double freq = num("observables.freq", 2.0);
      const double ramp = num("observables.ramp", 0.05);
      Profile1D prof;
      for (int i = 0; i < m.layer_count(); ++i) {
        const Profile1D win =
            Profile1D::raised_cosine_window(m.cumulative[i], m.cumulative[i + 1], ramp);
        prof += win.times(Profile1D::cosine_on(m.cumulative[i], m.cumulative[i + 1], 1.0, freq,
                                               0.0));
      }
      return observable_1d(m, prof, 0, "cos_taper");
    }
    throw ConfigError("unknown observable '" + name + "'");
  }

 private:
  std::map<std::string, std::string> values_;
  std::string raw_;

  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  static void fail(int lineno, const std::string& msg) {
    throw ConfigError("config line " + std::to_string(lineno) + ": " + msg);
  }

  static double parse_num(const std::string& s, const std::string& key) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (...) {
      throw ConfigError("key " + key + ": not a number: '" + s + "'");
    }
    if (used != s.size()) throw ConfigError("key " + key + ": trailing junk in '" + s + "'");
    return v;
  }

  static EndCondition end_condition(const std::string& s) {
    if (s == "dirichlet") return EndCondition::Dirichlet;
    if (s == "neumann") return EndCondition::Neumann;
    throw ConfigError("end condition must be dirichlet or neumann");
  }

  static const std::set<std::string>& known_keys(const std::string& section) {
    static const std::set<std::string> model{
        "variant", "lengths", "stiffness", "b", "left_end", "right_end",
        "chi", "eps", "phi0", "chi_table", "c_plus", "c_minus"};
    static const std::set<std::string> dynamics{"eps_amp",     "max_branches", "max_events",
                                                "merge_tol",   "grazing_tol",  "corner_tol"};
    static const std::set<std::string> run{
        "seed",   "samples", "threads", "out",     "t",       "s",      "t_list",
        "n_t",    "n_paths", "lambda_max", "n_max", "j_lo",  "j_hi",   "band",
        "word",   "steps",   "grid",    "tail_tol"};
    static const std::set<std::string> observables{"name", "value", "layer", "ramp", "freq"};
    if (section == "model") return model;
    if (section == "dynamics") return dynamics;
    if (section == "run") return run;
    return observables;
  }

  void validate() const {
    for (const char* key : {"dynamics.eps_amp", "dynamics.merge_tol", "dynamics.grazing_tol",
                            "dynamics.corner_tol"}) {
      auto it = values_.find(key);
      if (it != values_.end() && parse_num(it->second, key) < 0.0)
        throw ConfigError(std::string(key) + " must be non-negative");
    }
    if (!values_.count("model.variant")) throw ConfigError("missing model.variant");
  }
};

}  // namespace raysplit
