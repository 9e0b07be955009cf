#pragma once

// CSV emission (LF endings, '.' decimal separator, 17 significant digits) and
// the JSON run manifest. Outputs are deterministic functions of config + seed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "raysplit/common.hpp"

namespace raysplit {

using CsvCell = std::variant<double, long long, std::string>;

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : out_(path, std::ios::binary) {
    if (!out_) throw ConfigError("cannot open " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out_ << ',';
      out_ << header[i];
    }
    out_ << '\n';
  }

  void row(const std::vector<CsvCell>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      if (std::holds_alternative<double>(cells[i])) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", std::get<double>(cells[i]));
        out_ << buf;
      } else if (std::holds_alternative<long long>(cells[i])) {
        out_ << std::get<long long>(cells[i]);
      } else {
        out_ << std::get<std::string>(cells[i]);
      }
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

// One manifest per run: everything needed to recompute the CSV bytes.
inline void write_manifest(const std::filesystem::path& path, const std::string& subcommand,
                           const std::string& config_text, std::uint64_t seed,
                           const nlohmann::json& extra) {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["seed"] = seed;
  j["config_fnv1a64"] = fnv1a64(config_text);
  j["config_text"] = config_text;
  j["tolerances"] = {{"on_shell", kOnShellTol}, {"merge_tol_default", kMergeTol}};
  j["results"] = extra;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace raysplit
