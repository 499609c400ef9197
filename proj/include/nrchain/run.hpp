#pragma once

// Run orchestration: line-oriented configuration, solver dispatch and the
// on-disk artifacts (CSV / json-lines tables, fit records, manifest, plot script).

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nrchain/chain.hpp"
#include "nrchain/tgge.hpp"

namespace nrchain {

enum class Mode { TGGE, FreeFermion, Trajectories, DenseLindblad, Fit, Compare };
enum class OutputFormat { Csv, JsonLines };

std::string_view to_string(Mode m);
std::string_view to_string(OutputFormat f);
Mode parse_mode(std::string_view s);

/// Error in a configuration value; `key` names the offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::invalid_argument(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  Mode mode = Mode::TGGE;
  ModelParams params;
  std::size_t M = 4096;
  IntegratorConfig integrator;  // checkpoints filled from checkpoints_kt at run time
  SpinChainConfig chain;        // idem
  std::vector<double> checkpoints_kt;
  std::string checkpoints_spec;  // as written, kept for the manifest
  std::vector<double> snapshots_kt;
  std::filesystem::path out_dir = "out";
  std::filesystem::path input_dir;  // fit mode
  OutputFormat format = OutputFormat::Csv;
  double fit_lo = 50.0;
  double fit_hi = 1e4;

  /// Mode-dependent range checks; throws ConfigError.
  void validate() const;
  /// Canonical `key = value` text that parses back to this configuration.
  std::string to_text() const;
};

/// Checkpoint syntax: `log:t0:t1:count`, `lin:t0:t1:count`, a comma list, or empty.
std::vector<double> parse_checkpoints(std::string_view spec);

/// Parses `key = value` lines with `#` comments. Keys absent from the text keep
/// their defaults; unknown keys, duplicates and malformed values throw ConfigError.
/// A given `mode` must agree with any mode line in the text. Pass check = false
/// when overrides follow; the caller then runs validate() itself.
RunConfig parse_config(std::string_view text, std::optional<Mode> mode = std::nullopt, bool check = true);

/// Applies one `key = value` override on top of an existing configuration.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double x);

struct RunSummary {
  std::vector<std::filesystem::path> files;  // data files written, relative to out_dir
  double wall_seconds = 0.0;
};

/// Executes the configured run and writes every artifact into cfg.out_dir.
RunSummary run(const RunConfig& cfg);

/// Writes `plot.gp` into `dir` referencing the data files found there. Throws
/// std::runtime_error listing the files that a plot needs but are absent.
std::filesystem::path emit_plot_script(const std::filesystem::path& dir);

}  // namespace nrchain
