// sim: command-line front end.
//
//   sim <mode> [--config FILE] [--kappa X] [--phi X] [--theta X] [--M N]
//              [--out DIR] [--seed N] [--checkpoints SPEC] [--set key=value ...]
//   sim plot <run-dir>
//
// Failures print a single JSON error record on stderr and exit nonzero.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nrchain/run.hpp"

namespace {

int fail(const std::string& kind, const std::string& message, const std::string& key = {}) {
  nlohmann::ordered_json rec;
  rec["status"] = "error";
  rec["kind"] = kind;
  if (!key.empty()) rec["key"] = key;
  rec["message"] = message;
  std::cerr << rec.dump() << std::endl;
  return kind == "usage" || kind == "config" ? 2 : 1;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw nrchain::ConfigError("config", "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-reciprocal XX chain: t-GGE solver, free-fermion reference and finite-chain benchmarks"};
  std::string mode_name;
  std::string config_file;
  std::optional<std::string> kappa, phi, theta, M, out, seed, checkpoints;
  std::vector<std::string> settings;
  app.add_option("mode", mode_name, "tgge | free-fermion | trajectories | dense-lindblad | fit | compare | plot")
      ->required();
  app.add_option("--config", config_file, "key = value configuration file");
  app.add_option("--kappa", kappa, "loss rate");
  app.add_option("--phi", phi, "non-reciprocity angle");
  app.add_option("--theta", theta, "initial-state angle");
  app.add_option("--M", M, "rapidity grid size");
  app.add_option("--out", out, "output directory (plot: run directory)");
  app.add_option("--seed", seed, "trajectory seed");
  app.add_option("--checkpoints", checkpoints, "log:t0:t1:count, lin:t0:t1:count or a comma list of kappa*t");
  app.add_option("--set", settings, "extra key=value override (repeatable)");
  app.allow_extras(false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what());
  }

  try {
    if (mode_name == "plot") {
      if (!out) throw nrchain::ConfigError("out", "plot needs --out <run-dir>");
      const auto script = nrchain::emit_plot_script(*out);
      std::cout << nlohmann::ordered_json{{"status", "ok"}, {"script", script.string()}}.dump() << std::endl;
      return 0;
    }
    const nrchain::Mode mode = nrchain::parse_mode(mode_name);
    nrchain::RunConfig cfg = nrchain::parse_config(config_file.empty() ? std::string{} : read_file(config_file), mode, false);
    const std::pair<const char*, std::optional<std::string>*> flags[] = {
        {"kappa", &kappa}, {"phi", &phi}, {"theta", &theta}, {"M", &M},
        {"out", &out},     {"seed", &seed}, {"checkpoints", &checkpoints}};
    for (const auto& [key, value] : flags) {
      if (*value) nrchain::apply_setting(cfg, key, **value);
    }
    for (const auto& s : settings) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw nrchain::ConfigError("set", "expected key=value, got '" + s + "'");
      const auto key = s.substr(0, eq);
      if (key.find_first_of(" \t") != std::string::npos || key.empty()) {
        throw nrchain::ConfigError("set", "malformed key in '" + s + "'");
      }
      if (key == "mode") throw nrchain::ConfigError("mode", "give the mode as the first argument");
      nrchain::apply_setting(cfg, key, s.substr(eq + 1));
    }
    cfg.validate();
    const auto summary = nrchain::run(cfg);
    nlohmann::ordered_json ok;
    ok["status"] = "ok";
    ok["mode"] = std::string(nrchain::to_string(cfg.mode));
    ok["out"] = cfg.out_dir.string();
    ok["files"] = summary.files.size();
    ok["wall_time_s"] = summary.wall_seconds;
    std::cout << ok.dump() << std::endl;
    return 0;
  } catch (const nrchain::ConfigError& e) {
    return fail("config", e.what(), e.key());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
}
