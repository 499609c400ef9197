#include <charconv>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "nrchain/run.hpp"

namespace nrchain {

namespace {

constexpr std::pair<Mode, std::string_view> kModes[] = {
    {Mode::TGGE, "tgge"},
    {Mode::FreeFermion, "free-fermion"},
    {Mode::Trajectories, "trajectories"},
    {Mode::DenseLindblad, "dense-lindblad"},
    {Mode::Fit, "fit"},
    {Mode::Compare, "compare"},
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(std::string_view key, std::string_view v) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(std::string(key), "expected a number, got '" + std::string(v) + "'");
  }
  if (!std::isfinite(x)) throw ConfigError(std::string(key), "must be finite");
  return x;
}

template <class Int>
Int parse_int(std::string_view key, std::string_view v) {
  Int x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(std::string(key), "expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return x;
}

bool is_chain_mode(Mode m) { return m == Mode::Trajectories || m == Mode::DenseLindblad || m == Mode::Compare; }

}  // namespace

std::string_view to_string(Mode m) {
  for (const auto& [mode, name] : kModes) {
    if (mode == m) return name;
  }
  return "unknown";
}

std::string_view to_string(OutputFormat f) { return f == OutputFormat::Csv ? "csv" : "json-lines"; }

Mode parse_mode(std::string_view s) {
  for (const auto& [mode, name] : kModes) {
    if (name == s) return mode;
  }
  throw ConfigError("mode", "unknown mode '" + std::string(s) +
                                "' (expected tgge, free-fermion, trajectories, dense-lindblad, fit or compare)");
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

std::vector<double> parse_checkpoints(std::string_view spec) {
  spec = trim(spec);
  std::vector<double> out;
  if (spec.empty()) return out;
  if (spec.starts_with("log:") || spec.starts_with("lin:")) {
    const bool log = spec.starts_with("log:");
    std::vector<std::string_view> parts;
    std::string_view rest = spec.substr(4);
    for (std::size_t pos; (pos = rest.find(':')) != std::string_view::npos; rest = rest.substr(pos + 1)) {
      parts.push_back(trim(rest.substr(0, pos)));
    }
    parts.push_back(trim(rest));
    if (parts.size() != 3) throw ConfigError("checkpoints", "expected log:t0:t1:count or lin:t0:t1:count");
    const double t0 = parse_double("checkpoints", parts[0]);
    const double t1 = parse_double("checkpoints", parts[1]);
    const auto count = parse_int<std::size_t>("checkpoints", parts[2]);
    if (count < 1) throw ConfigError("checkpoints", "count must be >= 1");
    if (!(t1 >= t0) || (count > 1 && !(t1 > t0))) throw ConfigError("checkpoints", "need t1 > t0");
    if (log && !(t0 > 0.0)) throw ConfigError("checkpoints", "log spacing needs t0 > 0");
    const double l0 = log ? std::log10(t0) : 0.0, l1 = log ? std::log10(t1) : 0.0;
    if (!log && t0 < 0.0) throw ConfigError("checkpoints", "times must be >= 0");
    for (std::size_t i = 0; i < count; ++i) {
      const double f = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
      out.push_back(log ? std::pow(10.0, l0 + (l1 - l0) * f) : t0 + (t1 - t0) * f);
    }
    out.back() = t1;
  } else {
    std::string_view rest = spec;
    for (;;) {
      const auto pos = rest.find(',');
      out.push_back(parse_double("checkpoints", trim(rest.substr(0, pos))));
      if (pos == std::string_view::npos) break;
      rest = rest.substr(pos + 1);
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 0.0) throw ConfigError("checkpoints", "times must be >= 0");
    if (i > 0 && !(out[i] > out[i - 1])) throw ConfigError("checkpoints", "times must be strictly increasing");
  }
  return out;
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const std::string k(key);
  value = trim(value);
  if (k == "mode") cfg.mode = parse_mode(value);
  else if (k == "J") cfg.params.J = parse_double(k, value);
  else if (k == "kappa") cfg.params.kappa = parse_double(k, value);
  else if (k == "phi") cfg.params.phi = parse_double(k, value);
  else if (k == "theta") cfg.params.theta = parse_double(k, value);
  else if (k == "M") cfg.M = parse_int<std::size_t>(k, value);
  else if (k == "rel_tol") cfg.integrator.rel_tol = parse_double(k, value);
  else if (k == "abs_tol") cfg.integrator.abs_tol = parse_double(k, value);
  else if (k == "dt_init") cfg.integrator.dt_init = parse_double(k, value);
  else if (k == "max_steps") cfg.integrator.max_steps = parse_int<std::size_t>(k, value);
  else if (k == "checkpoints") {
    cfg.checkpoints_kt = parse_checkpoints(value);
    cfg.checkpoints_spec = std::string(value);
  } else if (k == "snapshots") {
    try {
      cfg.snapshots_kt = parse_checkpoints(value);
    } catch (const ConfigError& e) {
      throw ConfigError("snapshots", e.what());
    }
  } else if (k == "L") cfg.chain.L = parse_int<int>(k, value);
  else if (k == "n_traj") cfg.chain.n_traj = parse_int<std::size_t>(k, value);
  else if (k == "seed") cfg.chain.seed = parse_int<std::uint64_t>(k, value);
  else if (k == "norm_tol") cfg.chain.norm_tol = parse_double(k, value);
  else if (k == "cond_limit") cfg.chain.cond_limit = parse_double(k, value);
  else if (k == "out") cfg.out_dir = std::string(value);
  else if (k == "input") cfg.input_dir = std::string(value);
  else if (k == "format") {
    if (value == "csv") cfg.format = OutputFormat::Csv;
    else if (value == "json-lines") cfg.format = OutputFormat::JsonLines;
    else throw ConfigError(k, "expected csv or json-lines, got '" + std::string(value) + "'");
  } else if (k == "fit_lo") cfg.fit_lo = parse_double(k, value);
  else if (k == "fit_hi") cfg.fit_hi = parse_double(k, value);
  else throw ConfigError(k, "unknown key");
}

RunConfig parse_config(std::string_view text, std::optional<Mode> mode, bool check) {
  RunConfig cfg;
  if (mode) cfg.mode = *mode;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value', got '" + std::string(line) + "'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no), "missing key");
    if (!seen.insert(key).second) throw ConfigError(key, "given more than once");
    apply_setting(cfg, key, line.substr(eq + 1));
    if (key == "mode" && mode && cfg.mode != *mode) {
      throw ConfigError("mode", "file says '" + std::string(to_string(cfg.mode)) + "' but '" +
                                    std::string(to_string(*mode)) + "' was requested");
    }
  }
  if (!seen.contains("checkpoints")) {
    // Mode-dependent default time grid.
    const bool chain = is_chain_mode(cfg.mode);
    cfg.checkpoints_spec = chain ? "0.5,1,2" : "log:0.01:10000:121";
    cfg.checkpoints_kt = parse_checkpoints(cfg.checkpoints_spec);
  }
  if (check) cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  if (!(params.kappa > 0.0)) throw ConfigError("kappa", "must be > 0");
  if (!(params.theta >= 0.0 && params.theta < std::numbers::pi / 2)) {
    throw ConfigError("theta", "must satisfy 0 <= theta < pi/2 (got " + format_double(params.theta) + ")");
  }
  if (!(params.phi > -std::numbers::pi && params.phi <= std::numbers::pi)) {
    throw ConfigError("phi", "must lie in (-pi, pi] (got " + format_double(params.phi) + ")");
  }
  if (!(params.J > 0.0)) throw ConfigError("J", "must be > 0");
  if (M < 8 || (M & (M - 1)) != 0) throw ConfigError("M", "must be a power of two >= 8 (got " + std::to_string(M) + ")");
  if (!(integrator.rel_tol > 0.0)) throw ConfigError("rel_tol", "must be > 0");
  if (!(integrator.abs_tol > 0.0)) throw ConfigError("abs_tol", "must be > 0");
  if (!(integrator.dt_init > 0.0)) throw ConfigError("dt_init", "must be > 0");
  if (integrator.max_steps < 1) throw ConfigError("max_steps", "must be >= 1");
  if (chain.L < kMinChainLength || chain.L > kMaxChainLength) {
    throw ConfigError("L", "must lie in [" + std::to_string(kMinChainLength) + ", " +
                               std::to_string(kMaxChainLength) + "] (got " + std::to_string(chain.L) + ")");
  }
  if (mode == Mode::DenseLindblad && chain.L > kMaxDenseChainLength) {
    throw ConfigError("L", "must be <= " + std::to_string(kMaxDenseChainLength) + " in dense-lindblad mode (got " +
                               std::to_string(chain.L) + ")");
  }
  if (chain.n_traj < 1) throw ConfigError("n_traj", "must be >= 1");
  if (!(chain.norm_tol > 0.0)) throw ConfigError("norm_tol", "must be > 0");
  if (!(chain.cond_limit >= 1.0)) throw ConfigError("cond_limit", "must be >= 1");
  if (!(fit_lo > 0.0) || !(fit_hi > fit_lo)) throw ConfigError("fit_lo", "need 0 < fit_lo < fit_hi");
  if (mode == Mode::Fit && input_dir.empty()) throw ConfigError("input", "required in fit mode");
  for (const double s : snapshots_kt) {
    bool found = false;
    for (const double c : checkpoints_kt) found = found || std::abs(c - s) <= 1e-9 * std::max(1.0, std::abs(s));
    if (!found) throw ConfigError("snapshots", "snapshot kt = " + format_double(s) + " is not a checkpoint");
  }
  if (out_dir.empty()) throw ConfigError("out", "must not be empty");
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  auto line = [&](std::string_view k, const std::string& v) { os << k << " = " << v << '\n'; };
  line("mode", std::string(to_string(mode)));
  line("J", format_double(params.J));
  line("kappa", format_double(params.kappa));
  line("phi", format_double(params.phi));
  line("theta", format_double(params.theta));
  line("M", std::to_string(M));
  line("rel_tol", format_double(integrator.rel_tol));
  line("abs_tol", format_double(integrator.abs_tol));
  line("dt_init", format_double(integrator.dt_init));
  line("max_steps", std::to_string(integrator.max_steps));
  std::string cps;
  for (std::size_t i = 0; i < checkpoints_kt.size(); ++i) cps += (i ? "," : "") + format_double(checkpoints_kt[i]);
  line("checkpoints", cps);
  std::string snaps;
  for (std::size_t i = 0; i < snapshots_kt.size(); ++i) snaps += (i ? "," : "") + format_double(snapshots_kt[i]);
  line("snapshots", snaps);
  line("L", std::to_string(chain.L));
  line("n_traj", std::to_string(chain.n_traj));
  line("seed", std::to_string(chain.seed));
  line("norm_tol", format_double(chain.norm_tol));
  line("cond_limit", format_double(chain.cond_limit));
  line("out", out_dir.string());
  if (!input_dir.empty()) line("input", input_dir.string());
  line("format", std::string(to_string(format)));
  line("fit_lo", format_double(fit_lo));
  line("fit_hi", format_double(fit_hi));
  return os.str();
}

}  // namespace nrchain
