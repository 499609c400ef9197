#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "nrchain/analytic.hpp"
#include "nrchain/observables.hpp"
#include "nrchain/run.hpp"

#ifndef NRCHAIN_VERSION
#define NRCHAIN_VERSION "unknown"
#endif

namespace nrchain {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const std::vector<std::string> kSeriesColumns = {"kt", "n", "current_over_J", "energy_over_J", "D1", "D2"};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

// ---------------------------------------------------------------------------
// Writers

class OutputDir {
 public:
  OutputDir(fs::path dir, OutputFormat format) : dir_(std::move(dir)), format_(format) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) throw std::runtime_error("cannot create output directory " + dir_.string());
  }

  void table(const std::string& stem, const Table& t) {
    const bool csv = format_ == OutputFormat::Csv;
    const fs::path name = stem + (csv ? ".csv" : ".jsonl");
    std::ostringstream os;
    if (csv) {
      for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << t.columns[c];
      os << '\n';
      for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << format_double(row[c]);
        os << '\n';
      }
    } else {
      for (const auto& row : t.rows) {
        Json j = Json::object();
        for (std::size_t c = 0; c < row.size(); ++c) {
          j[t.columns[c]] = std::isfinite(row[c]) ? Json(row[c]) : Json(nullptr);
        }
        os << j.dump() << '\n';
      }
    }
    text(name, os.str());
  }

  void text(const fs::path& name, const std::string& body) {
    std::ofstream f(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
    f << body;
    if (!f) throw std::runtime_error("write failed for " + (dir_ / name).string());
    files_.push_back(name);
  }

  const fs::path& dir() const { return dir_; }
  const std::vector<fs::path>& files() const { return files_; }

 private:
  fs::path dir_;
  OutputFormat format_;
  std::vector<fs::path> files_;
};

Table series_table(const ObservableSeries& s, double J) {
  Table t{kSeriesColumns, {}};
  std::vector<double> d1(s.size(), kNaN), d2(s.size(), kNaN);
  ObservableSeries positive;
  std::vector<std::size_t> index;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.times[i] > 0.0 && s.n[i] > 0.0) {
      positive.push_back(s.times[i], s.n[i], s.current[i], s.energy[i]);
      index.push_back(i);
    }
  }
  if (positive.size() >= 5) {
    const auto ld = log_derivatives(positive);
    for (std::size_t i = 0; i < index.size(); ++i) {
      d1[index[i]] = ld.d1[i];
      d2[index[i]] = ld.d2[i];
    }
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    t.rows.push_back({s.times[i], s.n[i], s.current[i] / J, s.energy[i] / J, d1[i], d2[i]});
  }
  return t;
}

Table rapidity_table(const RapidityState& st) {
  Table t{{"k", "rho"}, {}};
  const auto& g = st.grid();
  for (std::size_t m = 0; m < g.size(); ++m) t.rows.push_back({g.node(m), st.rho.values[static_cast<Eigen::Index>(m)]});
  return t;
}

Table occupation_table(const SectorOccupations& occ) {
  Table t{{"k", "rho"}, {}};
  for (int i = 0; i < occ.L; ++i) t.rows.push_back({occ.k_tilde[i], occ.rho_tilde[i]});
  return t;
}

Table sector_table(const SectorOccupations& occ) {
  const bool se = !occ.se_ap.empty();
  Table t{{"k_ap", "rho_ap", "se_ap", "k_p", "rho_p", "se_p", "k_tilde", "rho_tilde", "se_tilde"}, {}};
  for (int i = 0; i < occ.L; ++i) {
    t.rows.push_back({occ.k_ap[i], occ.rho_ap[i], se ? occ.se_ap[i] : 0.0, occ.k_p[i], occ.rho_p[i],
                      se ? occ.se_p[i] : 0.0, occ.k_tilde[i], occ.rho_tilde[i], se ? occ.se_tilde[i] : 0.0});
  }
  return t;
}

std::string snapshot_stem(const std::string& prefix, double kt) { return prefix + format_double(kt); }

// Index of the checkpoint matching a snapshot time.
std::size_t checkpoint_index(const std::vector<double>& cps, double kt) {
  for (std::size_t i = 0; i < cps.size(); ++i) {
    if (std::abs(cps[i] - kt) <= 1e-9 * std::max(1.0, std::abs(kt))) return i;
  }
  throw ConfigError("snapshots", "snapshot kt = " + format_double(kt) + " is not a checkpoint");
}

// ---------------------------------------------------------------------------
// Fit records

Json power_law_record(const ObservableSeries& s, double lo, double hi) {
  Json j;
  j["type"] = "power_law";
  j["source"] = s.provenance;
  j["window"] = {lo, hi};
  try {
    const auto f = fit_power_law(s, lo, hi);
    j["chi"] = f.chi;
    j["stderr_chi"] = f.stderr_chi;
    j["amplitude"] = f.amplitude;
    j["points"] = f.points;
  } catch (const std::exception& e) {
    j["rejected"] = e.what();
  }
  return j;
}

double slow_mode(double phi) {
  const double two_pi = 2.0 * std::numbers::pi;
  return std::fmod(std::numbers::pi - phi + two_pi, two_pi);
}

Json gaussian_record(const RapidityState& st, double kt, const std::string& source, double phi) {
  Json j;
  j["type"] = "gaussian_peak";
  j["source"] = source;
  j["kt"] = kt;
  j["center_hint"] = slow_mode(phi);
  try {
    const auto f = fit_gaussian_peak(st, slow_mode(phi));
    j["amplitude"] = f.amplitude;
    j["sigma"] = f.sigma;
    j["center"] = f.center;
    j["residual"] = f.residual;
    j["points"] = f.points;
    j["ratio_prediction"] = std::sin(phi) * (1.0 - f.sigma * f.sigma / 2.0);
  } catch (const std::exception& e) {
    j["rejected"] = e.what();
  }
  return j;
}

void write_fits(OutputDir& out, const std::vector<Json>& records) {
  std::string body;
  for (const auto& r : records) body += r.dump() + '\n';
  out.text("fits.json-lines", body);
}

std::vector<double> physical_times(const RunConfig& cfg) {
  std::vector<double> t;
  for (const double kt : cfg.checkpoints_kt) t.push_back(kt / cfg.params.kappa);
  return t;
}

// ---------------------------------------------------------------------------
// Modes

struct ModeResult {
  Json diagnostics = Json::object();
};

std::vector<RapidityState> rapidity_states(const RunConfig& cfg, Flow flow, Json& diag) {
  const FourierGrid grid(cfg.M);
  if (flow == Flow::FreeFermion) {
    std::vector<RapidityState> states;
    for (const double t : physical_times(cfg)) {
      states.push_back(free_fermion_exact(cfg.params.theta, cfg.params.phi, cfg.params.kappa, t, grid));
    }
    diag["method"] = "closed-form free-fermion occupations";
    return states;
  }
  IntegratorConfig ic = cfg.integrator;
  ic.checkpoints = physical_times(cfg);
  auto res = evolve(initial_rapidity(cfg.params.theta, grid), flow, cfg.params, ic);
  diag["accepted_steps"] = res.stats.accepted;
  diag["rejected_steps"] = res.stats.rejected;
  diag["rhs_evals"] = res.stats.rhs_evals;
  diag["worst_undershoot"] = res.worst_undershoot;
  diag["worst_overshoot"] = res.worst_overshoot;
  return std::move(res.states);
}

ModeResult run_rapidity(const RunConfig& cfg, Flow flow, OutputDir& out) {
  ModeResult r;
  const std::string source = flow == Flow::TGGE ? "tgge" : "free-fermion";
  const auto states = rapidity_states(cfg, flow, r.diagnostics);
  const auto series = make_series(states, cfg.params, source);
  out.table("series", series_table(series, cfg.params.J));
  std::vector<Json> fits{power_law_record(series, cfg.fit_lo, cfg.fit_hi)};
  for (const double kt : cfg.snapshots_kt) {
    const auto& st = states[checkpoint_index(cfg.checkpoints_kt, kt)];
    out.table(snapshot_stem("rapidity_", kt), rapidity_table(st));
    fits.push_back(gaussian_record(st, kt, source, cfg.params.phi));
  }
  write_fits(out, fits);
  return r;
}

SpinChainConfig chain_config(const RunConfig& cfg) {
  SpinChainConfig c = cfg.chain;
  c.params = cfg.params;
  c.checkpoints = physical_times(cfg);
  return c;
}

ObservableSeries ensemble_series(const TrajectoryEnsemble& ens, double kappa) {
  ObservableSeries s;
  s.provenance = "trajectories";
  for (std::size_t c = 0; c < ens.checkpoints.size(); ++c) {
    s.push_back(kappa * ens.checkpoints[c].time, ens.density(c).mean, ens.current(c).mean, ens.energy(c).mean);
  }
  return s;
}

void write_ensemble(const RunConfig& cfg, const TrajectoryEnsemble& ens, OutputDir& out, Json& diag) {
  const auto series = ensemble_series(ens, cfg.params.kappa);
  out.table("series", series_table(series, cfg.params.J));
  Table se{{"kt", "n_se", "current_over_J_se", "energy_over_J_se", "max_offdiag", "max_offdiag_z"}, {}};
  for (std::size_t c = 0; c < ens.checkpoints.size(); ++c) {
    se.rows.push_back({series.times[c], ens.density(c).stderr_mean, ens.current(c).stderr_mean / cfg.params.J,
                       ens.energy(c).stderr_mean / cfg.params.J, ens.max_offdiagonal(c), ens.max_offdiagonal_z(c)});
  }
  out.table("series_stderr", se);
  for (const double kt : cfg.snapshots_kt) {
    const auto occ = ens.occupations(checkpoint_index(cfg.checkpoints_kt, kt));
    out.table(snapshot_stem("rapidity_", kt), occupation_table(occ));
    out.table(snapshot_stem("sectors_", kt), sector_table(occ));
  }
  std::size_t jumps = 0;
  for (const auto& log : ens.jump_logs) jumps += log.size();
  diag["trajectories"] = ens.jump_logs.size();
  diag["total_jumps"] = jumps;
  write_fits(out, {power_law_record(series, cfg.fit_lo, cfg.fit_hi)});
}

ModeResult run_trajectories_mode(const RunConfig& cfg, OutputDir& out) {
  ModeResult r;
  const auto ens = run_trajectories(chain_config(cfg));
  write_ensemble(cfg, ens, out, r.diagnostics);
  return r;
}

ModeResult run_dense(const RunConfig& cfg, OutputDir& out) {
  ModeResult r;
  const auto res = dense_lindblad(chain_config(cfg));
  out.table("series", series_table(res.series, cfg.params.J));
  for (const double kt : cfg.snapshots_kt) {
    const auto occ = momentum_occupations(res.density_matrices[checkpoint_index(cfg.checkpoints_kt, kt)], cfg.chain.L);
    out.table(snapshot_stem("rapidity_", kt), occupation_table(occ));
    out.table(snapshot_stem("sectors_", kt), sector_table(occ));
  }
  r.diagnostics["max_trace_drift"] = res.max_trace_drift;
  r.diagnostics["accepted_steps"] = res.stats.accepted;
  write_fits(out, {power_law_record(res.series, cfg.fit_lo, cfg.fit_hi)});
  return r;
}

ModeResult run_compare(const RunConfig& cfg, OutputDir& out) {
  ModeResult r;
  Json tgge_diag = Json::object();
  const auto states = rapidity_states(cfg, Flow::TGGE, tgge_diag);
  const auto ens = run_trajectories(chain_config(cfg));
  Json traj_diag = Json::object();
  write_ensemble(cfg, ens, out, traj_diag);
  const auto tgge_series = make_series(states, cfg.params, "tgge");
  out.table("series_tgge", series_table(tgge_series, cfg.params.J));

  Table delta{{"kt", "max_abs_delta", "k_at_max", "z_at_max"}, {}};
  for (std::size_t c = 0; c < states.size(); ++c) {
    const auto occ = ens.occupations(c);
    double worst = -1.0, k_worst = 0.0, z = 0.0;
    for (int i = 0; i < occ.L; ++i) {
      const double d = std::abs(occ.rho_tilde[i] - interpolate(states[c].rho, occ.k_tilde[i]));
      if (d > worst) {
        worst = d;
        k_worst = occ.k_tilde[i];
        z = occ.se_tilde[i] > 0.0 ? d / occ.se_tilde[i] : (d == 0.0 ? 0.0 : kNaN);
      }
    }
    delta.rows.push_back({cfg.checkpoints_kt[c], worst, k_worst, z});
  }
  out.table("delta", delta);
  for (const double kt : cfg.snapshots_kt) {
    out.table(snapshot_stem("rapidity_tgge_", kt), rapidity_table(states[checkpoint_index(cfg.checkpoints_kt, kt)]));
  }
  r.diagnostics["tgge"] = tgge_diag;
  r.diagnostics["trajectories"] = traj_diag;
  return r;
}

// ---------------------------------------------------------------------------
// Fit mode: reads an earlier run directory.

std::vector<std::vector<double>> read_csv(const fs::path& file, const std::vector<std::string>& header) {
  std::ifstream f(file);
  if (!f) throw std::runtime_error("cannot read " + file.string());
  std::string line;
  std::getline(f, line);
  std::string expected;
  for (std::size_t i = 0; i < header.size(); ++i) expected += (i ? "," : "") + header[i];
  if (line != expected) throw std::runtime_error(file.string() + ": expected header '" + expected + "'");
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::string_view rest = line;
    for (;;) {
      const auto pos = rest.find(',');
      const std::string_view cell = rest.substr(0, pos);
      double x = 0.0;
      if (cell == "nan") {
        x = kNaN;
      } else {
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
        if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
          throw std::runtime_error(file.string() + ":" + std::to_string(line_no) + ": bad number '" +
                                   std::string(cell) + "'");
        }
      }
      row.push_back(x);
      if (pos == std::string_view::npos) break;
      rest = rest.substr(pos + 1);
    }
    if (row.size() != header.size()) {
      throw std::runtime_error(file.string() + ":" + std::to_string(line_no) + ": wrong column count");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::pair<double, fs::path>> snapshot_files(const fs::path& dir, const std::string& prefix) {
  std::vector<std::pair<double, fs::path>> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!name.starts_with(prefix) || !name.ends_with(".csv")) continue;
    const std::string_view num(name.data() + prefix.size(), name.size() - prefix.size() - 4);
    double kt = 0.0;
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), kt);
    if (ec != std::errc{} || ptr != num.data() + num.size()) continue;
    out.emplace_back(kt, entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Model parameters of the run being fitted; the fit config's own values are
// only used when the input directory carries no manifest.
ModelParams source_params(const RunConfig& cfg) {
  std::ifstream f(cfg.input_dir / "run_manifest.json");
  if (!f) return cfg.params;
  const auto manifest = Json::parse(f);
  return parse_config(manifest.at("config_text").get<std::string>(), std::nullopt, false).params;
}

ModeResult run_fit(const RunConfig& cfg, OutputDir& out) {
  ModeResult r;
  const ModelParams p = source_params(cfg);
  const auto rows = read_csv(cfg.input_dir / "series.csv", kSeriesColumns);
  ObservableSeries s;
  s.provenance = (cfg.input_dir / "series.csv").string();
  for (const auto& row : rows) s.push_back(row[0], row[1], row[2] * p.J, row[3] * p.J);
  std::vector<Json> fits{power_law_record(s, cfg.fit_lo, cfg.fit_hi)};
  for (const auto& [kt, file] : snapshot_files(cfg.input_dir, "rapidity_")) {
    const auto snap = read_csv(file, {"k", "rho"});
    Json rec;
    try {
      const FourierGrid grid(snap.size());
      Eigen::VectorXd values(static_cast<Eigen::Index>(snap.size()));
      for (std::size_t m = 0; m < snap.size(); ++m) {
        if (std::abs(snap[m][0] - grid.node(m)) > 1e-12) throw std::runtime_error("k column is not a uniform grid");
        values[static_cast<Eigen::Index>(m)] = snap[m][1];
      }
      rec = gaussian_record(RapidityState(PeriodicFunction{grid, values}, kt / p.kappa), kt,
                            file.filename().string(), p.phi);
    } catch (const std::exception& e) {
      rec = Json{{"type", "gaussian_peak"}, {"source", file.filename().string()}, {"kt", kt}, {"rejected", e.what()}};
    }
    fits.push_back(rec);
  }
  write_fits(out, fits);
  r.diagnostics["input_rows"] = rows.size();
  r.diagnostics["source_phi"] = p.phi;
  return r;
}

Json config_json(const RunConfig& cfg) {
  Json j = Json::object();
  std::istringstream in(cfg.to_text());
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find(" = ");
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

}  // namespace

RunSummary run(const RunConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  OutputDir out(cfg.out_dir, cfg.format);
  ModeResult res;
  switch (cfg.mode) {
    case Mode::TGGE: res = run_rapidity(cfg, Flow::TGGE, out); break;
    case Mode::FreeFermion: res = run_rapidity(cfg, Flow::FreeFermion, out); break;
    case Mode::Trajectories: res = run_trajectories_mode(cfg, out); break;
    case Mode::DenseLindblad: res = run_dense(cfg, out); break;
    case Mode::Fit: res = run_fit(cfg, out); break;
    case Mode::Compare: res = run_compare(cfg, out); break;
  }
  RunSummary summary;
  summary.files = out.files();
  summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (cfg.format == OutputFormat::Csv && fs::exists(out.dir() / "series.csv")) {
    emit_plot_script(out.dir());
    summary.files.push_back("plot.gp");
  }

  Json manifest;
  manifest["program"] = "sim";
  manifest["version"] = NRCHAIN_VERSION;
  manifest["mode"] = std::string(to_string(cfg.mode));
  manifest["seed"] = cfg.chain.seed;
  manifest["config"] = config_json(cfg);
  manifest["config_text"] = cfg.to_text();
  Json files = Json::array();
  for (const auto& f : summary.files) files.push_back(f.string());
  manifest["files"] = files;
  manifest["diagnostics"] = res.diagnostics;
  manifest["wall_time_s"] = summary.wall_seconds;
  std::ofstream mf(out.dir() / "run_manifest.json", std::ios::trunc);
  mf << manifest.dump(2) << '\n';
  if (!mf) throw std::runtime_error("cannot write run_manifest.json");
  return summary;
}

std::filesystem::path emit_plot_script(const std::filesystem::path& dir) {
  std::vector<std::string> missing;
  if (!fs::exists(dir / "series.csv")) missing.push_back((dir / "series.csv").string());
  if (!missing.empty()) {
    std::string msg = "emit_plot_script: missing artifacts:";
    for (const auto& m : missing) msg += " " + m;
    throw std::runtime_error(msg);
  }
  const auto snaps = snapshot_files(dir, "rapidity_");
  const bool has_delta = fs::exists(dir / "delta.csv");
  const bool has_tgge = fs::exists(dir / "series_tgge.csv");

  std::ostringstream g;
  g << "# gnuplot script; reads only the CSV files in this directory\n"
    << "set datafile separator ','\n"
    << "set datafile missing 'nan'\n"
    << "set key autotitle columnhead\n"
    << "set terminal pdfcairo size 8in,6in\n"
    << "set output 'figures.pdf'\n\n";

  g << "# density decay, log-log\n"
    << "set logscale xy\nset xlabel 'kappa t'\nset ylabel 'n'\n"
    << "plot 'series.csv' using 1:2 with lines title 'n'";
  if (has_tgge) g << ", 'series_tgge.csv' using 1:2 with lines dashtype 2 title 'n (t-GGE)'";
  g << "\n\n";

  g << "# logarithmic derivatives\n"
    << "unset logscale y\nset ylabel 'D1, D2'\n"
    << "plot 'series.csv' using 1:5 with lines title 'D1', '' using 1:6 with lines title 'D2'\n\n";

  g << "# current and current per particle\n"
    << "set ylabel 'J_current / J'\n"
    << "plot 'series.csv' using 1:3 with lines title 'current / J'\n"
    << "set ylabel 'J_current / (J n)'\n"
    << "plot 'series.csv' using 1:($3/$2) with lines title 'current / (J n)'\n\n";

  std::vector<std::pair<double, fs::path>> own;
  for (const auto& s : snaps) {
    if (!s.second.filename().string().starts_with("rapidity_tgge_")) own.push_back(s);
  }
  if (!own.empty()) {
    g << "# rapidity distribution snapshots\n"
      << "unset logscale\nset xlabel 'k'\nset ylabel 'rho(k)'\nset xrange [0:2*pi]\nplot ";
    for (std::size_t i = 0; i < own.size(); ++i) {
      g << (i ? ", " : "") << "'" << own[i].second.filename().string() << "' using 1:2 with linespoints title 'kt = "
        << format_double(own[i].first) << "'";
    }
    g << "\nunset xrange\n\n";
  }
  if (has_delta) {
    g << "# trajectory vs t-GGE occupation mismatch\n"
      << "unset logscale\nset xlabel 'kappa t'\nset ylabel 'max_k |delta rho|'\n"
      << "plot 'delta.csv' using 1:2 with linespoints title 'max |rho_tilde - rho_tGGE|'\n";
  }
  const fs::path file = dir / "plot.gp";
  std::ofstream f(file, std::ios::trunc);
  f << g.str();
  if (!f) throw std::runtime_error("cannot write " + file.string());
  return file;
}

}  // namespace nrchain
