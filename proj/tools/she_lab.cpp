// she_lab: experiment runner for the stochastic heat equation library.
//
//   she_lab <command> [--config FILE] [--out DIR] [--reps N] [--threads N]
//                     [--seed S] [--set key=value ...] [command options]
//
// Each run writes <command>_<timestamp>.csv (and sometimes a second CSV)
// plus manifest.json into --out. Exit codes: 0 ok, 2 invalid configuration
// or arguments, 3 runtime failure; failures print a JSON error record on
// stderr and remove any files the run had written.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "shelab/config.hpp"
#include "shelab/estimators.hpp"
#include "shelab/io.hpp"
#include "shelab/oracle.hpp"
#include "shelab/solver.hpp"

#ifndef SHELAB_VERSION
#define SHELAB_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace shelab;

namespace {

struct Manifest {
  std::string command;
  std::string config_path;
  std::string output_dir = ".";
  std::size_t n_reps = 100;
  unsigned threads = 1;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

struct Options {
  // thresholds
  double low = 1.0, lip = 1.0, kappa = 1.0;
  std::optional<double> lambda;
  // support / moments
  double q = 0.99;
  double m = 4.0;
  double t_lo = -1.0, t_hi = -1.0;
  // holder
  std::vector<std::size_t> lags = default_holder_lags();
  // rvcheck
  double rv_q = 1.0, rv_eta = 1.0;
  std::vector<double> rv_t{2.718281828459045, 10.0, 50.0, 100.0};
  // picard / simulate
  std::size_t iters = 8;
  std::uint64_t replicate = 0;
  std::size_t oracle_stride = 1;
};

class Run {
 public:
  explicit Run(Manifest m) : m_(std::move(m)), started_(std::chrono::steady_clock::now()) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    stamp_ = buf;
    started_at_ = stamp_;
  }

  SimConfig config() const {
    std::vector<std::string> ov = m_.overrides;
    if (m_.seed) ov.push_back("seed=" + std::to_string(*m_.seed));
    if (m_.config_path.empty()) {
      ConfigEntries e;
      apply_overrides(e, ov);
      return config_from_entries(e);
    }
    return load_config(m_.config_path, ov);
  }

  std::string path(const std::string& suffix = "", const std::string& ext = ".csv") const {
    return (fs::path(m_.output_dir) / (m_.command + suffix + "_" + stamp_ + ext)).string();
  }

  void csv(const std::string& suffix, Metadata meta, const CsvTable& t) {
    const auto p = path(suffix);
    written_.push_back(p);
    write_csv(p, meta, t);
  }

  void json_file(const std::string& suffix, const json& j) {
    const auto p = path(suffix, ".json");
    written_.push_back(p);
    write_text(p, j.dump(2) + "\n");
  }

  void manifest(const std::optional<SimConfig>& cfg, const json& extra) {
    json j;
    j["command"] = m_.command;
    j["config_path"] = m_.config_path;
    j["output_dir"] = m_.output_dir;
    j["n_reps"] = m_.n_reps;
    j["threads"] = m_.threads;
    j["overrides"] = m_.overrides;
    if (cfg) {
      json c = json::object();
      for (auto& [k, v] : config_entries(*cfg)) c[k] = v;
      j["config"] = c;
      j["seed"] = cfg->seed;
    }
    j["rng_family"] = std::string(kRngFamily);
    j["rng_version"] = std::string(kRngVersion);
    j["code_version"] = SHELAB_VERSION;
    j["started_at"] = started_at_;
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    j["outputs"] = json::array();
    for (const auto& w : written_) j["outputs"].push_back(fs::path(w).filename().string());
    j["result"] = extra;
    const auto p = (fs::path(m_.output_dir) / "manifest.json").string();
    written_.push_back(p);
    write_text(p, j.dump(2) + "\n");
  }

  void remove_outputs() noexcept {
    for (const auto& w : written_) {
      std::error_code ec;
      fs::remove(w, ec);
    }
  }

  const Manifest& m() const { return m_; }

  Metadata meta(const SimConfig& cfg, Metadata extra = {}) const {
    Metadata md{{"command", m_.command}};
    for (auto& e : run_metadata(cfg)) md.push_back(e);
    for (auto& e : extra) md.push_back(e);
    return md;
  }

 private:
  Manifest m_;
  std::chrono::steady_clock::time_point started_;
  std::string stamp_, started_at_;
  std::vector<std::string> written_;
};

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

json cmd_simulate(Run& run, const Options& opt) {
  const auto cfg = run.config();
  const auto traj = simulate_path(cfg, opt.replicate);
  CsvTable t{{"t", "x", "u"}, {}};
  for (const auto& f : traj.snapshots)
    for (std::size_t i = 0; i < f.values.size(); ++i) t.rows.push_back({f.t, f.x(i), f.values[i]});
  CsvTable p{{"t", "min_value", "negative_mass_fraction", "boundary_mass_fraction"}, {}};
  for (const auto& s : traj.positivity)
    p.rows.push_back({s.t, s.min_value, s.negative_mass_fraction, s.boundary_mass_fraction});
  const Metadata extra{{"replicate", std::to_string(opt.replicate)}};
  run.csv("", run.meta(cfg, extra), t);
  run.csv("_positivity", run.meta(cfg, extra), p);
  run.manifest(cfg, {{"snapshots", traj.snapshots.size()}});
  return {};
}

json cmd_moments(Run& run, const Options& opt) {
  const auto cfg = run.config();
  MomentRequest req;
  const auto mm = mc_moments(cfg, run.m().n_reps, req, run.m().threads);
  CsvTable t{{"t", "sup_sq", "sup_sq_se", "l2_sq", "l2_sq_se", "negative_fraction_mean",
              "negative_fraction_max", "boundary_fraction_max"},
             {}};
  for (std::size_t s = 0; s < mm.times.size(); ++s)
    t.rows.push_back({mm.times[s], mm.sup_sq->estimates[s], mm.sup_sq->stderrs[s],
                      mm.l2_sq->estimates[s], mm.l2_sq->stderrs[s], mm.negative_fraction_mean[s],
                      mm.negative_fraction_max[s], mm.boundary_fraction_max[s]});
  const double lo = opt.t_lo >= 0 ? opt.t_lo : cfg.t_end / 2, hi = opt.t_hi >= 0 ? opt.t_hi : cfg.t_end;
  json result{{"n_replicates", mm.n_replicates}, {"n_failed", mm.n_failed}};
  try {
    const auto fs_ = fit_lyapunov(*mm.sup_sq, lo, hi);
    const auto fl = fit_lyapunov(*mm.l2_sq, lo, hi);
    result["sup_sq_rate"] = fs_.rate;
    result["sup_sq_rate_se"] = fs_.se;
    result["l2_sq_rate"] = fl.rate;
    result["l2_sq_rate_se"] = fl.se;
  } catch (const std::invalid_argument& e) {
    result["fit_error"] = e.what();
  }
  result["threshold_lower"] = lyapunov_threshold(cfg.sigma.low, cfg.kappa);
  result["threshold_upper"] = lyapunov_threshold(cfg.sigma.lip, cfg.kappa);
  run.csv("", run.meta(cfg, {{"n_reps", std::to_string(run.m().n_reps)}}), t);
  run.manifest(cfg, result);
  return result;
}

json cmd_oracle(Run& run, const Options& opt) {
  const auto cfg = run.config();
  const auto sol = solve_second_moment_volterra(cfg, opt.oracle_stride);
  CsvTable series{{"t", "l2_mass", "peak"}, {}};
  for (const auto& f : sol.fields)
    series.rows.push_back({f.t, f.mass(), *std::max_element(f.values.begin(), f.values.end())});
  CsvTable prof{{"t", "x", "f"}, {}};
  std::size_t next = 0;
  for (const auto& f : sol.fields) {
    while (next < cfg.snapshot_times.size() && cfg.snapshot_times[next] < f.t - 0.5 * cfg.dt) ++next;
    if (next < cfg.snapshot_times.size() && std::abs(cfg.snapshot_times[next] - f.t) < 0.5 * cfg.dt) {
      for (std::size_t i = 0; i < f.values.size(); ++i) prof.rows.push_back({f.t, f.x(i), f.values[i]});
      ++next;
    }
  }
  const Metadata extra{{"oracle_stride", std::to_string(opt.oracle_stride)}};
  run.csv("", run.meta(cfg, extra), series);
  run.csv("_profile", run.meta(cfg, extra), prof);
  json result{{"boundary_ratio", sol.boundary_ratio}, {"boundary_ok", sol.boundary_ok()}};
  try {
    const double hi = cfg.t_end, lo = opt.t_lo >= 0 ? opt.t_lo : hi / 2;
    const auto s = mass_series(sol.fields);
    result["l2_rate"] = fit_lyapunov(s.times, s.mass, {}, lo, opt.t_hi >= 0 ? opt.t_hi : hi).rate;
  } catch (const std::invalid_argument& e) {
    result["fit_error"] = e.what();
  }
  run.manifest(cfg, result);
  return result;
}

json report_json(const LaplaceReport& r) {
  json j;
  j["lambda"] = r.lambda;
  if (r.U_infinite) j["U_value"] = "inf";
  else j["U_value"] = r.U_value;
  j["U_infinite"] = r.U_infinite;
  if (r.fixed_point_divergent) j["fixed_point_bound"] = "divergent";
  else j["fixed_point_bound"] = r.fixed_point_bound;
  j["fixed_point_divergent"] = r.fixed_point_divergent;
  j["threshold_lower"] = r.threshold_lower;
  j["threshold_upper"] = r.threshold_upper;
  return j;
}

json cmd_thresholds(Run& run, const Options& opt) {
  if (!(opt.low > 0.0) || !(opt.lip > 0.0) || !(opt.kappa > 0.0) || opt.low > opt.lip)
    throw ConfigError("thresholds: need 0 < low <= lip and kappa > 0");
  json j;
  if (opt.lambda) {
    const auto cfg = run.config();
    std::optional<double> U;
    if (cfg.sigma.kind == SigmaKind::linear && cfg.init.kind != InitKind::discrete_delta) {
      const auto s = solve_l2_mass_volterra(cfg.sigma.lambda, opt.kappa, cfg.init, cfg.dt, cfg.t_end);
      U = laplace_U_numeric(s, *opt.lambda).value;
    }
    j = report_json(make_laplace_report(*opt.lambda, opt.low, opt.lip, opt.kappa, cfg.init, U));
  } else {
    j["threshold_lower"] = lyapunov_threshold(opt.low, opt.kappa);
    j["threshold_upper"] = lyapunov_threshold(opt.lip, opt.kappa);
  }
  run.json_file("", j);
  run.manifest(std::nullopt, j);
  return j;
}

json cmd_support(Run& run, const Options& opt) {
  const auto cfg = run.config();
  const auto sol = solve_second_moment_volterra(cfg, opt.oracle_stride);
  const double lo = opt.t_lo >= 0 ? opt.t_lo : cfg.t_end / 5, hi = opt.t_hi >= 0 ? opt.t_hi : cfg.t_end;
  const auto sp = support_profile(sol.fields, opt.q, lo, hi);
  std::vector<MomentField> window;
  for (const auto& f : sol.fields)
    if (f.t >= lo - 1e-9 && f.t <= hi + 1e-9) window.push_back(f);
  const auto tails = tail_mass_rate(window, opt.m);
  const auto inner = inner_mass_rate(window, sp.m_hat);
  CsvTable t{{"t", "r_q", "tail_rate_m", "inner_rate_m_hat"}, {}};
  for (std::size_t i = 0; i < sp.times.size(); ++i)
    t.rows.push_back({sp.times[i], sp.radii[i], tails[i], inner[i]});
  run.csv("", run.meta(cfg, {{"q", format_double(opt.q)}, {"m", format_double(opt.m)}}), t);
  json result{{"q", opt.q},          {"m_hat", sp.m_hat},
              {"residual", sp.residual}, {"residual_fraction", sp.residual_fraction},
              {"boundary_ok", sol.boundary_ok()}};
  run.manifest(cfg, result);
  return result;
}

json cmd_holder(Run& run, const Options& opt) {
  const auto cfg = run.config();
  const auto snaps = collect_final_snapshots(cfg, run.m().n_reps, run.m().threads);
  const auto rep = holder_increment_exponent(snaps, opt.lags);
  CsvTable t{{"lag", "mean_sq_increment"}, {}};
  for (std::size_t i = 0; i < rep.lags.size(); ++i) t.rows.push_back({rep.lags[i], rep.mean_sq_increments[i]});
  run.csv("", run.meta(cfg, {{"n_reps", std::to_string(run.m().n_reps)}, {"lags", join(opt.lags)}}), t);
  json result{{"t", rep.t},
              {"slope", rep.slope},
              {"smallest_lag_excluded", rep.smallest_lag_excluded},
              {"region_radius", rep.region_radius},
              {"too_rough", rep.too_rough},
              {"smooth", rep.smooth}};
  run.manifest(cfg, result);
  return result;
}

json cmd_peaks(Run& run, const Options&) {
  const auto cfg = run.config();
  const auto pr = peak_concentration_ratio(cfg, run.m().n_reps, run.m().threads);
  CsvTable t{{"t", "ratio", "ratio_se", "sup_sq", "peak_sq"}, {}};
  for (const auto& p : pr) t.rows.push_back({p.t, p.ratio, p.se, p.numerator, p.denominator});
  run.csv("", run.meta(cfg, {{"n_reps", std::to_string(run.m().n_reps)}}), t);
  json result = json::object();
  if (!pr.empty()) result["last_over_first"] = pr.back().ratio / pr.front().ratio;
  run.manifest(cfg, result);
  return result;
}

json cmd_rvcheck(Run& run, const Options& opt) {
  const auto pts = rv_integral_check(opt.rv_q, opt.rv_eta, opt.rv_t);
  CsvTable t{{"t", "ratio", "log_integral", "rel_error"}, {}};
  double worst = 0.0;
  for (const auto& p : pts) {
    t.rows.push_back({p.t, p.ratio, p.integral_log, p.rel_error});
    worst = std::max(worst, p.ratio);
  }
  const Metadata md{{"command", "rvcheck"}, {"q", format_double(opt.rv_q)}, {"eta", format_double(opt.rv_eta)}};
  run.csv("", md, t);
  json result{{"max_ratio", worst}};
  run.manifest(std::nullopt, result);
  return result;
}

json cmd_picard(Run& run, const Options& opt) {
  const auto cfg = run.config();
  const auto res = picard_iterate(cfg, opt.replicate, opt.iters);
  CsvTable t{{"iteration", "difference", "distance_to_euler"}, {}};
  for (std::size_t k = 0; k < res.iterates.size(); ++k) {
    double d2 = 0.0;
    if (!res.euler.values.empty())
      for (std::size_t i = 0; i < res.euler.values.size(); ++i) {
        const double d = res.iterates[k].values[i] - res.euler.values[i];
        d2 += d * d;
      }
    const double diff = k < res.differences.size() ? res.differences[k] : std::nan("");
    t.rows.push_back({static_cast<double>(k), diff,
                      res.euler.values.empty() ? std::nan("") : std::sqrt(d2 * cfg.dx())});
  }
  run.csv("", run.meta(cfg, {{"replicate", std::to_string(opt.replicate)},
                             {"iterations", std::to_string(opt.iters)}}), t);
  json result{{"differences", res.differences}};
  run.manifest(cfg, result);
  return result;
}

void error_record(int code, const std::string& kind, const std::string& msg) {
  json j{{"status", "error"}, {"exit_code", code}, {"kind", kind}, {"message", msg}};
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic heat equation lab"};
  app.require_subcommand(1);
  Manifest m;
  Options opt;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", m.config_path, "configuration file (or a previous output CSV)");
    sub->add_option("--out", m.output_dir, "output directory");
    sub->add_option("--reps", m.n_reps, "Monte Carlo replicates");
    sub->add_option("--threads", m.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", m.seed, "noise seed (overrides the config)");
    sub->add_option("--set", m.overrides, "override key=value")->take_all();
    sub->add_option("--t-lo", opt.t_lo, "fit window start");
    sub->add_option("--t-hi", opt.t_hi, "fit window end");
  };

  auto* simulate = app.add_subcommand("simulate", "one sample path");
  common(simulate);
  simulate->add_option("--replicate", opt.replicate);
  auto* moments = app.add_subcommand("moments", "Monte Carlo sup and L2 moments");
  common(moments);
  auto* oracle = app.add_subcommand("oracle", "second-moment Volterra solve");
  common(oracle);
  oracle->add_option("--stride", opt.oracle_stride, "output every n-th step");
  auto* thresholds = app.add_subcommand("thresholds", "Lyapunov thresholds and Laplace report");
  common(thresholds);
  thresholds->add_option("--low", opt.low);
  thresholds->add_option("--lip", opt.lip);
  thresholds->add_option("--kappa", opt.kappa);
  thresholds->add_option("--lambda", opt.lambda, "Laplace variable for the full report");
  auto* support = app.add_subcommand("support", "effective support from the oracle");
  common(support);
  support->add_option("--q", opt.q);
  support->add_option("--m", opt.m);
  support->add_option("--stride", opt.oracle_stride);
  auto* holder = app.add_subcommand("holder", "spatial increment exponent");
  common(holder);
  holder->add_option("--lags", opt.lags, "lags in cells")->delimiter(',');
  auto* peaks = app.add_subcommand("peaks", "peak concentration ratio");
  common(peaks);
  auto* rvcheck = app.add_subcommand("rvcheck", "slowly-varying integral check");
  common(rvcheck);
  rvcheck->add_option("--q", opt.rv_q);
  rvcheck->add_option("--eta", opt.rv_eta);
  rvcheck->add_option("--t", opt.rv_t)->delimiter(',');
  auto* picard = app.add_subcommand("picard", "pathwise Picard iteration");
  common(picard);
  picard->add_option("--iters", opt.iters);
  picard->add_option("--replicate", opt.replicate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    error_record(2, "usage", e.what());
    return 2;
  }

  m.command = app.get_subcommands().front()->get_name();
  std::error_code ec;
  fs::create_directories(m.output_dir, ec);
  Run run(m);
  try {
    json result;
    if (m.command == "simulate") result = cmd_simulate(run, opt);
    else if (m.command == "moments") result = cmd_moments(run, opt);
    else if (m.command == "oracle") result = cmd_oracle(run, opt);
    else if (m.command == "thresholds") result = cmd_thresholds(run, opt);
    else if (m.command == "support") result = cmd_support(run, opt);
    else if (m.command == "holder") result = cmd_holder(run, opt);
    else if (m.command == "peaks") result = cmd_peaks(run, opt);
    else if (m.command == "rvcheck") result = cmd_rvcheck(run, opt);
    else if (m.command == "picard") result = cmd_picard(run, opt);
    std::cout << result.dump() << "\n";
    return 0;
  } catch (const ConfigError& e) {
    run.remove_outputs();
    error_record(2, "config", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    run.remove_outputs();
    error_record(2, "config", e.what());
    return 2;
  } catch (const std::exception& e) {
    run.remove_outputs();
    error_record(3, "runtime", e.what());
    return 3;
  }
}
