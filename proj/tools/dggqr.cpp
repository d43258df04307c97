// dggqr command-line front end: fit, simulate, study, km.

#include <cstdio>
#include <sstream>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "dggqr/dggqr.hpp"

namespace fs = std::filesystem;
using namespace dggqr;

namespace {

std::vector<double> parse_grid(const std::string& text) {
  if (text == "default") return default_q_grid();
  std::vector<double> out;
  if (text.empty() || text == "none") return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = detail::parse_double(detail::trim(item));
    if (!v) throw ConfigError(fmt::format("'{}' in the q grid is not a number", item));
    out.push_back(*v);
  }
  return out;
}

std::map<std::string, std::string> parse_references(const std::vector<std::string>& items) {
  std::map<std::string, std::string> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError(fmt::format("--reference expects variable=level, got '{}'", item));
    }
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw OutputError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

struct ChainOptions {
  std::size_t iterations = 20000;
  std::size_t burn_in = 10000;
  std::size_t thin = 10;

  void add(CLI::App* app) {
    app->add_option("--iters", iterations, "Total sampler iterations per chain")->capture_default_str();
    app->add_option("--burnin", burn_in, "Discarded initial iterations")->capture_default_str();
    app->add_option("--thin", thin, "Keep every thin-th draw after burn-in")->capture_default_str();
  }

  ChainConfig config() const {
    ChainConfig c;
    c.iterations = iterations;
    c.burn_in = burn_in;
    c.thin = thin;
    return c;
  }
};

struct ScenarioOptions {
  SimScenario s;
  double pc0 = -1.0;
  double pc1 = -1.0;

  void add(CLI::App* app) {
    app->add_option("--alpha", s.alpha, "Defective scale alpha (< 0)")->capture_default_str();
    app->add_option("--lambda", s.lambda, "Scale lambda (> 0)")->capture_default_str();
    app->add_option("--beta0", s.beta0, "Intercept of log quantile")->capture_default_str();
    app->add_option("--beta1", s.beta1, "Effect of the binary covariate")->capture_default_str();
    app->add_option("--q", s.q, "Quantile level of the susceptibles")->capture_default_str();
    app->add_option("--pc0", pc0, "Censoring proportion at x=0 (default p0 + 0.10)");
    app->add_option("--pc1", pc1, "Censoring proportion at x=1 (default p0 + 0.05)");
    app->add_option("--seed", s.seed, "Random seed")->capture_default_str();
    app->add_option("--tau-pool", s.tau_pool, "Pool size for censoring calibration")->capture_default_str();
  }

  SimScenario scenario() const {
    SimScenario out = s;
    if (pc0 >= 0.0) out.pc0 = pc0;
    if (pc1 >= 0.0) out.pc1 = pc1;
    return out;
  }
};

nlohmann::ordered_json scenario_json(const ScenarioDesign& d) {
  const auto& s = d.scenario;
  return {{"alpha", s.alpha},
          {"lambda", s.lambda},
          {"beta0", s.beta0},
          {"beta1", s.beta1},
          {"q", s.q},
          {"seed", s.seed},
          {"tau_pool", s.tau_pool},
          {"theta", d.theta},
          {"p0", d.p0},
          {"pc", d.pc},
          {"tau", d.tau}};
}

// ---------------------------------------------------------------------------

struct FitOptions {
  std::string data;
  std::string time_col = "time";
  std::string status_col = "status";
  std::vector<std::string> covariates;
  std::vector<std::string> references;
  std::string grid = "default";
  std::string link = "quantile";
  ChainOptions chain;
  std::size_t chains = 1;
  std::uint64_t seed = 1;
  std::string out = "dggqr_out";
  double level = 0.95;
};

int run_fit(const FitOptions& o) {
  const auto loaded = load_csv(o.data, o.time_col, o.status_col, o.covariates, parse_references(o.references));
  FitConfig cfg;
  cfg.q_grid = parse_grid(o.grid);
  cfg.link = parse_link_mode(o.link);
  cfg.chain = o.chain.config();
  cfg.n_chains = o.chains;
  cfg.seed = o.seed;
  cfg.out_dir = o.out;
  cfg.level = o.level;
  cfg.validate();

  const auto& data = loaded.dataset;
  fmt::print(stderr, "{} subjects, {} events, {} coefficients; fitting {} quantile level(s)\n", data.size(),
             data.n_events(), data.n_coef(), cfg.q_grid.size());
  const auto fits = fit_quantile_grid(data, cfg);
  const auto files = write_outputs(fits, cfg, data, loaded.encoding, data.patterns());

  std::size_t failed = 0;
  for (const auto& f : fits) {
    if (f.failed) {
      ++failed;
      fmt::print(stderr, "q={}: FAILED ({})\n", f.q, f.failure);
    } else {
      fmt::print(stderr, "q={}: acceptance {:.3f}, max R-hat {:.3f}{}\n", f.q, f.sample.acceptance_rate,
                 f.report.max_rhat(), f.report.flagged ? " (flagged)" : "");
    }
  }
  fmt::print("wrote {} file(s) to {}\n", files.size(), cfg.out_dir);
  return failed == fits.size() && !fits.empty() ? 1 : 0;
}

int run_simulate(const ScenarioOptions& so, std::size_t n, const std::string& out, bool latent) {
  const ScenarioDesign d = prepare_scenario(so.scenario());
  std::mt19937_64 rng(derive_seed(d.scenario.seed, 0, 0xda7a));
  const SimulatedData sim = generate_dataset(d, n, rng);
  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!out.empty() && out != "-") {
    file = open_output(out);
    os = &file;
  }
  *os << (latent ? "time,status,x,cured,w,c\n" : "time,status,x\n");
  for (std::size_t i = 0; i < sim.latent.size(); ++i) {
    const auto& rec = sim.latent[i];
    *os << fmt::format("{},{},{}", sim.data.times()[i], sim.data.status()[i], rec.x);
    if (latent) *os << fmt::format(",{},{},{}", rec.cured ? 1 : 0, rec.w, rec.c);
    *os << '\n';
  }
  if (!*os) throw OutputError(fmt::format("error while writing '{}'", out));
  fmt::print(stderr, "p0 = ({:.4f}, {:.4f}), censoring targets = ({:.4f}, {:.4f}), tau = ({:.4f}, {:.4f})\n", d.p0[0],
             d.p0[1], d.pc[0], d.pc[1], d.tau[0], d.tau[1]);
  return 0;
}

int run_study_cmd(const ScenarioOptions& so, std::size_t replicates, const std::vector<std::size_t>& sizes,
                  const ChainOptions& co, const std::string& out) {
  const SimScenario scenario = so.scenario();
  const ChainConfig chain = co.config();
  ChainConfig check = chain;
  check.init = Eigen::VectorXd::Zero(4);
  check.validate();
  const ScenarioDesign design = prepare_scenario(scenario);
  const auto summaries = run_study(scenario, replicates, sizes, chain);

  const fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw OutputError(fmt::format("cannot create output directory '{}'", out));
  {
    auto f = open_output(dir / "study_summary.csv");
    f << "parameter,n,q,truth,mean_estimate,bias,mse,coverage_hpd,coverage_equal_tail,replicates,failures\n";
    for (const auto& s : summaries) {
      for (const auto& p : s.parameters) {
        f << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", p.name, s.n, s.q, p.truth, p.mean_estimate, p.bias,
                         p.mse, p.coverage_hpd, p.coverage_equal_tail, s.replicates, s.failures);
      }
    }
    if (!f) throw OutputError("error while writing study_summary.csv");
  }
  nlohmann::ordered_json m;
  m["format_version"] = kManifestFormat;
  m["tool"] = kToolName;
  m["version"] = kToolVersion;
  m["command"] = "study";
  m["scenario"] = scenario_json(design);
  m["replicates"] = replicates;
  m["sample_sizes"] = sizes;
  m["chain"] = {{"iterations", chain.iterations},
                {"burn_in", chain.burn_in},
                {"thin", chain.thin},
                {"adaptation_start", chain.adaptation_start},
                {"proposal_scale", chain.proposal_scale},
                {"jitter", chain.jitter}};
  auto& runs = m["summaries"] = nlohmann::ordered_json::array();
  bool ok = true;
  for (const auto& s : summaries) {
    runs.push_back({{"n", s.n}, {"failures", s.failures}, {"failure_rate_ok", s.failure_rate_ok()}});
    ok = ok && s.failure_rate_ok();
  }
  m["files"] = {"study_summary.csv", "study_manifest.json"};
  auto f = open_output(dir / "study_manifest.json");
  f << m.dump(2) << '\n';

  for (const auto& s : summaries) {
    fmt::print("n={} failures={}/{}\n", s.n, s.failures, s.replicates);
    for (const auto& p : s.parameters) {
      fmt::print("  {:<7} truth={:<9.4f} bias={:<+10.4f} mse={:<9.4f} cov_hpd={:.2f} cov_eq={:.2f}\n", p.name, p.truth,
                 p.bias, p.mse, p.coverage_hpd, p.coverage_equal_tail);
    }
  }
  if (!ok) fmt::print(stderr, "warning: dropped replicates reached 5% of B\n");
  return ok ? 0 : 1;
}

int run_km(const std::string& data, const std::string& time_col, const std::string& status_col,
           const std::string& group, const std::string& out) {
  const CsvTable table = read_csv(data);
  const std::size_t tc = table.column(time_col);
  const std::size_t sc = table.column(status_col);
  std::optional<std::size_t> gc;
  if (!group.empty()) gc = table.column(group);
  std::vector<double> times;
  std::vector<int> status;
  std::vector<std::string> groups;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    const auto t = detail::parse_double(r[tc]);
    const auto s = detail::parse_double(r[sc]);
    if (!t || !(*t > 0.0)) throw LoadError(fmt::format("row {}: bad time '{}'", table.line_numbers[i], r[tc]));
    if (!s || (*s != 0.0 && *s != 1.0)) {
      throw LoadError(fmt::format("row {}: status must be 0 or 1, got '{}'", table.line_numbers[i], r[sc]));
    }
    if (gc && r[*gc].empty()) throw LoadError(fmt::format("row {}: missing group", table.line_numbers[i]));
    times.push_back(*t);
    status.push_back(static_cast<int>(*s));
    groups.push_back(gc ? r[*gc] : std::string("all"));
  }
  std::vector<std::string> warnings;
  const auto curves = kaplan_meier(times, status, groups, {}, &warnings);
  for (const auto& w : warnings) fmt::print(stderr, "warning: {}\n", w);

  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!out.empty() && out != "-") {
    file = open_output(out);
    os = &file;
  }
  *os << "group,time,survival,at_risk,events,censored\n";
  for (const auto& c : curves) {
    for (std::size_t k = 0; k < c.time.size(); ++k) {
      *os << fmt::format("{},{},{},{},{},{}\n", csv_field(c.label), c.time[k], c.survival[k], c.at_risk[k], c.events[k],
                         c.censored[k]);
    }
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian quantile regression for survival data with a cure fraction (defective Gompertz)"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  FitOptions fo;
  auto* fit = app.add_subcommand("fit", "Fit the model on a CSV file across a grid of quantile levels");
  fit->add_option("--data", fo.data, "Input CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--time", fo.time_col, "Time column")->capture_default_str();
  fit->add_option("--status", fo.status_col, "Event indicator column (1 = event)")->capture_default_str();
  fit->add_option("--covariates", fo.covariates, "Covariate columns")->delimiter(',');
  fit->add_option("--reference", fo.references, "Reference level, variable=level (repeatable)");
  fit->add_option("--q-grid", fo.grid, "Comma list of quantile levels, 'default' (0.05..0.95) or 'none'")
      ->capture_default_str();
  fit->add_option("--link", fo.link, "Link target")->check(CLI::IsMember({"quantile", "theta"}))->capture_default_str();
  fo.chain.add(fit);
  fit->add_option("--chains", fo.chains, "Chains per quantile level")->capture_default_str();
  fit->add_option("--seed", fo.seed, "Random seed")->capture_default_str();
  fit->add_option("--out", fo.out, "Output directory")->capture_default_str();
  fit->add_option("--level", fo.level, "Credible level")->capture_default_str();

  ScenarioOptions sim_opts;
  std::size_t sim_n = 100;
  std::string sim_out;
  bool sim_latent = false;
  auto* simulate = app.add_subcommand("simulate", "Generate a dataset with one binary covariate");
  sim_opts.add(simulate);
  simulate->add_option("--n", sim_n, "Sample size")->capture_default_str();
  simulate->add_option("--out", sim_out, "Output CSV (stdout if omitted)");
  simulate->add_flag("--latent", sim_latent, "Also write cured, w and c");

  ScenarioOptions study_opts;
  ChainOptions study_chain;
  std::size_t replicates = 100;
  std::vector<std::size_t> sizes{100, 300, 1000};
  std::string study_out = "dggqr_study";
  auto* study = app.add_subcommand("study", "Monte Carlo study: bias, MSE and interval coverage");
  study_opts.add(study);
  study_chain.add(study);
  study->add_option("--replicates", replicates, "Replicates per sample size (B)")->capture_default_str();
  study->add_option("--sample-sizes", sizes, "Comma list of sample sizes")->delimiter(',')->capture_default_str();
  study->add_option("--out", study_out, "Output directory")->capture_default_str();

  std::string km_data, km_time = "time", km_status = "status", km_group, km_out;
  auto* km = app.add_subcommand("km", "Kaplan-Meier estimates, optionally by group");
  km->add_option("--data", km_data, "Input CSV")->required()->check(CLI::ExistingFile);
  km->add_option("--time", km_time, "Time column")->capture_default_str();
  km->add_option("--status", km_status, "Event indicator column")->capture_default_str();
  km->add_option("--group", km_group, "Grouping column");
  km->add_option("--out", km_out, "Output CSV (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) return run_fit(fo);
    if (*simulate) return run_simulate(sim_opts, sim_n, sim_out, sim_latent);
    if (*study) return run_study_cmd(study_opts, replicates, sizes, study_chain, study_out);
    if (*km) return run_km(km_data, km_time, km_status, km_group, km_out);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "configuration error: {}\n", e.what());
    return 2;
  } catch (const ScenarioError& e) {
    fmt::print(stderr, "scenario error: {}\n", e.what());
    return 2;
  } catch (const LoadError& e) {
    fmt::print(stderr, "load error: {}\n", e.what());
    return 3;
  } catch (const OutputError& e) {
    fmt::print(stderr, "output error: {}\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
