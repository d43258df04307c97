#pragma once

// Run artifacts of a grid fit. All files go to FitConfig::out_dir:
//
//   draws_q<q>.csv     one row per retained draw; columns are the
//                      coefficient names, then lambda, alpha
//   summary.csv        parameter,q,mean,hpd_low,hpd_high,eq_low,eq_high
//   curves.csv         pattern,label,q,mean,hpd_low,hpd_high,eq_low,eq_high
//                      (posterior of the susceptible q-quantile)
//   cure_fraction.csv  pattern,label,q,mean,hpd_low,hpd_high,eq_low,eq_high
//   manifest.json      configuration, seeds, per-q status, crossing report
//
// Numbers are written in shortest round-trip form, so reading a file back
// reproduces the doubles exactly. Nothing time- or host-dependent is
// written, so identical inputs give byte-identical files.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dggqr/csv.hpp"
#include "dggqr/errors.hpp"
#include "dggqr/fit.hpp"
#include "dggqr/model.hpp"

namespace dggqr {

inline constexpr const char* kToolName = "dggqr";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kManifestFormat = 1;

struct SummaryRow {
  std::string parameter;
  double q = 0.0;
  double mean = 0.0;
  double hpd_low = 0.0;
  double hpd_high = 0.0;
  double eq_low = 0.0;
  double eq_high = 0.0;

  bool operator==(const SummaryRow&) const = default;
};

struct DrawsTable {
  std::vector<std::string> names;
  Eigen::MatrixXd draws;
};

inline std::string draws_file_name(double q) { return fmt::format("draws_q{}.csv", q); }

/// Coefficient names followed by lambda and alpha.
inline std::vector<std::string> parameter_names(const EncodingReport& encoding) {
  auto names = encoding.names();
  names.emplace_back("lambda");
  names.emplace_back("alpha");
  return names;
}

/// Encoding report for an all-numeric design with the given column names
/// (intercept excluded).
inline EncodingReport numeric_encoding(const std::vector<std::string>& covariates) {
  EncodingReport rep;
  rep.coefficients.push_back({"(Intercept)", "(Intercept)", "", false});
  for (const auto& c : covariates) rep.coefficients.push_back({c, c, "", false});
  return rep;
}

namespace detail {

class OutFile {
public:
  explicit OutFile(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw OutputError(fmt::format("cannot write '{}'", path.string()));
  }
  std::ofstream& stream() { return out_; }
  void close() {
    out_.close();
    if (!out_) throw OutputError(fmt::format("error while writing '{}'", path_.string()));
  }

private:
  std::filesystem::path path_;
  std::ofstream out_;
};

inline void write_row(std::ofstream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << csv_field(fields[i]);
  }
  out << '\n';
}

inline double parse_cell(const std::string& s, const std::string& path, std::size_t line) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  auto v = parse_double(s);
  if (!v) throw LoadError(fmt::format("'{}' line {}: '{}' is not a number", path, line, s));
  return *v;
}

inline void write_interval_table(const std::filesystem::path& path, const std::vector<std::size_t>& pattern,
                                 const std::vector<std::string>& label, const std::vector<double>& q,
                                 const std::vector<double>& mean, const std::vector<CredibleInterval>& hpd,
                                 const std::vector<CredibleInterval>& eq) {
  OutFile f(path);
  write_row(f.stream(), {"pattern", "label", "q", "mean", "hpd_low", "hpd_high", "eq_low", "eq_high"});
  for (std::size_t i = 0; i < q.size(); ++i) {
    write_row(f.stream(), {fmt::format("{}", pattern[i]), label[i], fmt::format("{}", q[i]),
                           fmt::format("{}", mean[i]), fmt::format("{}", hpd[i].lower),
                           fmt::format("{}", hpd[i].upper), fmt::format("{}", eq[i].lower),
                           fmt::format("{}", eq[i].upper)});
  }
  f.close();
}

} // namespace detail

/// Writes the run artifacts listed at the top of this header and returns
/// the file names written. Failed fits appear only in the manifest.
inline std::vector<std::string> write_outputs(const std::vector<QuantileFit>& fits, const FitConfig& config,
                                              const SurvivalDataset& data, const EncodingReport& encoding,
                                              const Eigen::MatrixXd& patterns) {
  namespace fs = std::filesystem;
  const fs::path dir(config.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw OutputError(fmt::format("cannot create output directory '{}': {}", dir.string(), ec.message()));
  }
  const auto names = parameter_names(encoding);
  std::vector<std::string> written;

  std::vector<std::string> pattern_labels;
  for (Eigen::Index p = 0; p < patterns.rows(); ++p) pattern_labels.push_back(encoding.label(patterns.row(p).transpose()));

  bool any_ok = false;
  for (const auto& fit : fits) any_ok = any_ok || !fit.failed;

  const auto curves = quantile_curves(fits, patterns, config.level);
  const CrossingReport crossing = crossing_report(curves);

  if (any_ok) {
    for (const auto& fit : fits) {
      if (fit.failed) continue;
      const auto file = draws_file_name(fit.q);
      detail::OutFile f(dir / file);
      detail::write_row(f.stream(), names);
      for (Eigen::Index m = 0; m < fit.sample.size(); ++m) {
        std::vector<std::string> row;
        for (Eigen::Index j = 0; j < fit.sample.dim(); ++j) row.push_back(fmt::format("{}", fit.sample.draws(m, j)));
        detail::write_row(f.stream(), row);
      }
      f.close();
      written.push_back(file);
    }

    {
      detail::OutFile f(dir / "summary.csv");
      detail::write_row(f.stream(), {"parameter", "q", "mean", "hpd_low", "hpd_high", "eq_low", "eq_high"});
      for (const auto& fit : fits) {
        if (fit.failed) continue;
        for (std::size_t j = 0; j < names.size(); ++j) {
          detail::write_row(f.stream(),
                            {names[j], fmt::format("{}", fit.q), fmt::format("{}", fit.mean(static_cast<Eigen::Index>(j))),
                             fmt::format("{}", fit.hpd[j].lower), fmt::format("{}", fit.hpd[j].upper),
                             fmt::format("{}", fit.equal_tail[j].lower), fmt::format("{}", fit.equal_tail[j].upper)});
        }
      }
      f.close();
      written.emplace_back("summary.csv");
    }

    {
      std::vector<std::size_t> pat;
      std::vector<std::string> lab;
      std::vector<double> q, mean;
      std::vector<CredibleInterval> hpd, eq;
      for (const auto& c : curves) {
        pat.push_back(c.pattern);
        lab.push_back(pattern_labels[c.pattern]);
        q.push_back(c.q);
        mean.push_back(c.mean);
        hpd.push_back(c.hpd);
        eq.push_back(c.equal_tail);
      }
      detail::write_interval_table(dir / "curves.csv", pat, lab, q, mean, hpd, eq);
      written.emplace_back("curves.csv");
    }

    {
      std::vector<std::size_t> pat;
      std::vector<std::string> lab;
      std::vector<double> q, mean;
      std::vector<CredibleInterval> hpd, eq;
      for (std::size_t p = 0; p < static_cast<std::size_t>(patterns.rows()); ++p) {
        for (const auto& fit : fits) {
          if (fit.failed || p >= fit.cure_fraction.size()) continue;
          pat.push_back(p);
          lab.push_back(pattern_labels[p]);
          q.push_back(fit.q);
          mean.push_back(mean_of(fit.cure_fraction[p]));
          hpd.push_back(hpd_interval(fit.cure_fraction[p], config.level));
          eq.push_back(equal_tail_interval(fit.cure_fraction[p], config.level));
        }
      }
      detail::write_interval_table(dir / "cure_fraction.csv", pat, lab, q, mean, hpd, eq);
      written.emplace_back("cure_fraction.csv");
    }
  }

  written.emplace_back("manifest.json");
  nlohmann::ordered_json m;
  m["format_version"] = kManifestFormat;
  m["tool"] = kToolName;
  m["version"] = kToolVersion;
  m["command"] = "fit";
  m["seed"] = config.seed;
  m["link"] = to_string(config.link);
  m["level"] = config.level;
  m["q_grid"] = config.q_grid;
  m["chain"] = {{"iterations", config.chain.iterations},
                {"burn_in", config.chain.burn_in},
                {"thin", config.chain.thin},
                {"chains", config.n_chains},
                {"adaptation_start", config.chain.adaptation_start},
                {"proposal_scale", config.chain.proposal_scale},
                {"jitter", config.chain.jitter}};
  m["priors"] = {{"alpha_mean", config.priors.alpha_mean},     {"alpha_var", config.priors.alpha_var},
                 {"lambda_shape", config.priors.lambda_shape}, {"lambda_rate", config.priors.lambda_rate},
                 {"beta_mean", config.priors.beta_mean},       {"beta_var", config.priors.beta_var}};
  m["data"] = {{"n", data.size()}, {"events", data.n_events()}, {"parameters", names}};
  auto& pats = m["patterns"] = nlohmann::ordered_json::array();
  for (Eigen::Index p = 0; p < patterns.rows(); ++p) {
    std::vector<double> x(patterns.row(p).begin(), patterns.row(p).end());
    pats.push_back({{"index", p}, {"label", pattern_labels[static_cast<std::size_t>(p)]}, {"x", x}});
  }
  auto& fj = m["fits"] = nlohmann::ordered_json::array();
  std::size_t failures = 0;
  for (const auto& fit : fits) {
    nlohmann::ordered_json e;
    e["q"] = fit.q;
    e["seed"] = fit.seed;
    e["status"] = fit.failed ? "failed" : "ok";
    e["failure"] = fit.failure;
    if (!fit.failed) {
      e["draws"] = fit.sample.size();
      e["acceptance_rate"] = fit.sample.acceptance_rate;
      e["max_rhat"] = fit.report.max_rhat();
      e["rhat_flagged"] = fit.report.flagged;
      e["draws_file"] = draws_file_name(fit.q);
    } else {
      ++failures;
    }
    fj.push_back(e);
  }
  m["failures"] = failures;
  m["crossing"] = {{"violations", crossing.violations},
                   {"max_violation", crossing.max_violation},
                   {"max_relative_violation", crossing.max_relative_violation}};
  m["files"] = written;

  detail::OutFile f(dir / "manifest.json");
  f.stream() << m.dump(2) << '\n';
  f.close();
  return written;
}

inline std::vector<SummaryRow> read_summary_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::vector<std::string> expected{"parameter", "q", "mean", "hpd_low", "hpd_high", "eq_low", "eq_high"};
  if (t.header != expected) throw LoadError(fmt::format("'{}': unexpected summary header", path));
  std::vector<SummaryRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const auto line = t.line_numbers[i];
    out.push_back({r[0], detail::parse_cell(r[1], path, line), detail::parse_cell(r[2], path, line),
                   detail::parse_cell(r[3], path, line), detail::parse_cell(r[4], path, line),
                   detail::parse_cell(r[5], path, line), detail::parse_cell(r[6], path, line)});
  }
  return out;
}

inline DrawsTable read_draws_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  DrawsTable out;
  out.names = t.header;
  out.draws.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < t.header.size(); ++j) {
      out.draws(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          detail::parse_cell(t.rows[i][j], path, t.line_numbers[i]);
    }
  }
  return out;
}

/// Summary rows in the order write_outputs emits them.
inline std::vector<SummaryRow> summary_rows(const std::vector<QuantileFit>& fits, const EncodingReport& encoding) {
  const auto names = parameter_names(encoding);
  std::vector<SummaryRow> out;
  for (const auto& fit : fits) {
    if (fit.failed) continue;
    for (std::size_t j = 0; j < names.size(); ++j) {
      out.push_back({names[j], fit.q, fit.mean(static_cast<Eigen::Index>(j)), fit.hpd[j].lower, fit.hpd[j].upper,
                     fit.equal_tail[j].lower, fit.equal_tail[j].upper});
    }
  }
  return out;
}

} // namespace dggqr
