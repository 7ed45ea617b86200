#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "sbart/io.hpp"
#include "sbart/mcmc.hpp"
#include "sbart/sim.hpp"

namespace sbart {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kPatternTolDefault = 1e-10;

// ---------------------------------------------------------------------------
// config file handling: a flat JSON object whose keys are the long option
// names. Values seed the option defaults, so explicit flags always win.

json load_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a == "--config" && i + 1 < args.size())
      path = args[i + 1];
    else if (a.rfind("--config=", 0) == 0)
      path = a.substr(9);
  }
  if (path.empty()) return json::object();
  json cfg;
  try {
    cfg = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": config parse error: " + e.what());
  }
  if (!cfg.is_object()) throw ValidationError(path + ": config must be a JSON object");
  return cfg;
}

template <typename T>
void cfg_get(const json& cfg, const std::string& key, T& out) {
  if (!cfg.contains(key)) return;
  try {
    out = cfg.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key '" + key + "' has the wrong type");
  }
}

// ---------------------------------------------------------------------------
// shared pieces

struct CommonOpts {
  std::string config_path;  // consumed early; registered so CLI11 accepts it
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out = ".";
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts& c, const json& cfg) {
  cfg_get(cfg, "seed", c.seed);
  c.seed_given = cfg.contains("seed");
  cfg_get(cfg, "out", c.out);
  cfg_get(cfg, "threads", c.threads);
  cmd->add_option("--config", c.config_path, "JSON config file; flags override its values");
  auto* seed_opt = cmd->add_option("--seed", c.seed, "random seed (required)");
  seed_opt->each([&c](const std::string&) { c.seed_given = true; });
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--threads", c.threads, "worker threads for replica-parallel commands");
}

void require_seed(const CommonOpts& c) {
  if (!c.seed_given)
    throw ValidationError("a seed is required (--seed or config key \"seed\")");
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory '" + out + "': " + ec.message());
}

std::string out_path(const CommonOpts& c, const std::string& name) {
  return (fs::path(c.out) / name).string();
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& rows, const std::string& what) {
  if (!rows.is_array() || rows.empty())
    throw ValidationError(what + ": expected a non-empty array of rows");
  const std::size_t n = rows.size();
  const std::size_t p = rows.front().size();
  Matrix m(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != p) throw ValidationError(what + ": ragged rows");
    for (std::size_t j = 0; j < p; ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

SpdMatrix load_scale(const std::string& arg, int p) {
  if (arg == "identity") return SpdMatrix::identity(p);
  const Matrix m = read_matrix_csv(arg);
  if (m.rows() != m.cols()) throw ValidationError(arg + ": scale matrix must be square");
  if (p > 0 && m.rows() != p)
    throw ValidationError(arg + ": scale dimension does not match the data");
  return SpdMatrix::from_symmetric(m);
}

/// Pattern argument: identity | full | band:W | random:A | CSV path.
struct PatternArg {
  enum class Kind { identity, full, band, random, file } kind = Kind::full;
  int width = 1;
  double alpha = 0.0;
  std::string path;
};

PatternArg parse_pattern_arg(const std::string& s) {
  PatternArg a;
  if (s == "identity") {
    a.kind = PatternArg::Kind::identity;
  } else if (s == "full") {
    a.kind = PatternArg::Kind::full;
  } else if (s.rfind("band:", 0) == 0) {
    a.kind = PatternArg::Kind::band;
    try {
      a.width = std::stoi(s.substr(5));
    } catch (...) {
      throw ValidationError("pattern '" + s + "': band width must be an integer");
    }
  } else if (s.rfind("random:", 0) == 0) {
    a.kind = PatternArg::Kind::random;
    try {
      a.alpha = std::stod(s.substr(7));
    } catch (...) {
      throw ValidationError("pattern '" + s + "': sparsity proportion must be a number");
    }
  } else if (fs::exists(s)) {
    a.kind = PatternArg::Kind::file;
    a.path = s;
  } else {
    throw ValidationError("unknown pattern '" + s +
                          "': expected identity, full, band:W, random:ALPHA, "
                          "or a CSV file path");
  }
  return a;
}

SparsityPattern materialize_pattern(const PatternArg& a, int p, Rng& rng) {
  switch (a.kind) {
    case PatternArg::Kind::identity:
      return SparsityPattern::identity(p);
    case PatternArg::Kind::full:
      return SparsityPattern::full(p);
    case PatternArg::Kind::band: {
      if (a.width < 1 || a.width >= p)
        throw ValidationError("band width must satisfy 1 <= w < p");
      SparsityPattern z(p);
      for (int k = 0; k < p; ++k)
        for (int j = k + 1; j <= std::min(k + a.width, p - 1); ++j) z.set(j, k, true);
      return z;
    }
    case PatternArg::Kind::random: {
      if (!(a.alpha >= 0.0 && a.alpha < 1.0))
        throw ValidationError("sparsity proportion must be in [0,1)");
      SparsityPattern z(p);
      for (int k = 0; k < p - 1; ++k)
        for (int j = k + 1; j < p; ++j)
          if (rng.uniform() >= a.alpha) z.set(j, k, true);
      return z;
    }
    case PatternArg::Kind::file:
      return read_pattern_csv(a.path);
  }
  throw ValidationError("unreachable pattern kind");
}

std::string lower_triangle_csv_row(const Matrix& m) {
  std::string line;
  for (Eigen::Index j = 0; j < m.rows(); ++j)
    for (Eigen::Index k = 0; k <= j; ++k) {
      if (!line.empty()) line.push_back(',');
      line += format_double(m(j, k));
    }
  return line;
}

std::string z_bits(const SparsityPattern& z) {
  std::string bits;
  bits.reserve(z.dim() * (z.dim() - 1) / 2);
  for (int j = 1; j < z.dim(); ++j)
    for (int k = 0; k < j; ++k) bits.push_back(z(j, k) ? '1' : '0');
  return bits;
}

std::string edge_interval_string(double mean, double lo, double hi) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%lld (%lld, %lld)", std::llround(mean),
                std::llround(lo), std::llround(hi));
  return buf;
}

Family parse_family(const std::string& s) {
  if (s == "gaussian") return Family::gaussian;
  if (s == "poisson") return Family::poisson;
  throw ValidationError("unknown family '" + s + "': expected gaussian or poisson");
}

// ---------------------------------------------------------------------------
// sample-prior

struct SamplePriorOpts {
  CommonOpts common;
  int p = 0;
  double nu = 3.0;
  std::string scale = "identity";
  std::string pattern = "full";
  long long draws = 100;
  bool emit_q = false;
};

int cmd_sample_prior(const SamplePriorOpts& o) {
  require_seed(o.common);
  if (o.draws < 1) throw ValidationError("--draws must be >= 1");
  Rng rng(o.common.seed);

  const PatternArg parg = parse_pattern_arg(o.pattern);
  SparsityPattern z =
      parg.kind == PatternArg::Kind::file
          ? read_pattern_csv(parg.path)
          : [&] {
              if (o.p < 1)
                throw ValidationError("--p is required for generated patterns");
              return materialize_pattern(parg, o.p, rng);
            }();
  const int p = z.dim();
  if (o.p > 0 && o.p != p)
    throw ValidationError("--p does not match the pattern file dimension");
  const SBartlettParams params = SBartlettParams::from_scale(load_scale(o.scale, p), o.nu);

  json config{{"command", "sample-prior"}, {"p", p},       {"nu", o.nu},
              {"scale", o.scale},          {"pattern", o.pattern},
              {"draws", o.draws},          {"seed", o.common.seed},
              {"emit_q", o.emit_q}};

  ensure_out_dir(o.common.out);
  std::ofstream draws_out(out_path(o.common, "draws.csv"), std::ios::binary);
  if (!draws_out) throw IoError("cannot open draws.csv for writing");
  draws_out << "# config: " << config.dump() << "\n";
  std::optional<std::ofstream> q_out;
  if (o.emit_q) {
    q_out.emplace(out_path(o.common, "q_draws.csv"), std::ios::binary);
    if (!*q_out) throw IoError("cannot open q_draws.csv for writing");
    *q_out << "# config: " << config.dump() << "\n";
  }

  Matrix mean = Matrix::Zero(p, p);
  double max_forced_rel = 0.0;
  double min_pivot = std::numeric_limits<double>::infinity();
  bool pattern_ok = true;
  for (long long rep = 0; rep < o.draws; ++rep) {
    const CholFactor q = sample_prior(params, z, rng);
    const Matrix lam = chol_product(q).matrix();
    mean += lam;
    const double scale = lam.diagonal().maxCoeff();
    for (int k = 0; k < p - 1; ++k)
      for (int j = k + 1; j < p; ++j)
        if (!z(j, k))
          max_forced_rel = std::max(max_forced_rel, std::abs(lam(j, k)) / scale);
    for (int k = 0; k < p; ++k) min_pivot = std::min(min_pivot, q(k, k));
    pattern_ok = pattern_ok && (pattern_of(chol_product(q), kPatternTolDefault)
                                    .edge_count() <= z.edge_count());
    draws_out << lower_triangle_csv_row(lam) << "\n";
    if (q_out) *q_out << lower_triangle_csv_row(q.matrix()) << "\n";
  }
  mean /= static_cast<double>(o.draws);
  if (!draws_out) throw IoError("write failed: draws.csv");

  json verify{{"config", config},
              {"mean_lambda", matrix_to_json(mean)},
              {"max_forced_abs_rel", max_forced_rel},
              {"min_pivot", min_pivot},
              {"pattern_ok", pattern_ok},
              {"pattern_edgeset", z_bits(z)}};
  write_text_file(out_path(o.common, "verify.json"), verify.dump(2) + "\n");
  std::cout << "sample-prior: " << o.draws << " draws, p = " << p
            << ", max forced |lambda|/maxdiag = " << max_forced_rel << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit

struct FitOpts {
  CommonOpts common;
  std::string data;
  std::string family = "gaussian";
  int iterations = 10000;
  int burnin = 8000;
  int thin = 1;
  double nu = 3.0;
  std::string scale = "identity";
  double pi = 0.5;
  double holdout = 0.0;
  int nuts_madapt = 10;
  double nuts_delta = 0.5;
  int max_tree_depth = 10;
  double step_size = 0.0;
  bool no_intercepts = false;
  bool randomized_sweep = false;
  double threshold = 0.5;
};

json fit_config(const FitOpts& o) {
  return json{{"command", "fit"},
              {"data", o.data},
              {"family", o.family},
              {"iterations", o.iterations},
              {"burnin", o.burnin},
              {"thin", o.thin},
              {"nu", o.nu},
              {"scale", o.scale},
              {"pi", o.pi},
              {"holdout", o.holdout},
              {"nuts_madapt", o.nuts_madapt},
              {"nuts_delta", o.nuts_delta},
              {"max_tree_depth", o.max_tree_depth},
              {"step_size", o.step_size},
              {"intercepts", !o.no_intercepts},
              {"randomized_sweep", o.randomized_sweep},
              {"threshold", o.threshold},
              {"seed", o.common.seed}};
}

int cmd_fit(const FitOpts& o) {
  require_seed(o.common);
  if (o.data.empty()) throw ValidationError("--data is required");
  if (!(o.holdout >= 0.0 && o.holdout < 1.0))
    throw ValidationError("--holdout must be in [0,1)");

  const DataCsv data = read_data_csv(o.data);
  const int n = static_cast<int>(data.y.rows());
  const int p = static_cast<int>(data.y.cols());

  ModelSpec model;
  model.family = parse_family(o.family);
  model.y = data.y;
  model.observed = data.observed;
  model.pi = Matrix::Constant(p, p, o.pi);
  model.prior = SBartlettParams::from_scale(load_scale(o.scale, p), o.nu);
  model.fit_intercepts = !o.no_intercepts;

  // optional holdout: mask additional observed cells, remember the truth
  std::vector<std::pair<int, int>> holdout_cells;
  if (o.holdout > 0.0) {
    std::vector<std::pair<int, int>> observed_cells;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j)
        if (model.observed(i, j)) observed_cells.emplace_back(i, j);
    const long long m =
        std::llround(o.holdout * static_cast<double>(observed_cells.size()));
    Rng hold_rng(o.common.seed ^ 0x9e3779b97f4a7c15ull);
    for (long long c = 0; c < m; ++c) {
      const long long pick =
          c + hold_rng.uniform_int(static_cast<int>(observed_cells.size() - c));
      std::swap(observed_cells[c], observed_cells[pick]);
      holdout_cells.push_back(observed_cells[c]);
      model.observed(observed_cells[c].first, observed_cells[c].second) = false;
    }
    std::sort(holdout_cells.begin(), holdout_cells.end());
  }
  model.validate();

  ChainOptions opts;
  opts.iterations = o.iterations;
  opts.burn_in = o.burnin;
  opts.thinning = o.thin;
  opts.seed = o.common.seed;
  opts.nuts.m_adapt = o.nuts_madapt;
  opts.nuts.delta = o.nuts_delta;
  opts.nuts.max_tree_depth = o.max_tree_depth;
  opts.nuts.initial_step = o.step_size;
  opts.randomized_sweep = o.randomized_sweep;

  const json config = fit_config(o);
  ensure_out_dir(o.common.out);
  std::ofstream records(out_path(o.common, "records.ndjson"), std::ios::binary);
  if (!records) throw IoError("cannot open records.ndjson for writing");
  records << json{{"type", "header"}, {"config", config}}.dump() << "\n";

  const auto cells = model.missing_cells();
  SummaryAccumulator acc;
  std::vector<std::vector<double>> draws(cells.size());
  const ChainDiagnostics diag =
      run_chain(model, opts, [&](const SampleRecord& rec) {
        acc.add(rec);
        json line{{"type", "sample"},
                  {"iteration", rec.iteration},
                  {"edges", rec.edge_count},
                  {"log_posterior", rec.log_posterior},
                  {"z", z_bits(rec.z)}};
        json lower = json::array();
        for (int j = 0; j < p; ++j)
          for (int k = 0; k <= j; ++k) lower.push_back(rec.lambda(j, k));
        line["lambda_lower"] = std::move(lower);
        json imputed = json::array();
        for (Eigen::Index c = 0; c < rec.imputed.size(); ++c)
          imputed.push_back(rec.imputed(c));
        line["imputed"] = std::move(imputed);
        records << line.dump() << "\n";
        for (std::size_t c = 0; c < cells.size(); ++c)
          draws[c].push_back(rec.imputed(c));
      });
  if (!records) throw IoError("write failed: records.ndjson");
  records.close();

  const PosteriorSummary summary = acc.finalize(o.threshold);

  // predictive draws for every missing cell, long format
  if (!cells.empty()) {
    std::ofstream pred(out_path(o.common, "predictive.csv"), std::ios::binary);
    if (!pred) throw IoError("cannot open predictive.csv for writing");
    pred << "# config: " << config.dump() << "\n";
    pred << "row,col,draw_index,value\n";
    for (std::size_t c = 0; c < cells.size(); ++c)
      for (std::size_t d = 0; d < draws[c].size(); ++d)
        pred << cells[c].first << ',' << cells[c].second << ',' << d << ','
             << format_double(draws[c][d]) << "\n";
    if (!pred) throw IoError("write failed: predictive.csv");
  }

  // CRPS against the withheld truth
  double crps_mean = std::numeric_limits<double>::quiet_NaN();
  if (!holdout_cells.empty()) {
    std::ofstream crps_out(out_path(o.common, "crps.csv"), std::ios::binary);
    if (!crps_out) throw IoError("cannot open crps.csv for writing");
    crps_out << "# config: " << config.dump() << "\n";
    crps_out << "row,col,truth,crps\n";
    double total = 0.0;
    for (const auto& cell : holdout_cells) {
      const std::size_t c = static_cast<std::size_t>(
          std::lower_bound(cells.begin(), cells.end(), cell) - cells.begin());
      const double truth = data.y(cell.first, cell.second);
      const double v = crps_empirical(draws[c], truth);
      total += v;
      crps_out << cell.first << ',' << cell.second << ',' << format_double(truth)
               << ',' << format_double(v) << "\n";
    }
    crps_mean = total / static_cast<double>(holdout_cells.size());
    if (!crps_out) throw IoError("write failed: crps.csv");
  }

  json sj{{"config", config},
          {"n", n},
          {"p", p},
          {"n_samples", summary.n_samples},
          {"lambda_hat", matrix_to_json(summary.lambda_hat)},
          {"zhat", matrix_to_json(summary.zhat)},
          {"z_decided", matrix_to_json(summary.z_decided.to_matrix())},
          {"edge_count",
           {{"mean", summary.edge_count_mean},
            {"lo", summary.edge_count_lo},
            {"hi", summary.edge_count_hi},
            {"display", edge_interval_string(summary.edge_count_mean,
                                             summary.edge_count_lo,
                                             summary.edge_count_hi)}}},
          {"diagnostics",
           {{"divergences", diag.divergences_b},
            {"post_adapt_divergences", diag.post_adapt_divergences_b},
            {"step_size", diag.step_size_b},
            {"mean_accept", diag.mean_accept_b},
            {"latent_divergences", diag.divergences_w},
            {"intercept_accept_rate", diag.mu_accept_rate}}}};
  if (!std::isnan(crps_mean)) sj["crps_mean"] = crps_mean;
  write_text_file(out_path(o.common, "summary.json"), sj.dump(2) + "\n");

  std::cout << "fit: " << summary.n_samples << " samples, edges "
            << edge_interval_string(summary.edge_count_mean, summary.edge_count_lo,
                                    summary.edge_count_hi);
  if (!std::isnan(crps_mean)) std::cout << ", holdout CRPS " << crps_mean;
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOpts {
  CommonOpts common;
  int p = 10;
  std::string pattern = "band:1";
  std::string family = "gaussian";
  int n = 100;
  double mu = 0.0;
  double pmiss = 0.0;
  int replicas = 20;
  int iterations = 10000;
  int burnin = 8000;
  int thin = 1;
  double nu = 3.0;
  double pi = 0.5;
  int nuts_madapt = 10;
  double nuts_delta = 0.5;
  int max_tree_depth = 10;
  bool rowwise_missing = false;
};

int cmd_simulate(const SimulateOpts& o) {
  require_seed(o.common);
  const PatternArg parg = parse_pattern_arg(o.pattern);
  SimScenario sc;
  sc.p = o.p;
  switch (parg.kind) {
    case PatternArg::Kind::band:
      sc.pattern.kind = PatternSpec::Kind::band;
      sc.pattern.width = parg.width;
      break;
    case PatternArg::Kind::random:
      sc.pattern.kind = PatternSpec::Kind::random;
      sc.pattern.alpha = parg.alpha;
      break;
    default:
      throw ValidationError("simulate patterns must be band:W or random:ALPHA");
  }
  sc.n = o.n;
  sc.family = parse_family(o.family);
  sc.mu = o.mu;
  sc.pmiss = o.pmiss;
  sc.replicas = o.replicas;
  sc.seed = o.common.seed;
  sc.nu = o.nu;
  sc.pi = o.pi;
  sc.rowwise_missing = o.rowwise_missing;
  sc.validate();

  ChainOptions opts;
  opts.iterations = o.iterations;
  opts.burn_in = o.burnin;
  opts.thinning = o.thin;
  opts.nuts.m_adapt = o.nuts_madapt;
  opts.nuts.delta = o.nuts_delta;
  opts.nuts.max_tree_depth = o.max_tree_depth;

  const StudyResult study = run_study(sc, opts, o.common.threads);

  json config{{"command", "simulate"}, {"p", o.p},
              {"pattern", o.pattern},  {"family", o.family},
              {"n", o.n},              {"mu", o.mu},
              {"pmiss", o.pmiss},      {"replicas", o.replicas},
              {"iterations", o.iterations}, {"burnin", o.burnin},
              {"thin", o.thin},        {"nu", o.nu},
              {"pi", o.pi},            {"nuts_madapt", o.nuts_madapt},
              {"nuts_delta", o.nuts_delta}, {"rowwise_missing", o.rowwise_missing},
              {"seed", o.common.seed}, {"threads", o.common.threads}};

  ensure_out_dir(o.common.out);
  {
    std::ostringstream t;
    t << "# config: " << config.dump() << "\n";
    t << "replica,seed,ok,error,sensitivity,specificity,kl,crps,edge_mean,edge_lo,edge_hi\n";
    for (const ReplicaReport& rep : study.replicas) {
      std::string err = rep.error;
      for (char& ch : err)
        if (ch == ',' || ch == '\n') ch = ';';
      t << rep.replica << ',' << rep.seed << ',' << (rep.ok ? 1 : 0) << ',' << err;
      if (rep.ok) {
        t << ',' << format_double(rep.eval.sensitivity) << ','
          << format_double(rep.eval.specificity) << ','
          << format_double(rep.eval.kl_discrepancy) << ','
          << format_double(rep.eval.crps_mean) << ','
          << format_double(rep.eval.edge_count_mean) << ','
          << format_double(rep.eval.edge_count_lo) << ','
          << format_double(rep.eval.edge_count_hi) << "\n";
      } else {
        t << ",,,,,,,\n";
      }
    }
    write_text_file(out_path(o.common, "replicas.csv"), t.str());
  }
  {
    std::ostringstream t;
    t << "# config: " << config.dump() << "\n";
    t << "metric,mean,median,q025,q975\n";
    const auto row = [&](const char* name, const MetricAggregate& a) {
      t << name << ',' << format_double(a.mean) << ',' << format_double(a.median)
        << ',' << format_double(a.lo) << ',' << format_double(a.hi) << "\n";
    };
    row("sensitivity", study.aggregate.sensitivity);
    row("specificity", study.aggregate.specificity);
    row("kl", study.aggregate.kl);
    row("crps", study.aggregate.crps);
    row("edges", study.aggregate.edges);
    t << "n_ok," << study.aggregate.n_ok << ",,,\n";
    write_text_file(out_path(o.common, "aggregate.csv"), t.str());
  }

  std::cout << "simulate: " << study.aggregate.n_ok << "/" << sc.replicas
            << " replicas ok; mean CRPS " << study.aggregate.crps.mean
            << ", median sensitivity " << study.aggregate.sensitivity.median
            << ", median KL " << study.aggregate.kl.median << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOpts {
  CommonOpts common;
  std::string truth_lambda;
  std::string truth_pattern;
  std::string summary;
  double pattern_tol = kPatternTolDefault;
  std::string kl_orientation = "estimated-vs-true";
};

int cmd_evaluate(const EvaluateOpts& o) {
  require_seed(o.common);
  if (o.truth_lambda.empty() || o.summary.empty())
    throw ValidationError("--truth-lambda and --summary are required");
  KlOrientation orient;
  if (o.kl_orientation == "estimated-vs-true")
    orient = KlOrientation::estimated_vs_true;
  else if (o.kl_orientation == "true-vs-estimated")
    orient = KlOrientation::true_vs_estimated;
  else
    throw ValidationError("--kl-orientation must be estimated-vs-true or true-vs-estimated");

  const Matrix truth_m = read_matrix_csv(o.truth_lambda);
  if (truth_m.rows() != truth_m.cols())
    throw ValidationError(o.truth_lambda + ": truth matrix must be square");
  const SpdMatrix truth = SpdMatrix::from_symmetric(truth_m);
  const SparsityPattern z_true = o.truth_pattern.empty()
                                     ? pattern_of(truth, o.pattern_tol)
                                     : read_pattern_csv(o.truth_pattern);
  if (z_true.dim() != truth.dim())
    throw ValidationError("truth pattern and truth matrix dimensions disagree");

  json sj;
  try {
    sj = json::parse(read_text_file(o.summary));
  } catch (const json::parse_error& e) {
    throw ValidationError(o.summary + ": summary parse error: " + e.what());
  }
  const Matrix lambda_hat = matrix_from_json(sj.at("lambda_hat"), "lambda_hat");
  const Matrix z_dec_m = matrix_from_json(sj.at("z_decided"), "z_decided");
  if (lambda_hat.rows() != truth.dim())
    throw ValidationError("summary dimension does not match the truth");
  const SparsityPattern z_hat = SparsityPattern::from_matrix(z_dec_m);

  EvalReport report;
  report.sensitivity = sensitivity(z_true, z_hat);
  report.specificity = specificity(z_true, z_hat);
  report.kl_discrepancy =
      kl_discrepancy(SpdMatrix::from_lower(lambda_hat), truth, orient);
  report.edge_count_mean = sj.at("edge_count").at("mean").get<double>();
  report.edge_count_lo = sj.at("edge_count").at("lo").get<double>();
  report.edge_count_hi = sj.at("edge_count").at("hi").get<double>();

  json config{{"command", "evaluate"},
              {"truth_lambda", o.truth_lambda},
              {"truth_pattern", o.truth_pattern},
              {"summary", o.summary},
              {"pattern_tol", o.pattern_tol},
              {"kl_orientation", o.kl_orientation},
              {"seed", o.common.seed}};
  const std::string edges = edge_interval_string(
      report.edge_count_mean, report.edge_count_lo, report.edge_count_hi);
  json out{{"config", config},
           {"sensitivity", report.sensitivity},
           {"specificity", report.specificity},
           {"kl", report.kl_discrepancy},
           {"kl_orientation", o.kl_orientation},
           {"edges", {{"mean", report.edge_count_mean},
                      {"lo", report.edge_count_lo},
                      {"hi", report.edge_count_hi},
                      {"display", edges}}}};
  if (sj.contains("crps_mean")) {
    report.crps_mean = sj.at("crps_mean").get<double>();
    out["crps_mean"] = report.crps_mean;
  }
  ensure_out_dir(o.common.out);
  write_text_file(out_path(o.common, "eval.json"), out.dump(2) + "\n");

  std::printf("metric          value\n");
  std::printf("sensitivity     %.4f\n", report.sensitivity);
  std::printf("specificity     %.4f\n", report.specificity);
  std::printf("kl              %.6g   (%s)\n", report.kl_discrepancy,
              o.kl_orientation.c_str());
  if (sj.contains("crps_mean")) std::printf("crps            %.6g\n", report.crps_mean);
  std::printf("edges           %s\n", edges.c_str());
  return 0;
}

// ---------------------------------------------------------------------------

int run_cli_impl(const std::vector<std::string>& args) {
  const json cfg = load_config(args);

  CLI::App app{"Bayesian estimation of sparse precision matrices via "
               "constrained Cholesky factor priors"};
  app.require_subcommand(1);

  SamplePriorOpts sp;
  CLI::App* c_sp = app.add_subcommand(
      "sample-prior", "draw precision matrices from the prior and verify the pattern");
  cfg_get(cfg, "p", sp.p);
  cfg_get(cfg, "nu", sp.nu);
  cfg_get(cfg, "scale", sp.scale);
  cfg_get(cfg, "pattern", sp.pattern);
  cfg_get(cfg, "draws", sp.draws);
  cfg_get(cfg, "emit_q", sp.emit_q);
  add_common(c_sp, sp.common, cfg);
  c_sp->add_option("--p", sp.p, "dimension (required for generated patterns)");
  c_sp->add_option("--nu", sp.nu, "degrees of freedom");
  c_sp->add_option("--scale", sp.scale, "identity or a CSV scale matrix path");
  c_sp->add_option("--pattern", sp.pattern,
                   "identity | full | band:W | random:ALPHA | CSV path");
  c_sp->add_option("--draws", sp.draws, "number of draws");
  c_sp->add_flag("--emit-q", sp.emit_q, "also write the Cholesky factors");

  FitOpts fit;
  CLI::App* c_fit =
      app.add_subcommand("fit", "fit the model to a CSV of outcomes");
  cfg_get(cfg, "data", fit.data);
  cfg_get(cfg, "family", fit.family);
  cfg_get(cfg, "iterations", fit.iterations);
  cfg_get(cfg, "burnin", fit.burnin);
  cfg_get(cfg, "thin", fit.thin);
  cfg_get(cfg, "nu", fit.nu);
  cfg_get(cfg, "scale", fit.scale);
  cfg_get(cfg, "pi", fit.pi);
  cfg_get(cfg, "holdout", fit.holdout);
  cfg_get(cfg, "nuts_madapt", fit.nuts_madapt);
  cfg_get(cfg, "nuts_delta", fit.nuts_delta);
  cfg_get(cfg, "max_tree_depth", fit.max_tree_depth);
  cfg_get(cfg, "step_size", fit.step_size);
  cfg_get(cfg, "no_intercepts", fit.no_intercepts);
  cfg_get(cfg, "randomized_sweep", fit.randomized_sweep);
  cfg_get(cfg, "threshold", fit.threshold);
  add_common(c_fit, fit.common, cfg);
  c_fit->add_option("--data", fit.data, "CSV data path (NA or empty = missing)");
  c_fit->add_option("--family", fit.family, "gaussian | poisson");
  c_fit->add_option("--iterations", fit.iterations, "total MCMC iterations");
  c_fit->add_option("--burnin", fit.burnin, "burn-in iterations");
  c_fit->add_option("--thin", fit.thin, "thinning interval");
  c_fit->add_option("--nu", fit.nu, "prior degrees of freedom");
  c_fit->add_option("--scale", fit.scale, "identity or a CSV scale matrix path");
  c_fit->add_option("--pi", fit.pi, "prior edge inclusion probability");
  c_fit->add_option("--holdout", fit.holdout,
                    "withhold this fraction of observed cells and score CRPS");
  c_fit->add_option("--nuts-madapt", fit.nuts_madapt, "step-size adaptation window");
  c_fit->add_option("--nuts-delta", fit.nuts_delta, "target acceptance statistic");
  c_fit->add_option("--max-tree-depth", fit.max_tree_depth, "NUTS doubling cap");
  c_fit->add_option("--step-size", fit.step_size, "fixed step size (0 = auto)");
  c_fit->add_flag("--no-intercepts", fit.no_intercepts,
                  "fix Poisson intercepts at zero");
  c_fit->add_flag("--randomized-sweep", fit.randomized_sweep,
                  "randomize the spike-and-slab sweep order");
  c_fit->add_option("--threshold", fit.threshold, "edge decision threshold");

  SimulateOpts sim;
  CLI::App* c_sim = app.add_subcommand(
      "simulate", "run a replicated recovery study on synthetic data");
  cfg_get(cfg, "p", sim.p);
  cfg_get(cfg, "pattern", sim.pattern);
  cfg_get(cfg, "family", sim.family);
  cfg_get(cfg, "n", sim.n);
  cfg_get(cfg, "mu", sim.mu);
  cfg_get(cfg, "pmiss", sim.pmiss);
  cfg_get(cfg, "replicas", sim.replicas);
  cfg_get(cfg, "iterations", sim.iterations);
  cfg_get(cfg, "burnin", sim.burnin);
  cfg_get(cfg, "thin", sim.thin);
  cfg_get(cfg, "nu", sim.nu);
  cfg_get(cfg, "pi", sim.pi);
  cfg_get(cfg, "nuts_madapt", sim.nuts_madapt);
  cfg_get(cfg, "nuts_delta", sim.nuts_delta);
  cfg_get(cfg, "max_tree_depth", sim.max_tree_depth);
  cfg_get(cfg, "rowwise_missing", sim.rowwise_missing);
  add_common(c_sim, sim.common, cfg);
  c_sim->add_option("--p", sim.p, "outcome dimension");
  c_sim->add_option("--pattern", sim.pattern, "band:W | random:ALPHA");
  c_sim->add_option("--family", sim.family, "gaussian | poisson");
  c_sim->add_option("--n", sim.n, "observations per replica");
  c_sim->add_option("--mu", sim.mu, "intercept on the linear-predictor scale");
  c_sim->add_option("--pmiss", sim.pmiss, "masked cell fraction");
  c_sim->add_option("--replicas", sim.replicas, "number of replicas");
  c_sim->add_option("--iterations", sim.iterations, "total MCMC iterations");
  c_sim->add_option("--burnin", sim.burnin, "burn-in iterations");
  c_sim->add_option("--thin", sim.thin, "thinning interval");
  c_sim->add_option("--nu", sim.nu, "prior degrees of freedom");
  c_sim->add_option("--pi", sim.pi, "prior edge inclusion probability");
  c_sim->add_option("--nuts-madapt", sim.nuts_madapt, "step-size adaptation window");
  c_sim->add_option("--nuts-delta", sim.nuts_delta, "target acceptance statistic");
  c_sim->add_option("--max-tree-depth", sim.max_tree_depth, "NUTS doubling cap");
  c_sim->add_flag("--rowwise-missing", sim.rowwise_missing,
                  "mask whole observations instead of cells");

  EvaluateOpts ev;
  CLI::App* c_ev = app.add_subcommand(
      "evaluate", "score a fit summary against a known truth");
  cfg_get(cfg, "truth_lambda", ev.truth_lambda);
  cfg_get(cfg, "truth_pattern", ev.truth_pattern);
  cfg_get(cfg, "summary", ev.summary);
  cfg_get(cfg, "pattern_tol", ev.pattern_tol);
  cfg_get(cfg, "kl_orientation", ev.kl_orientation);
  add_common(c_ev, ev.common, cfg);
  c_ev->add_option("--truth-lambda", ev.truth_lambda, "true precision matrix CSV");
  c_ev->add_option("--truth-pattern", ev.truth_pattern,
                   "true 0/1 pattern CSV (default: thresholded truth)");
  c_ev->add_option("--summary", ev.summary, "summary.json produced by fit");
  c_ev->add_option("--pattern-tol", ev.pattern_tol,
                   "relative threshold when deriving the pattern");
  c_ev->add_option("--kl-orientation", ev.kl_orientation,
                   "estimated-vs-true | true-vs-estimated");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);  // prints help text or the parse error
    return rc == 0 ? 0 : 2;
  }

  if (c_sp->parsed()) return cmd_sample_prior(sp);
  if (c_fit->parsed()) return cmd_fit(fit);
  if (c_sim->parsed()) return cmd_simulate(sim);
  return cmd_evaluate(ev);
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  try {
    return run_cli_impl(args);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace sbart
