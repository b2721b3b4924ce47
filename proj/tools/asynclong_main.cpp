// Command-line front end: simulate | fit | cv | mc | screen.
//
// Exit codes: 0 ok, 2 usage/config, 3 data, 4 numerical.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "asynclong/bandwidth.hpp"
#include "asynclong/csv.hpp"
#include "asynclong/simulation.hpp"

namespace {

using namespace asynclong;

// Writes through a temp file and renames on commit, so failed runs leave no
// partial artifacts behind.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::string path)
      : path_(std::move(path)), tmp_(path_ + ".tmp"), out_(tmp_, std::ios::binary) {
    if (!out_) throw DataError("cannot open output file '" + path_ + "'");
  }
  ~ArtifactWriter() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      std::filesystem::remove(tmp_, ec);
    }
  }
  std::ostream& stream() { return out_; }
  void commit() {
    out_.flush();
    if (!out_) throw DataError("write failed for '" + path_ + "'");
    out_.close();
    std::error_code ec;
    std::filesystem::rename(tmp_, path_, ec);
    if (ec) throw DataError("cannot move '" + tmp_ + "' to '" + path_ + "'");
    committed_ = true;
  }

 private:
  std::string path_;
  std::string tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

MeanTag mean_tag(const std::string& name) {
  if (name == "sqrt_t") return MeanTag::SqrtT;
  if (name == "linear_0.5") return MeanTag::HalfPlusT;
  if (name == "quad_0.5") return MeanTag::HalfPlusTSq;
  if (name == "sine2pi") return MeanTag::SineTwoPi;
  if (name == "const_2") return MeanTag::ConstTwo;
  if (name == "zero") return MeanTag::Zero;
  if (name == "sqrt_0.5") return MeanTag::HalfPlusSqrtT;
  throw CLI::ValidationError("mean", "unknown mean function '" + name + "'");
}

EstimatorTag estimator_tag(const std::string& name) {
  if (name == "naive") return EstimatorTag::Naive;
  if (name == "plm") return EstimatorTag::Plm;
  if (name == "centering") return EstimatorTag::Centering;
  if (name == "full") return EstimatorTag::Full;
  if (name == "lvcf") return EstimatorTag::Lvcf;
  if (name == "centering-lvcf") return EstimatorTag::CenteringLvcf;
  if (name == "twostep") return EstimatorTag::TwoStepCentering;
  if (name == "twostep-plm") return EstimatorTag::TwoStepPlm;
  if (name == "ks") return EstimatorTag::Ks;
  throw CLI::ValidationError("method", "unknown estimator '" + name + "'");
}

void print_report(const FitReport& rep) {
  std::printf("method: %s\n", rep.method.c_str());
  std::printf("observations: %ld", rep.observations_used);
  if (rep.pairs_used > 0) std::printf("  pairs: %ld", rep.pairs_used);
  if (rep.dropped > 0) std::printf("  dropped: %ld", rep.dropped);
  std::printf("\n");
  if (!rep.bandwidths.empty()) {
    std::printf("bandwidths:");
    for (double h : rep.bandwidths) std::printf(" %.6g", h);
    std::printf("\n");
  }
  std::printf("%-10s %12s %12s %12s %12s %12s\n", "param", "estimate", "se", "ci_lo", "ci_hi",
              "p");
  for (long j = 0; j < rep.dim(); ++j)
    std::printf("%-10s %12.6g %12.6g %12.6g %12.6g %12.6g\n", rep.param_names[j].c_str(),
                rep.estimates(j), rep.std_errors(j), rep.ci_lower(j), rep.ci_upper(j),
                rep.p_value(j));
}

void write_report_csv(const FitReport& rep, std::ostream& out) {
  out << "param,estimate,se,ci_lo,ci_hi,p\n";
  for (long j = 0; j < rep.dim(); ++j)
    out << rep.param_names[j] << "," << format_double(rep.estimates(j)) << ","
        << format_double(rep.std_errors(j)) << "," << format_double(rep.ci_lower(j)) << ","
        << format_double(rep.ci_upper(j)) << "," << format_double(rep.p_value(j)) << "\n";
}

// z-scores the named columns (y, x<i>, z<i>) in place over all observations.
void standardize_columns(LongitudinalDataset& d, const std::vector<std::string>& columns) {
  for (const auto& col : columns) {
    std::vector<double*> cells;
    for (auto& s : d.subjects) {
      if (col == "y") {
        for (auto& v : s.responses) cells.push_back(&v);
      } else if (col.size() > 1 && col[0] == 'x') {
        const int c = std::stoi(col.substr(1)) - 1;
        if (c < 0 || c >= d.p) throw DataError("standardize: no column '" + col + "'");
        for (long j = 0; j < s.n_sync(); ++j) cells.push_back(&s.sync_covariates(j, c));
      } else if (col.size() > 1 && col[0] == 'z') {
        const int c = std::stoi(col.substr(1)) - 1;
        if (c < 0 || c >= d.q) throw DataError("standardize: no column '" + col + "'");
        for (long k = 0; k < s.n_async(); ++k) cells.push_back(&s.async_covariates(k, c));
      } else {
        throw DataError("standardize: unknown column '" + col + "'");
      }
    }
    if (cells.size() < 2) throw DataError("standardize: too few values in column '" + col + "'");
    double mean = 0.0;
    for (double* v : cells) mean += *v;
    mean /= cells.size();
    double ss = 0.0;
    for (double* v : cells) ss += (*v - mean) * (*v - mean);
    const double sd = std::sqrt(ss / (cells.size() - 1));
    if (!(sd > 0.0)) throw DataError("standardize: zero variance in column '" + col + "'");
    for (double* v : cells) *v = (*v - mean) / sd;
  }
}

std::string g_config_path;

// Plain-text `key = value` lines, '#' starts a comment.
std::vector<std::pair<std::string, std::string>> read_kv_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path + "'");
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t");
    const auto b = s.find_last_not_of(" \t");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config '" + path + "' line " + std::to_string(lineno) +
                      ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw DataError("config '" + path + "' line " + std::to_string(lineno) + ": empty key");
    pairs.emplace_back(key, value);
  }
  return pairs;
}

// Appends `--key=value` for every config entry whose flag is absent from the
// command line, so flags given explicitly win and unknown keys surface as
// ordinary parse errors.
void expand_config(std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      break;
    }
  }
  if (path.empty()) return;
  for (const auto& [key, value] : read_kv_config(path)) {
    const std::string flag = "--" + key;
    bool present = false;
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) {
        present = true;
        break;
      }
    if (!present) args.push_back(flag + "=" + value);
  }
}

struct CommonGridOpts {
  std::string rule = "power";
  double lo = -0.8;
  double hi = -0.6;
  int size = 10;
  int folds = 5;
  std::uint64_t seed = 1;
};

void add_grid_options(CLI::App* cmd, CommonGridOpts& g) {
  cmd->add_option("--grid-rule", g.rule, "bandwidth grid rule: power | quartile")
      ->check(CLI::IsMember({"power", "quartile"}));
  cmd->add_option("--grid-lo", g.lo, "low grid exponent (h = n^lo)");
  cmd->add_option("--grid-hi", g.hi, "high grid exponent (h = n^hi)");
  cmd->add_option("--grid-size", g.size, "grid size");
  cmd->add_option("--folds", g.folds, "cross-validation folds");
  cmd->add_option("--cv-seed", g.seed, "fold-assignment seed");
}

BandwidthGrid make_grid(const LongitudinalDataset& d, const CommonGridOpts& g) {
  BandwidthGrid grid = g.rule == "quartile" ? quartile_scaled_grid(d, g.lo, g.hi, g.size)
                                            : power_grid(d.n(), g.lo, g.hi, g.size);
  grid.folds = g.folds;
  grid.seed = g.seed;
  return grid;
}

LongitudinalDataset load_and_validate(const std::string& sync, const std::string& async_path,
                                      const std::vector<std::string>& standardize) {
  LongitudinalDataset d = load_dataset(sync, async_path);
  const ValidationReport report = validate_dataset(d);
  if (!report.empty()) {
    for (const auto& v : report)
      std::cerr << "violation: subject '" << v.subject_id << "' " << v.field << ": " << v.message
                << "\n";
    throw DataError("dataset failed validation with " + std::to_string(report.size()) +
                    " violation(s)");
  }
  if (d.time_rescale.applied)
    std::fprintf(stderr, "note: times rescaled to [0,1] via (t - %.6g) / %.6g\n",
                 d.time_rescale.offset, d.time_rescale.scale);
  if (!standardize.empty()) standardize_columns(d, standardize);
  return d;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regression with mixed synchronous and asynchronous longitudinal covariates"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print help and exit");
  app.set_help_all_flag("--help-all", "print help for all subcommands");

  // ---- simulate ----------------------------------------------------------
  struct {
    long n = 100;
    std::uint64_t seed = 1;
    std::string z_mean = "const_2";
    std::string x_mean = "sqrt_t";
    std::string corr = "independent";
    bool synchronous = false;
    bool example = false;
    double alpha = 1.0, beta = 2.0, gamma = -1.0;
    std::string sync_out, async_out;
  } sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "generate a synthetic dataset as CSV files");
  c_sim->set_help_flag("--help", "print help and exit");
  c_sim->add_option("--config", g_config_path,
                    "key = value config file; command-line flags override");
  c_sim->add_option("--n", sim.n, "number of subjects");
  c_sim->add_option("--seed", sim.seed, "RNG seed");
  c_sim->add_option("--z-mean", sim.z_mean,
                    "E{Z(t)}: const_2 | linear_0.5 | quad_0.5 | sine2pi | sqrt_0.5 | zero");
  c_sim->add_option("--x-mean", sim.x_mean, "E{X(t)}");
  c_sim->add_option("--corr", sim.corr, "independent | uncorrelated")
      ->check(CLI::IsMember({"independent", "uncorrelated"}));
  c_sim->add_flag("--synchronous", sim.synchronous, "observe Z on the synchronous grid");
  c_sim->add_flag("--example", sim.example,
                  "six-baseline-covariate example panel (ignores process options)");
  c_sim->add_option("--alpha", sim.alpha, "true intercept");
  c_sim->add_option("--beta", sim.beta, "true synchronous coefficient");
  c_sim->add_option("--gamma", sim.gamma, "true asynchronous coefficient");
  c_sim->add_option("--sync-out", sim.sync_out, "output path for the sync CSV")->required();
  c_sim->add_option("--async-out", sim.async_out, "output path for the async CSV")->required();
  c_sim->callback([&] {
    LongitudinalDataset d;
    if (sim.example) {
      d = gen_bundled_example(sim.n, sim.seed);
    } else {
      SimulationScenario sc;
      sc.n = sim.n;
      sc.alpha = sim.alpha;
      sc.beta = sim.beta;
      sc.gamma = sim.gamma;
      sc.x_process.mean = mean_tag(sim.x_mean);
      sc.z_process.mean = mean_tag(sim.z_mean);
      sc.correlation = sim.corr == "uncorrelated"
                           ? SimulationScenario::Correlation::UncorrelatedDependent
                           : SimulationScenario::Correlation::Independent;
      sc.asynchronous = !sim.synchronous;
      d = gen_dataset(sc, sim.seed);
    }
    ArtifactWriter sync_out(sim.sync_out), async_out(sim.async_out);
    write_sync_csv(d, sync_out.stream());
    write_async_csv(d, async_out.stream());
    sync_out.commit();
    async_out.commit();
    std::printf("wrote %ld subjects (%ld sync rows, %ld async rows)\n", d.n(),
                d.total_sync_obs(), d.total_async_obs());
  });

  // ---- fit ---------------------------------------------------------------
  struct {
    std::string sync, async_path, method, out, alpha_out;
    std::vector<std::string> standardize;
    double h = 0.0, h1 = 0.0, h2 = 0.0;
    double h_exp = -0.6, h1_exp = -0.6;
    bool cv = false;
    CommonGridOpts grid;
  } fit;
  CLI::App* c_fit = app.add_subcommand("fit", "fit one estimator and print the report");
  c_fit->set_help_flag("--help", "print help and exit");
  c_fit->add_option("--config", g_config_path,
                    "key = value config file; command-line flags override");
  c_fit->add_option("--sync", fit.sync, "sync CSV (id,time,y,x1..xp)")->required();
  c_fit->add_option("--async", fit.async_path, "async CSV (id,time,z1..zq)");
  c_fit->add_option("--method", fit.method,
                    "naive | plm | centering | twostep | twostep-plm | ks | lvcf | "
                    "centering-lvcf | full")
      ->required();
  c_fit->add_option("--h", fit.h, "fixed bandwidth (plm/centering/ks)");
  c_fit->add_option("--h-exp", fit.h_exp, "bandwidth exponent: h = n^h_exp");
  c_fit->add_option("--h1", fit.h1, "fixed step-1 bandwidth (two-step methods)");
  c_fit->add_option("--h1-exp", fit.h1_exp, "step-1 bandwidth exponent");
  c_fit->add_option("--h2", fit.h2, "fixed step-2 bandwidth (two-step methods)");
  c_fit->add_flag("--cv", fit.cv, "select the kernel bandwidth by cross-validation");
  add_grid_options(c_fit, fit.grid);
  c_fit->add_option("--standardize", fit.standardize, "z-score these columns (y, x1, ..., z1, ...)")
      ->delimiter(',');
  c_fit->add_option("--out", fit.out, "also write the report as CSV");
  c_fit->add_option("--plm-alpha-out", fit.alpha_out,
                    "write the fitted PLM intercept curve (101-point grid) as CSV");
  c_fit->callback([&] {
    LongitudinalDataset d = load_and_validate(fit.sync, fit.async_path, fit.standardize);
    if (fit.method != "naive" && fit.method != "plm" && fit.method != "centering" && d.q == 0)
      throw DataError("method '" + fit.method + "' needs asynchronous data (--async)");
    const long n = d.n();
    const double h_sync = fit.h > 0.0 ? fit.h : std::pow(static_cast<double>(n), fit.h_exp);
    const double h_step1 = fit.h1 > 0.0 ? fit.h1 : std::pow(static_cast<double>(n), fit.h1_exp);
    const auto cv_h = [&](CvMethod method) {
      const CvCurve curve = cv_bandwidth(d, make_grid(d, fit.grid), method, fit.grid.folds,
                                         fit.grid.seed);
      std::printf("cv-selected h: %.6g\n", curve.selected_h);
      return curve.selected_h;
    };

    FitReport rep;
    std::optional<std::pair<KernelSpec, Eigen::VectorXd>> plm_curve_input;
    if (fit.method == "naive") {
      rep = fit_naive(d);
    } else if (fit.method == "plm") {
      const KernelSpec k(h_sync);
      rep = fit_plm(d, k).report;
      plm_curve_input = {k, rep.estimates};
    } else if (fit.method == "centering") {
      rep = fit_centering(d, KernelSpec(h_sync)).report;
    } else if (fit.method == "full") {
      rep = fit_pooled_full(d);
    } else if (fit.method == "lvcf") {
      rep = fit_lvcf(d);
    } else if (fit.method == "centering-lvcf") {
      rep = fit_centering_lvcf(d, KernelSpec(h_step1));
    } else if (fit.method == "twostep" || fit.method == "twostep-plm") {
      const double h2 = fit.h2 > 0.0 ? fit.h2 : cv_h(CvMethod::TwoStep);
      rep = fit_two_step(d,
                         fit.method == "twostep" ? Step1Method::Centering : Step1Method::Plm,
                         KernelSpec(h_step1), KernelSpec(h2));
    } else if (fit.method == "ks") {
      const double h = fit.h > 0.0 ? fit.h : (fit.cv ? cv_h(CvMethod::Simultaneous)
                                                     : std::pow(static_cast<double>(n), fit.h_exp));
      rep = fit_simultaneous(d, KernelSpec(h));
    } else {
      throw CLI::ValidationError("--method", "unknown estimator '" + fit.method + "'");
    }
    print_report(rep);
    if (!fit.out.empty()) {
      ArtifactWriter out(fit.out);
      write_report_csv(rep, out.stream());
      out.commit();
    }
    if (!fit.alpha_out.empty()) {
      if (!plm_curve_input) throw DataError("--plm-alpha-out requires --method plm");
      ArtifactWriter out(fit.alpha_out);
      out.stream() << "t,alpha_hat\n";
      for (const auto& [t, a] :
           plm_intercept_curve(d, plm_curve_input->first, plm_curve_input->second))
        out.stream() << format_double(t) << "," << format_double(a) << "\n";
      out.commit();
    }
  });

  // ---- cv ----------------------------------------------------------------
  struct {
    std::string sync, async_path, method = "twostep", out;
    CommonGridOpts grid;
  } cv;
  CLI::App* c_cv = app.add_subcommand("cv", "cross-validation curve over a bandwidth grid");
  c_cv->set_help_flag("--help", "print help and exit");
  c_cv->add_option("--config", g_config_path,
                    "key = value config file; command-line flags override");
  c_cv->add_option("--sync", cv.sync, "sync CSV")->required();
  c_cv->add_option("--async", cv.async_path, "async CSV")->required();
  c_cv->add_option("--method", cv.method, "twostep | ks")
      ->check(CLI::IsMember({"twostep", "ks"}));
  add_grid_options(c_cv, cv.grid);
  c_cv->add_option("--out", cv.out, "curve CSV output path")->required();
  c_cv->callback([&] {
    LongitudinalDataset d = load_and_validate(cv.sync, cv.async_path, {});
    const CvCurve curve =
        cv_bandwidth(d, make_grid(d, cv.grid),
                     cv.method == "twostep" ? CvMethod::TwoStep : CvMethod::Simultaneous,
                     cv.grid.folds, cv.grid.seed);
    ArtifactWriter out(cv.out);
    write_cv_curve_csv(curve, out.stream());
    out.commit();
    std::printf("selected h: %.6g (grid index %ld of %zu)\n", curve.selected_h,
                curve.selected_index, curve.grid.size());
  });

  // ---- mc ----------------------------------------------------------------
  struct {
    long n = 100, reps = 100;
    std::uint64_t seed = 1;
    std::string estimators = "naive,plm,centering";
    std::string z_mean = "const_2";
    std::string corr = "independent";
    bool synchronous = false;
    double h_exp = -0.6;
    double h = 0.0, h2 = 0.0, h2_exp = 0.0;
    double cv_lo = -0.8, cv_hi = -0.6;
    int cv_size = 10, cv_folds = 5;
    int threads = 0;
    std::string out;
  } mc;
  CLI::App* c_mc = app.add_subcommand("mc", "Monte Carlo study; emits a bias/sd/se/cp summary");
  c_mc->set_help_flag("--help", "print help and exit");
  c_mc->add_option("--config", g_config_path,
                    "key = value config file; command-line flags override");
  c_mc->add_option("--n", mc.n, "subjects per replication");
  c_mc->add_option("--reps", mc.reps, "replications");
  c_mc->add_option("--seed", mc.seed, "base seed");
  c_mc->add_option("--estimators", mc.estimators, "comma list of estimators");
  c_mc->add_option("--z-mean", mc.z_mean, "E{Z(t)} mean function");
  c_mc->add_option("--corr", mc.corr, "independent | uncorrelated")
      ->check(CLI::IsMember({"independent", "uncorrelated"}));
  c_mc->add_flag("--synchronous", mc.synchronous, "observe Z on the synchronous grid");
  c_mc->add_option("--h-exp", mc.h_exp, "synchronous bandwidth exponent (h = n^h_exp)");
  c_mc->add_option("--h", mc.h, "fixed synchronous bandwidth (overrides --h-exp)");
  c_mc->add_option("--h2", mc.h2, "fixed step-2/ks bandwidth (otherwise CV)");
  c_mc->add_option("--h2-exp", mc.h2_exp, "step-2/ks bandwidth exponent (otherwise CV)");
  c_mc->add_option("--cv-lo", mc.cv_lo, "CV grid low exponent");
  c_mc->add_option("--cv-hi", mc.cv_hi, "CV grid high exponent");
  c_mc->add_option("--cv-size", mc.cv_size, "CV grid size");
  c_mc->add_option("--cv-folds", mc.cv_folds, "CV folds");
  c_mc->add_option("--threads", mc.threads, "worker threads (0 = hardware)");
  c_mc->add_option("--out", mc.out, "summary CSV output path")->required();
  c_mc->callback([&] {
    McConfig cfg;
    cfg.scenario.n = mc.n;
    cfg.scenario.z_process.mean = mean_tag(mc.z_mean);
    cfg.scenario.correlation = mc.corr == "uncorrelated"
                                   ? SimulationScenario::Correlation::UncorrelatedDependent
                                   : SimulationScenario::Correlation::Independent;
    cfg.scenario.asynchronous = !mc.synchronous;
    cfg.reps = mc.reps;
    cfg.base_seed = mc.seed;
    cfg.threads = mc.threads;
    if (mc.h > 0.0)
      cfg.sync_rule = {BandwidthRule::Kind::Fixed, mc.h, -0.6};
    else
      cfg.sync_rule = {BandwidthRule::Kind::Power, 0.1, mc.h_exp};
    if (mc.h2 > 0.0) {
      cfg.async_rule = {BandwidthRule::Kind::Fixed, mc.h2, -0.6};
    } else if (mc.h2_exp < 0.0) {
      cfg.async_rule = {BandwidthRule::Kind::Power, 0.1, mc.h2_exp};
    } else {
      cfg.async_rule.kind = BandwidthRule::Kind::CvPower;
      cfg.async_rule.cv_lo = mc.cv_lo;
      cfg.async_rule.cv_hi = mc.cv_hi;
      cfg.async_rule.cv_size = mc.cv_size;
      cfg.async_rule.cv_folds = mc.cv_folds;
    }
    std::stringstream names(mc.estimators);
    std::string tag;
    while (std::getline(names, tag, ','))
      if (!tag.empty()) cfg.estimators.push_back(estimator_tag(tag));
    if (cfg.estimators.empty()) throw CLI::ValidationError("--estimators", "empty list");

    const auto summaries = run_mc(cfg);
    ArtifactWriter out(mc.out);
    write_mc_summary_csv(summaries, out.stream());
    out.commit();
    for (const auto& s : summaries)
      for (const auto& r : s.params)
        std::printf("%-16s %-6s bias=%+9.4f sd=%8.4f se=%8.4f cp=%6.3f reps=%ld fail=%ld\n",
                    s.method.c_str(), r.param.c_str(), r.bias, r.sd, r.se, r.cp, s.reps,
                    s.failures);
  });

  // ---- screen ------------------------------------------------------------
  struct {
    std::string sync, async_path, mode = "separate", out;
  } screen;
  CLI::App* c_screen =
      app.add_subcommand("screen", "regress each Z component on the X components (LVCF pairs)");
  c_screen->set_help_flag("--help", "print help and exit");
  c_screen->add_option("--config", g_config_path,
                    "key = value config file; command-line flags override");
  c_screen->add_option("--sync", screen.sync, "sync CSV")->required();
  c_screen->add_option("--async", screen.async_path, "async CSV")->required();
  c_screen->add_option("--mode", screen.mode, "separate | joint")
      ->check(CLI::IsMember({"separate", "joint"}));
  c_screen->add_option("--out", screen.out, "also write the table as CSV");
  c_screen->callback([&] {
    LongitudinalDataset d = load_and_validate(screen.sync, screen.async_path, {});
    const ScreenTable table = screen_correlation(
        d, screen.mode == "joint" ? ScreenMode::Joint : ScreenMode::Separate);
    std::printf("pairs: %ld  dropped: %ld\n", table.pairs_used, table.dropped);
    std::printf("%-6s %-6s %12s %12s %12s\n", "z", "x", "estimate", "se", "p");
    for (const auto& row : table.rows)
      std::printf("%-6s %-6s %12.6g %12.6g %12.6g\n", row.z_name.c_str(), row.x_name.c_str(),
                  row.estimate, row.se, row.p_value);
    if (!screen.out.empty()) {
      ArtifactWriter out(screen.out);
      write_screen_csv(table, out.stream());
      out.commit();
    }
  });

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    expand_config(args);
    std::reverse(args.begin(), args.end());  // CLI11's vector overload wants reversed args
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::domain_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
