#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "asynclong/async_estimators.hpp"
#include "asynclong/bandwidth.hpp"
#include "asynclong/dataset.hpp"
#include "asynclong/rng.hpp"
#include "asynclong/sync_estimators.hpp"

namespace asynclong {

enum class MeanTag { SqrtT, HalfPlusT, HalfPlusTSq, SineTwoPi, ConstTwo, Zero, HalfPlusSqrtT, Custom };
enum class CovTag { ExpAbs, Exp2Abs };

// Mean and covariance of one scalar Gaussian process on [0, 1].
struct ProcessSpec {
  MeanTag mean = MeanTag::Zero;
  CovTag cov = CovTag::ExpAbs;
  std::vector<std::pair<double, double>> mean_table;  // Custom: linear interpolation

  double mean_at(double t) const {
    switch (mean) {
      case MeanTag::SqrtT: return std::sqrt(t);
      case MeanTag::HalfPlusT: return 0.5 + t;
      case MeanTag::HalfPlusTSq: return 0.5 + t * t;
      case MeanTag::SineTwoPi: return 2.0 * std::sin(2.0 * std::numbers::pi * t);
      case MeanTag::ConstTwo: return 2.0;
      case MeanTag::Zero: return 0.0;
      case MeanTag::HalfPlusSqrtT: return 0.5 + std::sqrt(t);
      case MeanTag::Custom: break;
    }
    if (mean_table.empty()) throw std::invalid_argument("custom mean table is empty");
    if (t <= mean_table.front().first) return mean_table.front().second;
    if (t >= mean_table.back().first) return mean_table.back().second;
    for (std::size_t i = 1; i < mean_table.size(); ++i) {
      if (t <= mean_table[i].first) {
        const auto& [t0, v0] = mean_table[i - 1];
        const auto& [t1, v1] = mean_table[i];
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
      }
    }
    return mean_table.back().second;
  }

  double cov_at(double t, double s) const {
    const double a = std::abs(t - s);
    return cov == CovTag::ExpAbs ? std::exp(-a) : std::exp2(-a);
  }
};

// Draws mean(times) + L xi with L the Cholesky factor of the covariance on
// `times` (1e-10 diagonal jitter retry on failure) and xi iid standard normal.
inline Eigen::VectorXd sample_gp(std::span<const double> times, const ProcessSpec& spec,
                                 Rng& rng) {
  const long m = static_cast<long>(times.size());
  Eigen::MatrixXd cov(m, m);
  for (long i = 0; i < m; ++i)
    for (long j = 0; j <= i; ++j) cov(i, j) = cov(j, i) = spec.cov_at(times[i], times[j]);

  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    cov.diagonal().array() += 1e-10;
    llt.compute(cov);
    if (llt.info() != Eigen::Success)
      throw NumericalError("sample_gp: covariance factorization failed after jitter");
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd xi(m);
  for (long i = 0; i < m; ++i) xi(i) = normal(rng);

  Eigen::VectorXd out = llt.matrixL() * xi;
  for (long i = 0; i < m; ++i) out(i) += spec.mean_at(times[i]);
  return out;
}

// Generative model: true relation Y(t) = alpha + beta X(t) + gamma Z(t) + eps(t)
// with p = q = 1, observation counts 1 + Poisson(obs_rate) capped at max_obs,
// observation times iid U(0, 1) sorted.
struct SimulationScenario {
  long n = 100;
  double alpha = 1.0;
  double beta = 2.0;
  double gamma = -1.0;
  ProcessSpec x_process{MeanTag::SqrtT, CovTag::ExpAbs};
  ProcessSpec z_process{MeanTag::ConstTwo, CovTag::ExpAbs};
  ProcessSpec eps_process{MeanTag::Zero, CovTag::Exp2Abs};
  enum class Correlation { Independent, UncorrelatedDependent } correlation =
      Correlation::Independent;
  double obs_rate = 5.0;
  int max_obs = 50;
  bool asynchronous = true;
};

// Full per-subject draw, with the latent components kept for verification.
struct GeneratedSubject {
  SubjectRecord record;
  Eigen::VectorXd latent_z_at_sync;
  Eigen::VectorXd eps_at_sync;
};

namespace detail {

inline std::vector<double> sorted_uniforms(long count, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> t(count);
  for (auto& v : t) v = unif(rng);
  std::sort(t.begin(), t.end());
  return t;
}

// Merge of two ascending grids with exact duplicates collapsed; fills the
// index of each input time in the union.
inline std::vector<double> union_grid(const std::vector<double>& a, const std::vector<double>& b,
                                      std::vector<long>& a_idx, std::vector<long>& b_idx) {
  std::vector<double> u;
  u.reserve(a.size() + b.size());
  a_idx.resize(a.size());
  b_idx.resize(b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    double next;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j]))
      next = a[i];
    else
      next = b[j];
    u.push_back(next);
    while (i < a.size() && a[i] == next) a_idx[i++] = static_cast<long>(u.size()) - 1;
    while (j < b.size() && b[j] == next) b_idx[j++] = static_cast<long>(u.size()) - 1;
  }
  return u;
}

}  // namespace detail

// Draw order is fixed: sync count, sync times, async count, async times, X,
// Z (joint on the union grid), eps [, nu, omega, tau in dependent mode].
inline GeneratedSubject gen_subject_detailed(const SimulationScenario& s, Rng& rng,
                                             long index) {
  std::poisson_distribution<long> pois(s.obs_rate);
  std::normal_distribution<double> normal(0.0, 1.0);

  const long m = std::min<long>(1 + pois(rng), s.max_obs);
  const std::vector<double> sync_times = detail::sorted_uniforms(m, rng);
  std::vector<double> async_times;
  if (s.asynchronous) {
    const long l = std::min<long>(1 + pois(rng), s.max_obs);
    async_times = detail::sorted_uniforms(l, rng);
  } else {
    async_times = sync_times;
  }

  std::vector<long> sync_in_union, async_in_union;
  const std::vector<double> grid =
      detail::union_grid(sync_times, async_times, sync_in_union, async_in_union);

  Eigen::VectorXd x, z_union, eps;
  if (s.correlation == SimulationScenario::Correlation::Independent) {
    x = sample_gp(sync_times, s.x_process, rng);
    z_union = sample_gp(grid, s.z_process, rng);
    eps = sample_gp(sync_times, s.eps_process, rng);
  } else {
    // Uncorrelated-but-dependent mode: one latent process nu carries all the
    // fluctuation, X = E{X} + omega nu, Z = E{Z} + nu, eps = tau nu. The
    // covariate covariances stay e^{-|t-s|} while X and Z share nu, so they
    // are uncorrelated (E omega = 0) yet dependent.
    const ProcessSpec nu_spec{MeanTag::Zero, CovTag::ExpAbs};
    const Eigen::VectorXd nu = sample_gp(grid, nu_spec, rng);
    const double omega = normal(rng);
    const double tau = normal(rng);
    x.resize(m);
    eps.resize(m);
    for (long j = 0; j < m; ++j) {
      x(j) = s.x_process.mean_at(sync_times[j]) + omega * nu(sync_in_union[j]);
      eps(j) = tau * nu(sync_in_union[j]);
    }
    z_union.resize(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g)
      z_union(g) = s.z_process.mean_at(grid[g]) + nu(g);
  }

  GeneratedSubject out;
  out.record.id = "s" + std::to_string(index + 1);
  out.record.sync_times = sync_times;
  out.record.async_times = async_times;
  out.record.sync_covariates = x;
  out.record.async_covariates.resize(async_times.size(), 1);
  for (std::size_t k = 0; k < async_times.size(); ++k)
    out.record.async_covariates(k, 0) = z_union(async_in_union[k]);
  out.latent_z_at_sync.resize(m);
  for (long j = 0; j < m; ++j) out.latent_z_at_sync(j) = z_union(sync_in_union[j]);
  out.eps_at_sync = eps;
  out.record.responses.resize(m);
  for (long j = 0; j < m; ++j)
    out.record.responses[j] =
        s.alpha + s.beta * x(j) + s.gamma * out.latent_z_at_sync(j) + eps(j);
  return out;
}

inline SubjectRecord gen_subject(const SimulationScenario& s, Rng& rng, long index) {
  return gen_subject_detailed(s, rng, index).record;
}

inline LongitudinalDataset gen_dataset(const SimulationScenario& s, Rng& rng) {
  LongitudinalDataset d;
  d.p = 1;
  d.q = 1;
  d.subjects.reserve(s.n);
  for (long i = 0; i < s.n; ++i) d.subjects.push_back(gen_subject(s, rng, i));
  return d;
}

inline LongitudinalDataset gen_dataset(const SimulationScenario& s, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  return gen_dataset(s, rng);
}

// How an estimator obtains its bandwidth inside a Monte Carlo run.
struct BandwidthRule {
  enum class Kind { Fixed, Power, CvPower } kind = Kind::Power;
  double fixed_h = 0.1;
  double exponent = -0.6;
  double cv_lo = -0.8;
  double cv_hi = -0.6;
  int cv_size = 10;
  int cv_folds = 5;

  double resolve(long n) const {
    switch (kind) {
      case Kind::Fixed: return fixed_h;
      case Kind::Power: return std::pow(static_cast<double>(n), exponent);
      case Kind::CvPower: break;
    }
    throw std::logic_error("BandwidthRule: cross-validated rule has no closed form");
  }
};

enum class EstimatorTag {
  Naive,
  Plm,
  Centering,
  Full,
  Lvcf,
  CenteringLvcf,
  TwoStepCentering,
  TwoStepPlm,
  Ks
};

inline std::string estimator_name(EstimatorTag t) {
  switch (t) {
    case EstimatorTag::Naive: return "naive";
    case EstimatorTag::Plm: return "plm";
    case EstimatorTag::Centering: return "centering";
    case EstimatorTag::Full: return "full";
    case EstimatorTag::Lvcf: return "lvcf";
    case EstimatorTag::CenteringLvcf: return "centering+lvcf";
    case EstimatorTag::TwoStepCentering: return "centering+ks";
    case EstimatorTag::TwoStepPlm: return "plm+ks";
    case EstimatorTag::Ks: return "ks";
  }
  return "?";
}

struct McConfig {
  SimulationScenario scenario;
  std::vector<EstimatorTag> estimators;
  long reps = 100;
  std::uint64_t base_seed = 1;
  BandwidthRule sync_rule;   // plm/centering and two-step step 1
  BandwidthRule async_rule{BandwidthRule::Kind::CvPower};  // step 2 and ks
  int threads = 0;           // 0: hardware concurrency
};

struct McParamSummary {
  std::string param;
  double bias = 0.0;
  double sd = std::numeric_limits<double>::quiet_NaN();
  double se = 0.0;
  double cp = 0.0;
};

struct MonteCarloSummary {
  std::string method;
  std::vector<McParamSummary> params;
  long reps = 0;       // successful replications summarized
  long failures = 0;
  std::map<std::string, long> failure_reasons;
};

// Bias | SD | mean SE | coverage of the 95% normal interval, per parameter,
// over the supplied replications.
inline MonteCarloSummary summarize(const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& ses,
                                   const Eigen::VectorXd& truth,
                                   const std::vector<std::string>& names,
                                   const std::string& method) {
  const long reps = estimates.rows();
  const long dim = estimates.cols();
  if (reps < 1) throw std::invalid_argument("summarize: need at least one replication");
  MonteCarloSummary out;
  out.method = method;
  out.reps = reps;
  for (long j = 0; j < dim; ++j) {
    McParamSummary row;
    row.param = names[j];
    const double mean = estimates.col(j).mean();
    row.bias = mean - truth(j);
    if (reps > 1)
      row.sd = std::sqrt((estimates.col(j).array() - mean).square().sum() / (reps - 1));
    row.se = ses.col(j).mean();
    long covered = 0;
    for (long r = 0; r < reps; ++r)
      if (std::abs(estimates(r, j) - truth(j)) <= 1.96 * ses(r, j)) ++covered;
    row.cp = static_cast<double>(covered) / reps;
    out.params.push_back(row);
  }
  return out;
}

namespace detail {

inline std::vector<std::string> params_of(EstimatorTag tag, int p, int q) {
  std::vector<std::string> names;
  const auto xs = covariate_names("x", p);
  const auto zs = covariate_names("z", q);
  switch (tag) {
    case EstimatorTag::Plm:
    case EstimatorTag::Centering:
      return xs;
    case EstimatorTag::Naive:
      names = {"alpha"};
      names.insert(names.end(), xs.begin(), xs.end());
      return names;
    default:
      names = {"alpha"};
      names.insert(names.end(), xs.begin(), xs.end());
      names.insert(names.end(), zs.begin(), zs.end());
      return names;
  }
}

inline FitReport run_estimator(EstimatorTag tag, const LongitudinalDataset& data,
                               const McConfig& cfg, std::uint64_t cv_seed) {
  const long n = data.n();
  const auto sync_h = [&] { return KernelSpec(cfg.sync_rule.resolve(n)); };
  const auto async_h = [&](CvMethod method) {
    if (cfg.async_rule.kind != BandwidthRule::Kind::CvPower)
      return KernelSpec(cfg.async_rule.resolve(n));
    BandwidthGrid grid =
        power_grid(n, cfg.async_rule.cv_lo, cfg.async_rule.cv_hi, cfg.async_rule.cv_size);
    const CvCurve curve = cv_bandwidth(data, grid, method, cfg.async_rule.cv_folds, cv_seed);
    return KernelSpec(curve.selected_h);
  };

  switch (tag) {
    case EstimatorTag::Naive: return fit_naive(data);
    case EstimatorTag::Plm: return fit_plm(data, sync_h()).report;
    case EstimatorTag::Centering: return fit_centering(data, sync_h()).report;
    case EstimatorTag::Full: return fit_pooled_full(data);
    case EstimatorTag::Lvcf: return fit_lvcf(data);
    case EstimatorTag::CenteringLvcf: return fit_centering_lvcf(data, sync_h());
    case EstimatorTag::TwoStepCentering:
      return fit_two_step(data, Step1Method::Centering, sync_h(), async_h(CvMethod::TwoStep));
    case EstimatorTag::TwoStepPlm:
      return fit_two_step(data, Step1Method::Plm, sync_h(), async_h(CvMethod::TwoStep));
    case EstimatorTag::Ks: return fit_simultaneous(data, async_h(CvMethod::Simultaneous));
  }
  throw std::logic_error("unknown estimator tag");
}

}  // namespace detail

// Runs `reps` replications of the scenario, one independent RNG stream per
// replication derived from (base_seed, rep). Estimator failures are recorded,
// not fatal; summaries cover the successful replications only. Replications
// run in parallel; results are identical to a serial run.
inline std::vector<MonteCarloSummary> run_mc(const McConfig& cfg) {
  if (cfg.reps < 1) throw std::invalid_argument("run_mc: need reps >= 1");
  const int p = 1, q = 1;
  const long e = static_cast<long>(cfg.estimators.size());

  std::vector<std::vector<std::string>> names(e);
  std::vector<Eigen::MatrixXd> est(e), ses(e);
  for (long t = 0; t < e; ++t) {
    names[t] = detail::params_of(cfg.estimators[t], p, q);
    est[t].setConstant(cfg.reps, names[t].size(), std::numeric_limits<double>::quiet_NaN());
    ses[t] = est[t];
  }
  std::vector<std::vector<std::string>> failure(e, std::vector<std::string>(cfg.reps));

  std::atomic<long> next{0};
  auto worker = [&] {
    for (;;) {
      const long r = next.fetch_add(1);
      if (r >= cfg.reps) return;
      Rng rng = make_stream(cfg.base_seed, static_cast<std::uint64_t>(r));
      const LongitudinalDataset data = gen_dataset(cfg.scenario, rng);
      const std::uint64_t cv_seed = rng();
      for (long t = 0; t < e; ++t) {
        try {
          const FitReport rep = detail::run_estimator(cfg.estimators[t], data, cfg, cv_seed);
          for (std::size_t j = 0; j < names[t].size(); ++j) {
            est[t](r, j) = rep.estimates(j);
            ses[t](r, j) = rep.std_errors(j);
          }
        } catch (const std::exception& ex) {
          failure[t][r] = ex.what();
        }
      }
    }
  };

  int threads = cfg.threads > 0
                    ? cfg.threads
                    : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = static_cast<int>(std::min<long>(threads, cfg.reps));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<MonteCarloSummary> out;
  for (long t = 0; t < e; ++t) {
    const long dim = static_cast<long>(names[t].size());
    std::vector<long> ok;
    for (long r = 0; r < cfg.reps; ++r)
      if (failure[t][r].empty()) ok.push_back(r);

    MonteCarloSummary summary;
    summary.method = estimator_name(cfg.estimators[t]);
    if (!ok.empty()) {
      Eigen::MatrixXd eok(ok.size(), dim), sok(ok.size(), dim);
      for (std::size_t i = 0; i < ok.size(); ++i) {
        eok.row(i) = est[t].row(ok[i]);
        sok.row(i) = ses[t].row(ok[i]);
      }
      Eigen::VectorXd truth(dim);
      for (long j = 0; j < dim; ++j) {
        const std::string& nm = names[t][j];
        truth(j) = nm == "alpha" ? cfg.scenario.alpha
                                 : (nm[0] == 'x' ? cfg.scenario.beta : cfg.scenario.gamma);
      }
      summary = summarize(eok, sok, truth, names[t], summary.method);
    }
    summary.failures = cfg.reps - static_cast<long>(ok.size());
    for (long r = 0; r < cfg.reps; ++r)
      if (!failure[t][r].empty()) ++summary.failure_reasons[failure[t][r]];
    out.push_back(std::move(summary));
  }
  return out;
}

// Synthetic long-format panel shaped like a cognition study: six baseline
// covariates observed with the response at 1-7 visits, one functional
// covariate on its own 1-8 visit grid. Fixed seed makes the bundled files
// reproducible.
inline LongitudinalDataset gen_bundled_example(long n, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<long> sync_count(1, 7), async_count(1, 8);

  const Eigen::VectorXd coef = [] {
    Eigen::VectorXd b(6);
    b << -0.2, 0.1, -0.5, -1.5, -0.3, -0.4;
    return b;
  }();
  const double gamma_z = 0.3;

  const ProcessSpec z_spec{MeanTag::HalfPlusT, CovTag::ExpAbs};
  const ProcessSpec eps_spec{MeanTag::Zero, CovTag::Exp2Abs};

  LongitudinalDataset d;
  d.p = 6;
  d.q = 1;
  d.subjects.reserve(n);
  for (long i = 0; i < n; ++i) {
    SubjectRecord rec;
    rec.id = "s" + std::to_string(i + 1);
    const long m = sync_count(rng);
    const long l = async_count(rng);
    rec.sync_times = detail::sorted_uniforms(m, rng);
    rec.async_times = detail::sorted_uniforms(l, rng);

    Eigen::VectorXd baseline(6);
    baseline(0) = normal(rng);                    // age (standardized)
    baseline(1) = normal(rng);                    // education (standardized)
    baseline(2) = unif(rng) < 0.5 ? 1.0 : 0.0;    // impairment indicator
    baseline(3) = unif(rng) < 0.25 ? 1.0 : 0.0;   // disease indicator
    baseline(4) = unif(rng) < 0.4 ? 1.0 : 0.0;    // allele count 1
    baseline(5) = unif(rng) < 0.15 ? 1.0 : 0.0;   // allele count 2

    std::vector<long> sync_in_union, async_in_union;
    const std::vector<double> grid =
        detail::union_grid(rec.sync_times, rec.async_times, sync_in_union, async_in_union);
    const Eigen::VectorXd z_union = sample_gp(grid, z_spec, rng);
    const Eigen::VectorXd eps = sample_gp(rec.sync_times, eps_spec, rng);

    rec.sync_covariates.resize(m, 6);
    rec.responses.resize(m);
    for (long j = 0; j < m; ++j) {
      rec.sync_covariates.row(j) = baseline.transpose();
      rec.responses[j] =
          1.0 + baseline.dot(coef) + gamma_z * z_union(sync_in_union[j]) + 0.5 * eps(j);
    }
    rec.async_covariates.resize(l, 1);
    for (long k = 0; k < l; ++k) rec.async_covariates(k, 0) = z_union(async_in_union[k]);
    d.subjects.push_back(std::move(rec));
  }
  return d;
}

}  // namespace asynclong
