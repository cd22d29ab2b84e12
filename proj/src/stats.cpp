#include "curiolab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace curiolab {

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation (divisor n-1).
double stddev_of(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<double> to_vec(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

// OLS on the given columns; returns [intercept, coefs...].
Eigen::VectorXd ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::MatrixXd A(X.rows(), X.cols() + 1);
  A.col(0).setOnes();
  A.rightCols(X.cols()) = X;
  return A.colPivHouseholderQr().solve(y);
}

Eigen::VectorXd ols_predict(const Eigen::VectorXd& coef,
                            const Eigen::MatrixXd& X) {
  return Eigen::VectorXd::Constant(X.rows(), coef[0]) +
         X * coef.tail(coef.size() - 1);
}

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

struct Standardized {
  Eigen::MatrixXd X;                 // kept, standardized columns
  Eigen::VectorXd x_mean, x_std;     // of kept columns
  std::vector<int> kept;             // original column indices
  std::vector<int> dropped;          // constant columns
};

Standardized standardize(const Eigen::MatrixXd& X) {
  const auto n = X.rows();
  if (n < 3) throw std::invalid_argument("lasso: need at least 3 rows");
  Standardized s;
  std::vector<double> means, stds;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double m = X.col(j).mean();
    const double sd =
        std::sqrt((X.col(j).array() - m).square().sum() / double(n - 1));
    if (sd < 1e-12) {
      s.dropped.push_back(static_cast<int>(j));
    } else {
      s.kept.push_back(static_cast<int>(j));
      means.push_back(m);
      stds.push_back(sd);
    }
  }
  s.X.resize(n, static_cast<Eigen::Index>(s.kept.size()));
  s.x_mean = Eigen::Map<Eigen::VectorXd>(means.data(), means.size());
  s.x_std = Eigen::Map<Eigen::VectorXd>(stds.data(), stds.size());
  for (std::size_t c = 0; c < s.kept.size(); ++c)
    s.X.col(c) = (X.col(s.kept[c]).array() - s.x_mean[c]) / s.x_std[c];
  return s;
}

}  // namespace

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("pearson_r: size mismatch");
  if (x.size() < 3) throw std::invalid_argument("pearson_r: need n >= 3");
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0)
    throw std::invalid_argument("pearson_r: zero-variance input");
  return sxy / std::sqrt(sxx * syy);
}

ReliabilityResult split_half_reliability(const Eigen::MatrixXd& ratings,
                                         int n_splits, std::uint64_t seed) {
  const auto n_stimuli = ratings.rows();
  const auto n_raters = ratings.cols();
  if (n_stimuli < 3) throw std::invalid_argument("reliability: need >= 3 stimuli");
  if (n_raters < 2) throw std::invalid_argument("reliability: need >= 2 raters");
  if (n_splits < 1) throw std::invalid_argument("reliability: need >= 1 split");

  Rng rng(seed);
  std::vector<int> order(static_cast<std::size_t>(n_raters));
  std::iota(order.begin(), order.end(), 0);
  const auto half_b = static_cast<std::size_t>(n_raters / 2);
  const std::size_t half_a = static_cast<std::size_t>(n_raters) - half_b;

  double r_sum = 0.0;
  for (int s = 0; s < n_splits; ++s) {
    rng.shuffle(order);
    std::vector<double> ma(n_stimuli, 0.0), mb(n_stimuli, 0.0);
    for (Eigen::Index i = 0; i < n_stimuli; ++i) {
      double a = 0.0, b = 0.0;
      for (std::size_t j = 0; j < half_a; ++j) a += ratings(i, order[j]);
      for (std::size_t j = half_a; j < order.size(); ++j)
        b += ratings(i, order[j]);
      ma[i] = a / double(half_a);
      mb[i] = b / double(half_b);
    }
    r_sum += pearson_r(ma, mb);
  }
  ReliabilityResult res;
  res.n_splits = n_splits;
  res.split_half_r = r_sum / n_splits;
  res.spearman_brown = 2.0 * res.split_half_r / (1.0 + res.split_half_r);
  return res;
}

LassoFit lasso_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   double lambda) {
  if (X.rows() != y.size())
    throw std::invalid_argument("lasso: X/y row mismatch");
  if (lambda < 0.0) throw std::invalid_argument("lasso: negative lambda");
  const auto n = X.rows();
  Standardized s = standardize(X);
  const double y_mean = y.mean();
  Eigen::VectorXd yc = y.array() - y_mean;

  const auto p = s.X.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd resid = yc;  // yc - X beta
  // Per-column squared norm scaled by 1/n, constant across sweeps.
  Eigen::VectorXd col_sq(p);
  for (Eigen::Index j = 0; j < p; ++j)
    col_sq[j] = s.X.col(j).squaredNorm() / double(n);

  constexpr int kMaxSweeps = 10000;
  constexpr double kTol = 1e-8;
  int sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double old = beta[j];
      const double rho =
          s.X.col(j).dot(resid) / double(n) + col_sq[j] * old;
      const double updated = soft_threshold(rho, lambda) / col_sq[j];
      if (updated != old) {
        resid -= s.X.col(j) * (updated - old);
        beta[j] = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    if (max_change < kTol) break;
  }

  LassoFit fit;
  fit.lambda = lambda;
  fit.n_iter = sweep + 1;
  fit.dropped_columns = s.dropped;
  fit.beta = Eigen::VectorXd::Zero(X.cols());
  double dot = 0.0;
  for (Eigen::Index c = 0; c < p; ++c) {
    const double b_orig = beta[c] / s.x_std[c];
    fit.beta[s.kept[c]] = b_orig;
    dot += b_orig * s.x_mean[c];
  }
  fit.intercept = y_mean - dot;
  return fit;
}

std::vector<double> lasso_lambda_grid(const Eigen::MatrixXd& X,
                                      const Eigen::VectorXd& y, int n_lambda) {
  if (n_lambda < 2) throw std::invalid_argument("lambda grid: need >= 2 points");
  Standardized s = standardize(X);
  if (s.kept.empty())
    throw std::invalid_argument("lambda grid: all columns constant");
  Eigen::VectorXd yc = y.array() - y.mean();
  double lambda_max = 0.0;
  for (Eigen::Index j = 0; j < s.X.cols(); ++j)
    lambda_max =
        std::max(lambda_max, std::abs(s.X.col(j).dot(yc)) / double(X.rows()));
  if (lambda_max <= 0.0)
    throw std::invalid_argument("lambda grid: zero-variance target");
  std::vector<double> grid(static_cast<std::size_t>(n_lambda));
  const double log_max = std::log(lambda_max);
  const double log_min = std::log(lambda_max * 1e-3);
  for (int i = 0; i < n_lambda; ++i)
    grid[i] = std::exp(log_max + (log_min - log_max) * i / (n_lambda - 1));
  return grid;
}

LooResult loo_select_lambda(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("loo: empty lambda grid");
  const auto n = X.rows();
  if (n < 4) throw std::invalid_argument("loo: need >= 4 rows");
  LooResult res;
  res.mse_per_lambda.assign(grid.size(), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::MatrixXd Xt(n - 1, X.cols());
    Eigen::VectorXd yt(n - 1);
    Xt.topRows(i) = X.topRows(i);
    yt.head(i) = y.head(i);
    Xt.bottomRows(n - 1 - i) = X.bottomRows(n - 1 - i);
    yt.tail(n - 1 - i) = y.tail(n - 1 - i);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      LassoFit fit = lasso_fit(Xt, yt, grid[g]);
      const double pred = fit.intercept + X.row(i).dot(fit.beta);
      res.mse_per_lambda[g] += (pred - y[i]) * (pred - y[i]) / double(n);
    }
  }
  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g)
    if (res.mse_per_lambda[g] < res.mse_per_lambda[best]) best = g;
  // Ties (within the grid ordering, descending lambda) keep the earlier,
  // larger lambda, which the strict < above already does for a descending
  // grid; enforce it regardless of grid order.
  for (std::size_t g = 0; g < grid.size(); ++g)
    if (res.mse_per_lambda[g] == res.mse_per_lambda[best] &&
        grid[g] > grid[best])
      best = g;
  res.lambda = grid[best];
  res.loo_mse = res.mse_per_lambda[best];
  return res;
}

SplitEval evaluate_splits(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          double lambda, int n_splits, std::uint64_t seed) {
  const auto n = X.rows();
  if (n < 10) throw std::invalid_argument("evaluate_splits: need >= 10 rows");
  if (n_splits < 2)
    throw std::invalid_argument("evaluate_splits: need >= 2 splits");
  const auto n_test = std::max<Eigen::Index>(3, n / 5);
  const auto n_train = n - n_test;

  Rng rng(seed);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  SplitEval ev;
  std::vector<double> pooled_pred, pooled_y;
  for (int s = 0; s < n_splits; ++s) {
    rng.shuffle(order);
    Eigen::MatrixXd Xtr(n_train, X.cols()), Xte(n_test, X.cols());
    Eigen::VectorXd ytr(n_train), yte(n_test);
    for (Eigen::Index i = 0; i < n_train; ++i) {
      Xtr.row(i) = X.row(order[i]);
      ytr[i] = y[order[i]];
    }
    for (Eigen::Index i = 0; i < n_test; ++i) {
      Xte.row(i) = X.row(order[n_train + i]);
      yte[i] = y[order[n_train + i]];
    }
    Eigen::VectorXd pred;
    if (X.cols() == 1) {
      pred = ols_predict(ols(Xtr, ytr), Xte);
    } else {
      LassoFit fit = lasso_fit(Xtr, ytr, lambda);
      pred = Eigen::VectorXd::Constant(n_test, fit.intercept) + Xte * fit.beta;
    }
    // A constant prediction or target on a split carries no correlation
    // signal; score it 0 rather than aborting the whole evaluation.
    double r = 0.0;
    try {
      r = pearson_r(to_vec(pred), to_vec(yte));
    } catch (const std::invalid_argument&) {
    }
    ev.per_split_r.push_back(r);
    for (Eigen::Index i = 0; i < n_test; ++i) {
      pooled_pred.push_back(pred[i]);
      pooled_y.push_back(yte[i]);
    }
  }
  ev.mean_r = mean_of(ev.per_split_r);
  ev.sem_r = stddev_of(ev.per_split_r, ev.mean_r) /
             std::sqrt(double(ev.per_split_r.size()));
  try {
    ev.pooled_r = pearson_r(pooled_pred, pooled_y);
  } catch (const std::invalid_argument&) {
    ev.pooled_r = 0.0;
  }
  return ev;
}

ScenarioMatrix per_scenario_matrix(
    const std::vector<std::string>& predictor_names,
    const std::vector<std::vector<double>>& predictors,
    const std::vector<double>& y, const std::vector<Scenario>& scenario_of) {
  if (predictor_names.size() != predictors.size())
    throw std::invalid_argument("scenario matrix: name/column count mismatch");
  if (y.size() != scenario_of.size())
    throw std::invalid_argument("scenario matrix: y/scenario size mismatch");
  for (const auto& p : predictors)
    if (p.size() != y.size())
      throw std::invalid_argument("scenario matrix: predictor size mismatch");

  ScenarioMatrix m;
  m.predictor_names = predictor_names;
  const auto scenarios = all_scenarios();
  m.scenarios.assign(scenarios.begin(), scenarios.end());
  auto cell_of = [&](const std::vector<double>& x,
                     const std::vector<double>& yy) {
    ScenarioCell c;
    c.n = static_cast<int>(x.size());
    try {
      c.r = pearson_r(x, yy);
    } catch (const std::invalid_argument&) {
      c.degenerate = true;
    }
    return c;
  };
  for (std::size_t p = 0; p < predictors.size(); ++p) {
    ScenarioCell overall = cell_of(predictors[p], y);
    std::vector<ScenarioCell> row;
    bool consistent = !overall.degenerate;
    for (Scenario sc : m.scenarios) {
      std::vector<double> xs, ys;
      for (std::size_t i = 0; i < y.size(); ++i)
        if (scenario_of[i] == sc) {
          xs.push_back(predictors[p][i]);
          ys.push_back(y[i]);
        }
      ScenarioCell c = cell_of(xs, ys);
      if (!c.degenerate && !overall.degenerate &&
          std::signbit(c.r) != std::signbit(overall.r) && c.r != 0.0)
        consistent = false;
      row.push_back(c);
    }
    m.cells.push_back(std::move(row));
    m.sign_consistent.push_back(consistent);
  }
  return m;
}

std::vector<ComplementarityEntry> complementarity(
    const std::string& base, const std::vector<std::string>& names,
    const std::vector<std::vector<double>>& predictors,
    const std::vector<double>& y, int n_splits, std::uint64_t seed) {
  if (names.size() != predictors.size())
    throw std::invalid_argument("complementarity: name/column mismatch");
  const auto base_it = std::find(names.begin(), names.end(), base);
  if (base_it == names.end())
    throw std::invalid_argument("complementarity: base feature '" + base +
                                "' not in table");
  const auto base_idx = static_cast<std::size_t>(base_it - names.begin());
  const auto n = static_cast<Eigen::Index>(y.size());
  Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);

  Eigen::MatrixXd base_col =
      Eigen::Map<const Eigen::VectorXd>(predictors[base_idx].data(), n);
  const double base_r =
      evaluate_splits(base_col, yv, 0.0, n_splits, seed).mean_r;

  std::vector<ComplementarityEntry> ranked;
  for (std::size_t f = 0; f < names.size(); ++f) {
    if (f == base_idx) continue;
    Eigen::MatrixXd X(n, 2);
    X.col(0) = base_col;
    X.col(1) = Eigen::Map<const Eigen::VectorXd>(predictors[f].data(), n);
    // Two-feature fits use lambda = 0 (plain least squares) on the shared
    // splits so all candidates are compared under identical memberships.
    SplitEval ev = evaluate_splits(X, yv, 0.0, n_splits, seed);
    ranked.push_back({names[f], ev.mean_r, ev.sem_r, base_r});
  }
  std::sort(ranked.begin(), ranked.end(),
            [](const ComplementarityEntry& l, const ComplementarityEntry& r) {
              if (l.mean_r != r.mean_r) return l.mean_r > r.mean_r;
              return l.feature < r.feature;
            });
  return ranked;
}

}  // namespace curiolab
