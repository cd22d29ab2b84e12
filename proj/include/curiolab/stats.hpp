#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "curiolab/rng.hpp"
#include "curiolab/types.hpp"

namespace curiolab {

// Pearson product-moment correlation. Throws std::invalid_argument on
// size mismatch, n < 3, or a zero-variance input.
double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

struct ReliabilityResult {
  double split_half_r = 0.0;   // mean Pearson r over random half splits
  double spearman_brown = 0.0; // 2r / (1 + r)
  int n_splits = 0;
};

// Split-half reliability of a stimulus x rater matrix (rows = stimuli).
// Raters are split into random halves, per-stimulus means of each half are
// correlated, and the mean r is stepped up with Spearman-Brown. An odd
// rater count puts the extra rater in the first half.
ReliabilityResult split_half_reliability(const Eigen::MatrixXd& ratings,
                                         int n_splits, std::uint64_t seed);

struct LassoFit {
  Eigen::VectorXd beta;    // coefficients on the original scale
  double intercept = 0.0;
  double lambda = 0.0;
  std::vector<int> dropped_columns;  // constant columns excluded from the fit
  int n_iter = 0;
};

// Lasso regression: min_{b,beta} ||y - X beta - b||^2 / (2n) + lambda
// * ||beta||_1, solved by cyclic coordinate descent with soft thresholding
// on internally standardized columns. Constant columns are dropped and get
// a zero coefficient.
LassoFit lasso_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   double lambda);

// Log-spaced lambda grid from lambda_max (smallest lambda with an all-zero
// solution) down to lambda_max * 1e-3.
std::vector<double> lasso_lambda_grid(const Eigen::MatrixXd& X,
                                      const Eigen::VectorXd& y,
                                      int n_lambda = 30);

struct LooResult {
  double lambda = 0.0;
  double loo_mse = 0.0;
  std::vector<double> mse_per_lambda;
};

// Leave-one-out cross validation over the lambda grid; ties prefer the
// larger (sparser) lambda.
LooResult loo_select_lambda(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const std::vector<double>& grid);

struct CompositeModel {
  std::vector<std::string> feature_names;  // columns of X, in order
  LassoFit fit;
  double lambda = 0.0;
};

struct SplitEval {
  double mean_r = 0.0;    // mean test-split Pearson r
  double sem_r = 0.0;     // standard error of the mean over splits
  double pooled_r = 0.0;  // r of pooled test predictions vs targets
  std::vector<double> per_split_r;
};

// Evaluates a predictor column set against targets over n_splits random
// 80/20 train/test splits. A single column is fit by ordinary least
// squares on the train rows; multiple columns use the lasso at the given
// lambda. Splits are driven by `seed` so rival predictors can share them.
SplitEval evaluate_splits(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          double lambda, int n_splits, std::uint64_t seed);

struct ScenarioCell {
  double r = 0.0;
  int n = 0;
  bool degenerate = false;  // too few stimuli or zero variance
};

// Per-scenario correlation matrix: rows keyed by predictor name.
struct ScenarioMatrix {
  std::vector<std::string> predictor_names;
  std::vector<Scenario> scenarios;
  std::vector<std::vector<ScenarioCell>> cells;  // [predictor][scenario]
  // True when every non-degenerate cell in the row shares the sign of the
  // row's overall correlation.
  std::vector<bool> sign_consistent;
};

ScenarioMatrix per_scenario_matrix(
    const std::vector<std::string>& predictor_names,
    const std::vector<std::vector<double>>& predictors,
    const std::vector<double>& y, const std::vector<Scenario>& scenario_of);

struct ComplementarityEntry {
  std::string feature;   // the candidate complement to the base
  double mean_r = 0.0;   // mean held-out r of the {base, feature} model
  double sem_r = 0.0;
  double base_r = 0.0;   // base-alone mean held-out r on the same splits
};

// For every feature other than `base`, fits the two-feature linear model
// {base, feature} under the shared split protocol and ranks candidates by
// mean held-out r; ties break lexicographically on the feature name.
std::vector<ComplementarityEntry> complementarity(
    const std::string& base, const std::vector<std::string>& names,
    const std::vector<std::vector<double>>& predictors,
    const std::vector<double>& y, int n_splits, std::uint64_t seed);

}  // namespace curiolab
