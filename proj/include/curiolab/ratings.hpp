#pragma once

#include <map>
#include <string>
#include <vector>

#include "curiolab/stats.hpp"
#include "curiolab/types.hpp"

namespace curiolab {

struct RatingDataset {
  struct Stimulus {
    std::string stimulus_id;
    Scenario scenario = Scenario::Collide;
    std::vector<int> responses;  // 1..5
    double mean_rating() const;
  };
  std::vector<Stimulus> stimuli;

  const Stimulus* find(const std::string& stimulus_id) const;
  std::vector<double> mean_ratings() const;
};

// Reads a ratings CSV with header stimulus_id,scenario,rater_id,response.
// Malformed rows, out-of-range responses, and duplicate (stimulus, rater)
// pairs are rejected with the offending line number(s).
RatingDataset ingest_ratings(const std::string& path);

void write_ratings_csv(const RatingDataset& ds, const std::string& path);

struct SyntheticRaterModel {
  std::map<std::string, double> driver_weights;  // driver column -> weight
  double noise_std = 0.6;
  int n_raters = 32;
  std::vector<double> thresholds = {-1.5, -0.5, 0.5, 1.5};
  void validate() const;
};

// Latent score per stimulus = weighted sum of z-scored driver columns;
// each rater adds seeded Gaussian noise and the latent value is cut at the
// thresholds into 1..5.
RatingDataset generate_synthetic_ratings(
    const SyntheticRaterModel& model,
    const std::vector<std::string>& stimulus_ids,
    const std::vector<Scenario>& scenarios,
    const std::map<std::string, std::vector<double>>& columns,
    std::uint64_t seed);

struct ReliabilityReport {
  std::vector<std::pair<Scenario, ReliabilityResult>> per_scenario;
  double mean_sb = 0.0;  // cross-scenario mean of Spearman-Brown r
  double sem_sb = 0.0;
};

// Split-half reliability per scenario (handles ragged rater counts by
// splitting each stimulus's responses independently), plus the
// cross-scenario mean and SEM — the noise ceiling.
ReliabilityReport rating_reliability(const RatingDataset& ds, int n_splits,
                                     std::uint64_t seed);

}  // namespace curiolab
