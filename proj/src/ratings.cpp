#include "curiolab/ratings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "curiolab/rng.hpp"

namespace curiolab {

double RatingDataset::Stimulus::mean_rating() const {
  if (responses.empty()) return 0.0;
  return std::accumulate(responses.begin(), responses.end(), 0.0) /
         static_cast<double>(responses.size());
}

const RatingDataset::Stimulus* RatingDataset::find(
    const std::string& stimulus_id) const {
  for (const auto& s : stimuli)
    if (s.stimulus_id == stimulus_id) return &s;
  return nullptr;
}

std::vector<double> RatingDataset::mean_ratings() const {
  std::vector<double> out;
  out.reserve(stimuli.size());
  for (const auto& s : stimuli) out.push_back(s.mean_rating());
  return out;
}

RatingDataset ingest_ratings(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error(path + ": empty file");
  if (line == "stimulus_id,scenario,rater_id,response\r")
    line.pop_back();
  if (line != "stimulus_id,scenario,rater_id,response")
    throw std::runtime_error(path + ": unexpected header '" + line + "'");

  RatingDataset ds;
  std::map<std::string, std::size_t> index;          // stimulus -> slot
  std::map<std::pair<std::string, std::string>, int> seen;  // (stim, rater) -> line
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string stim, scen, rater, resp;
    if (!std::getline(ss, stim, ',') || !std::getline(ss, scen, ',') ||
        !std::getline(ss, rater, ',') || !std::getline(ss, resp, ','))
      throw std::runtime_error(path + ": malformed row at line " +
                               std::to_string(lineno));
    Scenario scenario = scenario_from_string(scen);  // throws with the name
    int value = 0;
    try {
      std::size_t used = 0;
      value = std::stoi(resp, &used);
      if (used != resp.size()) throw std::invalid_argument(resp);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ": non-integer response at line " +
                               std::to_string(lineno));
    }
    if (value < 1 || value > 5)
      throw std::runtime_error(path + ": response out of range 1..5 at line " +
                               std::to_string(lineno));
    auto key = std::make_pair(stim, rater);
    if (auto dup = seen.find(key); dup != seen.end())
      throw std::runtime_error(path + ": duplicate (stimulus, rater) at lines " +
                               std::to_string(dup->second) + " and " +
                               std::to_string(lineno));
    seen.emplace(key, lineno);
    auto [it, inserted] = index.emplace(stim, ds.stimuli.size());
    if (inserted) {
      RatingDataset::Stimulus s;
      s.stimulus_id = stim;
      s.scenario = scenario;
      ds.stimuli.push_back(std::move(s));
    } else if (ds.stimuli[it->second].scenario != scenario) {
      throw std::runtime_error(path + ": conflicting scenario for stimulus '" +
                               stim + "' at line " + std::to_string(lineno));
    }
    ds.stimuli[index[stim]].responses.push_back(value);
  }
  for (const auto& s : ds.stimuli)
    if (s.responses.size() < 2)
      throw std::runtime_error(path + ": stimulus '" + s.stimulus_id +
                               "' has fewer than 2 responses");
  return ds;
}

void write_ratings_csv(const RatingDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for write");
  os << "stimulus_id,scenario,rater_id,response\n";
  for (const auto& s : ds.stimuli)
    for (std::size_t r = 0; r < s.responses.size(); ++r)
      os << s.stimulus_id << "," << to_string(s.scenario) << ",r"
         << r << "," << s.responses[r] << "\n";
  if (!os) throw std::runtime_error("write failed: " + path);
}

void SyntheticRaterModel::validate() const {
  if (n_raters < 2)
    throw std::invalid_argument("rater model: need >= 2 raters");
  if (noise_std < 0.0)
    throw std::invalid_argument("rater model: negative noise std");
  if (thresholds.empty() ||
      !std::is_sorted(thresholds.begin(), thresholds.end()) ||
      std::adjacent_find(thresholds.begin(), thresholds.end()) !=
          thresholds.end())
    throw std::invalid_argument(
        "rater model: thresholds must be strictly increasing");
  if (thresholds.size() != 4)
    throw std::invalid_argument("rater model: need 4 thresholds for 1..5");
}

RatingDataset generate_synthetic_ratings(
    const SyntheticRaterModel& model,
    const std::vector<std::string>& stimulus_ids,
    const std::vector<Scenario>& scenarios,
    const std::map<std::string, std::vector<double>>& columns,
    std::uint64_t seed) {
  model.validate();
  if (stimulus_ids.size() != scenarios.size())
    throw std::invalid_argument("synthetic ratings: id/scenario size mismatch");
  const std::size_t n = stimulus_ids.size();
  if (n < 2) throw std::invalid_argument("synthetic ratings: need >= 2 stimuli");

  std::vector<double> latent(n, 0.0);
  for (const auto& [name, w] : model.driver_weights) {
    auto it = columns.find(name);
    if (it == columns.end())
      throw std::invalid_argument("synthetic ratings: missing driver '" +
                                  name + "'");
    const auto& col = it->second;
    if (col.size() != n)
      throw std::invalid_argument("synthetic ratings: driver '" + name +
                                  "' has wrong length");
    const double m = std::accumulate(col.begin(), col.end(), 0.0) / double(n);
    double ss = 0.0;
    for (double v : col) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / double(n - 1));
    if (sd < 1e-12) continue;  // constant driver contributes nothing
    for (std::size_t i = 0; i < n; ++i)
      latent[i] += w * (col[i] - m) / sd;
  }

  Rng rng(seed);
  RatingDataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    RatingDataset::Stimulus s;
    s.stimulus_id = stimulus_ids[i];
    s.scenario = scenarios[i];
    for (int r = 0; r < model.n_raters; ++r) {
      const double score = latent[i] + model.noise_std * rng.normal();
      int level = 1;
      for (double t : model.thresholds)
        if (score >= t) ++level;
      s.responses.push_back(level);
    }
    ds.stimuli.push_back(std::move(s));
  }
  return ds;
}

ReliabilityReport rating_reliability(const RatingDataset& ds, int n_splits,
                                     std::uint64_t seed) {
  if (n_splits < 1) throw std::invalid_argument("reliability: need >= 1 split");
  for (const auto& s : ds.stimuli)
    if (s.responses.size() < 2)
      throw std::invalid_argument("reliability: stimulus '" + s.stimulus_id +
                                  "' has fewer than 2 responses");

  ReliabilityReport rep;
  Rng rng(seed);
  std::vector<double> sbs;
  bool any_group = false;
  for (Scenario sc : all_scenarios()) {
    std::vector<const RatingDataset::Stimulus*> group;
    for (const auto& s : ds.stimuli)
      if (s.scenario == sc) group.push_back(&s);
    if (group.size() < 3) continue;
    any_group = true;

    double r_sum = 0.0;
    int valid = 0;
    for (int split = 0; split < n_splits; ++split) {
      std::vector<double> ha(group.size()), hb(group.size());
      for (std::size_t i = 0; i < group.size(); ++i) {
        std::vector<int> resp = group[i]->responses;
        rng.shuffle(resp);
        // Odd counts put the extra response in the first half.
        const std::size_t nb = resp.size() / 2;
        const std::size_t na = resp.size() - nb;
        double a = 0.0, b = 0.0;
        for (std::size_t j = 0; j < na; ++j) a += resp[j];
        for (std::size_t j = na; j < resp.size(); ++j) b += resp[j];
        ha[i] = a / double(na);
        hb[i] = b / double(nb);
      }
      // A half with no across-stimulus variance carries no signal; skip it.
      try {
        r_sum += pearson_r(ha, hb);
        ++valid;
      } catch (const std::invalid_argument&) {
      }
    }
    if (valid == 0) continue;  // scenario too coarse for reliability
    ReliabilityResult res;
    res.n_splits = valid;
    res.split_half_r = r_sum / valid;
    res.spearman_brown =
        2.0 * res.split_half_r / (1.0 + res.split_half_r);
    // r = -1 makes the Spearman-Brown step-up undefined; treat the
    // scenario as having no measurable reliability.
    if (!std::isfinite(res.spearman_brown)) continue;
    rep.per_scenario.emplace_back(sc, res);
    sbs.push_back(res.spearman_brown);
  }
  if (!any_group)
    throw std::invalid_argument("reliability: no scenario has >= 3 stimuli");
  // Groups existed but were all too coarse to measure: ceiling reported 0.
  if (sbs.empty()) return rep;
  rep.mean_sb = std::accumulate(sbs.begin(), sbs.end(), 0.0) / sbs.size();
  if (sbs.size() > 1) {
    double ss = 0.0;
    for (double v : sbs) ss += (v - rep.mean_sb) * (v - rep.mean_sb);
    rep.sem_sb = std::sqrt(ss / double(sbs.size() - 1)) /
                 std::sqrt(double(sbs.size()));
  }
  return rep;
}

}  // namespace curiolab
