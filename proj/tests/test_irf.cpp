#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "curiolab/irf.hpp"
#include "curiolab/sim.hpp"

using namespace curiolab;

namespace {

Trajectory make_traj(Scenario k, std::uint64_t seed, int T = 60) {
  return simulate(generate_scenario(k, seed), T, 0.01);
}

TransitionDataset shared_dataset() {
  std::vector<Trajectory> trajs;
  for (std::uint64_t s = 50; s < 53; ++s)
    trajs.push_back(make_traj(Scenario::Collide, s, 40));
  return TransitionDataset::from_trajectories(trajs);
}

WorldModel fitted_wm(std::uint64_t seed, const TransitionDataset& data) {
  WmConfig cfg;
  cfg.hidden = {16, 16};
  WorldModel wm = WorldModel::init(seed, cfg);
  wm.fit_normalizers(data);
  return wm;
}

}  // namespace

TEST_CASE("total_ir sums the series") {
  RewardSeries s;
  s.per_step = {1.0, 2.0, 3.0};
  CHECK(total_ir(s) == 6.0);
  s.per_step.clear();
  CHECK(total_ir(s) == 0.0);
}

TEST_CASE("total_ir matches a compensated-summation oracle") {
  Rng rng(123);
  RewardSeries s;
  for (int i = 0; i < 100; ++i) s.per_step.push_back(rng.uniform(-1.0, 1.0));
  // Kahan summation oracle.
  double sum = 0.0, comp = 0.0;
  for (double x : s.per_step) {
    const double y = x - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  CHECK(std::abs(total_ir(s) - sum) < 1e-9);
}

TEST_CASE("scene features: static single object") {
  // One distractor-free static-free scene: a single sphere at rest on ground.
  Scene sc;
  ObjectSpec o;
  o.object_id = 0;
  o.particle_radius = 0.1;
  o.restitution = 0.0;
  sc.objects.push_back(o);
  sc.state.positions.push_back(Vec3(0.0, 0.1, 0.0));
  sc.state.velocities.push_back(Vec3::Zero());
  sc.state.object_index.push_back(0);
  Trajectory t = simulate(sc, 20, 0.01);
  // Remove ground-contact events to isolate the no-contact case.
  t.collisions.clear();
  FeatureVector fv = scene_features(t);
  CHECK(fv.at("collision_total") == 0.0);
  CHECK(fv.at("velocity_mean") == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(fv.at("n_objects") == 1.0);
  CHECK(fv.at("n_distractors") == 0.0);
}

TEST_CASE("covariance trace of two fixed centroids is 2.0") {
  // Hand oracle: centroids (0,0,0) and (2,0,0); sample covariance with
  // divisor n-1 gives variance 2 on x, 0 elsewhere -> trace 2.
  Scene sc;
  for (int i = 0; i < 2; ++i) {
    ObjectSpec o;
    o.object_id = i;
    o.is_distractor = true;  // keep them fixed
    o.particle_radius = 0.1;
    sc.objects.push_back(o);
    sc.state.positions.push_back(Vec3(2.0 * i, 0.0, 0.0));
    sc.state.velocities.push_back(Vec3::Zero());
    sc.state.object_index.push_back(i);
  }
  Trajectory t = simulate(sc, 10, 0.01);
  FeatureVector fv = scene_features(t);
  CHECK(fv.at("position_covtrace_initial") == doctest::Approx(2.0));
  CHECK(fv.at("position_covtrace_mean") == doctest::Approx(2.0));
  CHECK(fv.at("position_covtrace_min") == doctest::Approx(2.0));
  CHECK(fv.at("position_covtrace_max") == doctest::Approx(2.0));
}

TEST_CASE("collision_total equals a recount of the event table") {
  Trajectory t = make_traj(Scenario::Dominoes, 1, 150);
  FeatureVector fv = scene_features(t);
  long recount = 0;
  for (const auto& ev : t.collisions) {
    (void)ev;
    ++recount;
  }
  CHECK(fv.at("collision_total") == static_cast<double>(recount));
  CHECK(fv.at("collision_total") > 0.0);
}

TEST_CASE("aggregate features are invariant to object relabeling") {
  Trajectory t = make_traj(Scenario::Support, 3, 40);
  Trajectory relabeled = t;
  // Swap ids of the first two objects everywhere.
  const int a = relabeled.objects[0].object_id;
  const int b = relabeled.objects[1].object_id;
  auto swap_id = [&](int id) { return id == a ? b : (id == b ? a : id); };
  for (auto& o : relabeled.objects) o.object_id = swap_id(o.object_id);
  for (auto& s : relabeled.states)
    for (auto& oi : s.object_index) oi = swap_id(oi);
  for (auto& ev : relabeled.collisions) {
    ev.object_a = ev.object_a == kGroundId ? kGroundId : swap_id(ev.object_a);
    ev.object_b = ev.object_b == kGroundId ? kGroundId : swap_id(ev.object_b);
  }
  FeatureVector fa = scene_features(t);
  FeatureVector fb = scene_features(relabeled);
  for (std::size_t i = 0; i < fa.values.size(); ++i)
    CHECK(fa.values[i] == doctest::Approx(fb.values[i]).epsilon(1e-12));
}

TEST_CASE("rnd_init contract") {
  TransitionDataset data = shared_dataset();
  WorldModel wm = fitted_wm(1, data);
  CHECK_THROWS_AS(rnd_init(5, 5, 8, wm.input_norm), std::invalid_argument);

  RndConfig cfg;
  cfg.hidden = {8};
  RndPair a = rnd_init(1, 2, 8, wm.input_norm, cfg);
  RndPair b = rnd_init(1, 2, 8, wm.input_norm, cfg);
  CHECK(a.target.weights[0] == b.target.weights[0]);
  CHECK(a.predictor.weights[0] == b.predictor.weights[0]);

  Trajectory t = make_traj(Scenario::Drop, 2, 10);
  CHECK(a.embed(a.target, t.states[0]).size() == 8);
}

TEST_CASE("rnd training lowers RMSE and never touches the target") {
  TransitionDataset data = shared_dataset();
  WorldModel wm = fitted_wm(1, data);
  RndConfig cfg;
  cfg.hidden = {16};
  RndPair pair = rnd_init(3, 4, 8, wm.input_norm, cfg);
  const Eigen::MatrixXd target_before = pair.target.weights[0];

  std::vector<SceneState> states;
  for (const auto& [s, next] : data.pairs) states.push_back(s);
  Trajectory probe = make_traj(Scenario::Collide, 50, 40);

  const double before = rnd_reward(pair, probe).total;
  rnd_train(pair, states, 800, 1e-3);
  const double after = rnd_reward(pair, probe).total;
  CHECK(after < before);
  CHECK(pair.target.weights[0] == target_before);

  SUBCASE("steps=0 is a no-op") {
    RndPair p2 = rnd_init(3, 4, 8, wm.input_norm, cfg);
    rnd_train(p2, states, 0, 1e-3);
    CHECK(p2.train_steps == 0);
  }
}

TEST_CASE("rnd reward is zero for identical networks and nonnegative always") {
  TransitionDataset data = shared_dataset();
  WorldModel wm = fitted_wm(1, data);
  RndConfig cfg;
  cfg.hidden = {8};
  RndPair pair = rnd_init(7, 8, 6, wm.input_norm, cfg);
  pair.predictor = pair.target;  // copy weights
  Trajectory t = make_traj(Scenario::Roll, 4, 30);
  RewardSeries s = rnd_reward(pair, t);
  for (double r : s.per_step) CHECK(r == 0.0);

  RndPair distinct = rnd_init(7, 8, 6, wm.input_norm, cfg);
  for (double r : rnd_reward(distinct, t).per_step) CHECK(r >= 0.0);
}

TEST_CASE("rnd reward matches a by-hand computation on a tiny embedding") {
  TransitionDataset data = shared_dataset();
  WorldModel wm = fitted_wm(1, data);
  RndConfig cfg;
  cfg.hidden = {4};
  RndPair pair = rnd_init(11, 12, 2, wm.input_norm, cfg);
  Trajectory t = make_traj(Scenario::Drop, 9, 5);
  RewardSeries s = rnd_reward(pair, t);
  const Eigen::VectorXd a = pair.embed(pair.target, t.states[2]);
  const Eigen::VectorXd b = pair.embed(pair.predictor, t.states[2]);
  const double by_hand = std::sqrt(((a[0] - b[0]) * (a[0] - b[0]) +
                                    (a[1] - b[1]) * (a[1] - b[1])) /
                                   2.0);
  CHECK(s.per_step[2] == doctest::Approx(by_hand).epsilon(1e-12));
}

TEST_CASE("adversarial reward") {
  Trajectory t = make_traj(Scenario::Collide, 3, 40);
  TransitionDataset data = shared_dataset();

  SUBCASE("oracle model gives exactly zero") {
    Checkpoint oracle{WorldModel::oracle(t.objects, t.springs, t.dt), 0};
    for (int k = 1; k <= 4; ++k) {
      RewardSeries s = adversarial_reward(oracle, t, k);
      CHECK(s.total == 0.0);
      CHECK(static_cast<int>(s.per_step.size()) == t.length() - k);
    }
  }

  SUBCASE("k=1 matches an independent loss recomputation") {
    Checkpoint ckpt{fitted_wm(5, data), 0};
    RewardSeries s = adversarial_reward(ckpt, t, 1);
    for (int i = 0; i + 1 < t.length(); ++i) {
      CHECK(s.per_step[i] ==
            ckpt.params.loss(t.states[i], t.states[i + 1], 1));
      CHECK(s.per_step[i] >= 0.0);
    }
  }

  SUBCASE("k >= T is rejected") {
    Trajectory tiny = make_traj(Scenario::Drop, 1, 3);
    Checkpoint ckpt{fitted_wm(5, data), 0};
    CHECK_THROWS_AS(adversarial_reward(ckpt, tiny, 3), std::invalid_argument);
  }
}

TEST_CASE("trained model beats untrained on most training trajectories") {
  std::vector<Trajectory> trajs;
  for (std::uint64_t s = 50; s < 56; ++s)
    trajs.push_back(make_traj(Scenario::Collide, s, 40));
  TransitionDataset data = TransitionDataset::from_trajectories(trajs);

  WmConfig cfg;
  cfg.hidden = {16, 16};
  WorldModel wm = WorldModel::init(1, cfg);
  TrainSchedule sched;
  sched.checkpoint_steps = {0, 300};
  auto ckpts = wm.train(data, sched);

  int wins = 0;
  for (const auto& t : trajs) {
    const double untrained = adversarial_reward(ckpts[0], t, 1).total;
    const double trained = adversarial_reward(ckpts[1], t, 1).total;
    if (trained <= untrained) ++wins;
  }
  CHECK(wins * 10 >= static_cast<int>(trajs.size()) * 9);
}

TEST_CASE("disagreement reward") {
  Trajectory t = make_traj(Scenario::Dominoes, 6, 30);
  TransitionDataset data = shared_dataset();

  SUBCASE("identical checkpoints give (numerically) zero variance") {
    // (x+x+x)/3 rounds, so deviations of ~1 ulp survive; bound instead of
    // demanding an exact zero.
    WorldModel wm = fitted_wm(2, data);
    std::vector<Checkpoint> ens = {{wm, 0}, {wm, 0}, {wm, 0}};
    RewardSeries s = disagreement_reward(ens, t, 2);
    for (double r : s.per_step) {
      CHECK(r >= 0.0);
      CHECK(r < 1e-28);
    }
  }

  SUBCASE("two-point constant offset gives sample variance 0.02") {
    // Variance of {x, x+0.2} with divisor n-1 is 0.02 on every component.
    WorldModel a = fitted_wm(2, data);
    WorldModel b = a;
    b.delta_norm.mean.array() += 0.2;  // shifts every predicted component
    std::vector<Checkpoint> ens = {{a, 0}, {b, 0}};
    RewardSeries s = disagreement_reward(ens, t, 1);
    for (double r : s.per_step) CHECK(r == doctest::Approx(0.02).epsilon(1e-9));
  }

  SUBCASE("matches a brute-force variance loop") {
    std::vector<Checkpoint> ens = {
        {fitted_wm(2, data), 0}, {fitted_wm(3, data), 0}, {fitted_wm(4, data), 0}};
    RewardSeries s = disagreement_reward(ens, t, 1);
    const int probe_t = 7;
    std::vector<SceneState> preds;
    for (const auto& c : ens) preds.push_back(c.params.rollout(t.states[probe_t], 1));
    double var_sum = 0.0;
    long n_comp = 0;
    for (int i = 0; i < preds[0].particle_count(); ++i)
      for (int c = 0; c < 6; ++c) {
        double vals[3];
        for (int m = 0; m < 3; ++m)
          vals[m] = c < 3 ? preds[m].positions[i][c]
                          : preds[m].velocities[i][c - 3];
        const double mean = (vals[0] + vals[1] + vals[2]) / 3.0;
        double ss = 0.0;
        for (double v : vals) ss += (v - mean) * (v - mean);
        var_sum += ss / 2.0;
        ++n_comp;
      }
    CHECK(s.per_step[probe_t] ==
          doctest::Approx(var_sum / n_comp).epsilon(1e-12));
  }

  SUBCASE("ensemble of one is rejected") {
    std::vector<Checkpoint> ens = {{fitted_wm(2, data), 0}};
    CHECK_THROWS_AS(disagreement_reward(ens, t, 1), std::invalid_argument);
  }
}

TEST_CASE("delta progress reward") {
  Trajectory t = make_traj(Scenario::Drop, 8, 30);
  TransitionDataset data = shared_dataset();
  WorldModel untrained = fitted_wm(6, data);

  SUBCASE("old == new gives zero") {
    RewardSeries s =
        delta_progress_reward({untrained, 0}, {untrained, 0}, t, 1);
    for (double r : s.per_step) CHECK(r == 0.0);
  }

  SUBCASE("old untrained, new oracle equals adversarial(untrained)") {
    Checkpoint oracle{WorldModel::oracle(t.objects, t.springs, t.dt), 100};
    RewardSeries dp = delta_progress_reward({untrained, 0}, oracle, t, 2);
    RewardSeries adv = adversarial_reward({untrained, 0}, t, 2);
    REQUIRE(dp.per_step.size() == adv.per_step.size());
    for (std::size_t i = 0; i < dp.per_step.size(); ++i)
      CHECK(dp.per_step[i] == adv.per_step[i]);
  }

  SUBCASE("total identity against adversarial difference") {
    WorldModel other = fitted_wm(7, data);
    RewardSeries dp =
        delta_progress_reward({untrained, 0}, {other, 10}, t, 1);
    const double advo = adversarial_reward({untrained, 0}, t, 1).total;
    const double advn = adversarial_reward({other, 10}, t, 1).total;
    CHECK(dp.total == doctest::Approx(advo - advn).epsilon(1e-9));
  }

  SUBCASE("reversed checkpoint order is rejected") {
    WorldModel other = fitted_wm(7, data);
    CHECK_THROWS_AS(
        delta_progress_reward({other, 10}, {untrained, 0}, t, 1),
        std::invalid_argument);
  }
}

TEST_CASE("sweep shapes and determinism") {
  std::vector<Trajectory> trajs = {make_traj(Scenario::Collide, 1, 20),
                                   make_traj(Scenario::Drop, 2, 20)};
  TransitionDataset data = shared_dataset();

  std::vector<std::vector<Checkpoint>> ensembles;
  for (std::uint64_t seed = 1; seed <= 2; ++seed) {
    WmConfig cfg;
    cfg.hidden = {8};
    WorldModel wm = WorldModel::init(seed, cfg);
    TrainSchedule sched;
    sched.checkpoint_steps = {0, 20};
    sched.batch_size = 8;
    ensembles.push_back(wm.train(data, sched));
  }
  RndConfig rc;
  rc.hidden = {8};
  std::vector<std::pair<long, RndPair>> rnds;
  rnds.emplace_back(0, rnd_init(1, 2, 4, ensembles[0][0].params.input_norm, rc));

  IrTable table = sweep(ensembles, rnds, {1}, {20}, trajs);
  // Per trajectory: rnd(1) + per ckpt (adversarial + disagreement) * 2 ckpts
  // + delta_progress at step 20 only.
  const std::size_t expect_per_traj = 1 + 2 * 2 + 1;
  CHECK(table.rows.size() == expect_per_traj * trajs.size());

  auto adv = table.column("adversarial", 20, 1);
  CHECK(adv.size() == trajs.size());

  IrTable again = sweep(ensembles, rnds, {1}, {20}, trajs);
  REQUIRE(again.rows.size() == table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    CHECK(table.rows[i].total_ir == again.rows[i].total_ir);

  SUBCASE("oracle checkpoints zero the adversarial column") {
    std::vector<std::vector<Checkpoint>> oracle_ens(1);
    oracle_ens[0].push_back(
        {WorldModel::oracle(trajs[0].objects, trajs[0].springs, 0.01), 0});
    IrTable ot = sweep(oracle_ens, {}, {1}, {}, {trajs[0]});
    for (const auto& row : ot.rows)
      if (row.irf == "adversarial") CHECK(row.total_ir == 0.0);
  }

  SUBCASE("delta larger than max step is rejected") {
    CHECK_THROWS_AS(sweep(ensembles, rnds, {1}, {999}, trajs),
                    std::invalid_argument);
  }

  SUBCASE("csv round trip") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "curiolab_irf_test";
    fs::create_directories(dir);
    const std::string path = (dir / "table.csv").string();
    write_ir_table_csv(table, path, "cafe");
    std::string hash;
    IrTable back = read_ir_table_csv(path, &hash);
    CHECK(hash == "cafe");
    REQUIRE(back.rows.size() == table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      CHECK(back.rows[i].trajectory_id == table.rows[i].trajectory_id);
      CHECK(back.rows[i].total_ir == table.rows[i].total_ir);
    }
    CHECK(back.features.size() == table.features.size());
  }
}
