#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "curiolab/pipeline.hpp"

using namespace curiolab;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "curiolab_harness" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  os << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Tiny but complete configuration; a full run takes a few seconds.
PipelineConfig tiny_config(const std::string& out_dir) {
  PipelineConfig cfg;
  cfg.seed = 7;
  cfg.train_per_scenario = 2;
  cfg.test_per_scenario = 3;
  cfg.sim.steps = 40;
  cfg.wm.hidden = {8, 8};
  cfg.schedule.checkpoint_steps = {0, 30, 60};
  cfg.ensemble_size = 3;
  cfg.k_grid = {1, 2};
  cfg.delta_grid = {30};
  cfg.rnd.hidden = {8};
  cfg.rnd.embed_dim = 8;
  cfg.rnd_train_steps = 50;
  cfg.rater.driver_weights = {{"adversarial", 1.0}};
  cfg.rater.noise_std = 0.3;
  cfg.rater.n_raters = 8;
  cfg.out_dir = out_dir;
  cfg.threads = 4;
  return cfg;
}

}  // namespace

TEST_CASE("ratings CSV ingestion") {
  const fs::path dir = temp_dir("ingest");

  SUBCASE("well-formed file round-trips") {
    write_file(dir / "ok.csv",
               "stimulus_id,scenario,rater_id,response\n"
               "s1,drop,r1,3\ns1,drop,r2,4\n"
               "s2,roll,r1,1\ns2,roll,r2,5\n"
               "s3,collide,r1,2\ns3,collide,r2,2\n");
    RatingDataset ds = ingest_ratings((dir / "ok.csv").string());
    REQUIRE(ds.stimuli.size() == 3);
    CHECK(ds.stimuli[0].stimulus_id == "s1");
    CHECK(ds.stimuli[0].scenario == Scenario::Drop);
    CHECK(ds.stimuli[0].mean_rating() == 3.5);
    CHECK(ds.find("s2")->responses.size() == 2);
    CHECK(ds.find("nope") == nullptr);

    write_ratings_csv(ds, (dir / "echo.csv").string());
    RatingDataset back = ingest_ratings((dir / "echo.csv").string());
    REQUIRE(back.stimuli.size() == 3);
    CHECK(back.stimuli[2].responses == ds.stimuli[2].responses);
  }

  SUBCASE("out-of-range response names the row") {
    write_file(dir / "range.csv",
               "stimulus_id,scenario,rater_id,response\n"
               "s1,drop,r1,3\ns1,drop,r2,6\n");
    CHECK_THROWS_WITH_AS(ingest_ratings((dir / "range.csv").string()),
                         doctest::Contains("line 3"), std::runtime_error);
  }

  SUBCASE("duplicate (stimulus, rater) names both rows") {
    write_file(dir / "dup.csv",
               "stimulus_id,scenario,rater_id,response\n"
               "s1,drop,r1,3\ns1,drop,r2,4\ns1,drop,r1,2\n");
    CHECK_THROWS_WITH_AS(ingest_ratings((dir / "dup.csv").string()),
                         doctest::Contains("lines 2 and 4"),
                         std::runtime_error);
  }

  SUBCASE("schema violations are rejected") {
    write_file(dir / "header.csv", "stim,scen,rater,resp\n");
    CHECK_THROWS_AS(ingest_ratings((dir / "header.csv").string()),
                    std::runtime_error);
    write_file(dir / "short.csv",
               "stimulus_id,scenario,rater_id,response\ns1,drop,r1\n");
    CHECK_THROWS_AS(ingest_ratings((dir / "short.csv").string()),
                    std::runtime_error);
    write_file(dir / "notint.csv",
               "stimulus_id,scenario,rater_id,response\ns1,drop,r1,x\n");
    CHECK_THROWS_AS(ingest_ratings((dir / "notint.csv").string()),
                    std::runtime_error);
    write_file(dir / "lonely.csv",
               "stimulus_id,scenario,rater_id,response\ns1,drop,r1,3\n");
    CHECK_THROWS_AS(ingest_ratings((dir / "lonely.csv").string()),
                    std::runtime_error);
  }
}

TEST_CASE("synthetic ratings") {
  std::vector<std::string> ids;
  std::vector<Scenario> scenarios;
  std::map<std::string, std::vector<double>> cols;
  Rng rng(5);
  for (Scenario sc : all_scenarios())
    for (int i = 0; i < 5; ++i) {
      ids.push_back(to_string(sc) + "_" + std::to_string(i));
      scenarios.push_back(sc);
      cols["driver"].push_back(rng.normal());
    }

  SyntheticRaterModel model;
  model.driver_weights = {{"driver", 1.0}};
  model.n_raters = 8;

  SUBCASE("zero noise makes all raters agree and the ceiling 1.0") {
    model.noise_std = 0.0;
    RatingDataset ds = generate_synthetic_ratings(model, ids, scenarios, cols, 3);
    REQUIRE(ds.stimuli.size() == ids.size());
    for (const auto& s : ds.stimuli) {
      REQUIRE(s.responses.size() == 8);
      for (int r : s.responses) {
        CHECK(r >= 1);
        CHECK(r <= 5);
        CHECK(r == s.responses[0]);
      }
    }
    ReliabilityReport rel = rating_reliability(ds, 5, 11);
    CHECK(rel.mean_sb == doctest::Approx(1.0));
  }

  SUBCASE("deterministic in the seed") {
    model.noise_std = 0.5;
    RatingDataset a = generate_synthetic_ratings(model, ids, scenarios, cols, 3);
    RatingDataset b = generate_synthetic_ratings(model, ids, scenarios, cols, 3);
    RatingDataset c = generate_synthetic_ratings(model, ids, scenarios, cols, 4);
    CHECK(a.stimuli[0].responses == b.stimuli[0].responses);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.stimuli.size(); ++i)
      if (a.stimuli[i].responses != c.stimuli[i].responses) any_diff = true;
    CHECK(any_diff);
  }

  SUBCASE("thresholds map the latent score to 1..5") {
    // One driver column with two far-apart values: z-scores straddle the
    // outermost thresholds, so the extreme stimuli get 1 and 5.
    std::map<std::string, std::vector<double>> two = {
        {"driver", {}}};
    std::vector<std::string> tids;
    std::vector<Scenario> tsc;
    for (int i = 0; i < 10; ++i) {
      tids.push_back("t" + std::to_string(i));
      tsc.push_back(Scenario::Drop);
      two["driver"].push_back(i < 5 ? -10.0 : 10.0);
    }
    model.noise_std = 0.0;
    // A balanced binary column z-scores to roughly +/-0.95; weight 2 pushes
    // the latent score past the outer thresholds at +/-1.5.
    model.driver_weights = {{"driver", 2.0}};
    RatingDataset ds = generate_synthetic_ratings(model, tids, tsc, two, 1);
    CHECK(ds.stimuli.front().responses[0] == 1);
    CHECK(ds.stimuli.back().responses[0] == 5);
  }

  SUBCASE("missing driver and bad models are rejected") {
    model.driver_weights = {{"absent", 1.0}};
    CHECK_THROWS_AS(generate_synthetic_ratings(model, ids, scenarios, cols, 3),
                    std::invalid_argument);
    SyntheticRaterModel bad;
    bad.n_raters = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = SyntheticRaterModel{};
    bad.thresholds = {0.5, -0.5, 1.5, 2.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  }
}

TEST_CASE("pipeline config") {
  PipelineConfig cfg = tiny_config("unused");

  SUBCASE("JSON round trip preserves everything") {
    PipelineConfig back = PipelineConfig::from_json(cfg.to_json());
    CHECK(back.seed == cfg.seed);
    CHECK(back.schedule.checkpoint_steps == cfg.schedule.checkpoint_steps);
    CHECK(back.k_grid == cfg.k_grid);
    CHECK(back.rater.driver_weights == cfg.rater.driver_weights);
    CHECK(back.out_dir == cfg.out_dir);
    CHECK(back.hash() == cfg.hash());
  }

  SUBCASE("hash ignores output location and thread count") {
    PipelineConfig other = cfg;
    other.out_dir = "elsewhere";
    other.threads = 1;
    CHECK(other.hash() == cfg.hash());
    other.seed = 8;
    CHECK(other.hash() != cfg.hash());
  }

  SUBCASE("validation rejects bad fields") {
    PipelineConfig bad = cfg;
    bad.k_grid = {5};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.delta_grid = {999};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.ensemble_size = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.n_splits = 1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  }
}

TEST_CASE("pipeline end to end") {
  const fs::path base = temp_dir("pipeline");
  PipelineConfig cfg = tiny_config((base / "a").string());
  std::ostringstream log;
  EvalReport rep = run_pipeline(cfg, &log);

  CHECK(rep.config_hash == cfg.hash());
  CHECK(!rep.singles.empty());
  CHECK(rep.train_adv_by_ckpt.size() == 3);
  for (const auto& s : rep.singles) {
    CHECK(s.mean_r >= -1.0);
    CHECK(s.mean_r <= 1.0);
  }
  CHECK(fs::exists(ir_table_path(cfg)));
  CHECK(fs::exists(report_json_path(cfg)));
  CHECK(fs::exists(base / "a" / "fig_single_irf.svg"));

  SUBCASE("second run elsewhere produces identical artifacts") {
    PipelineConfig cfg_b = cfg;
    cfg_b.out_dir = (base / "b").string();
    run_pipeline(cfg_b);
    for (const std::string name :
         {"ir_table.csv", "ratings.csv", "report.json", "report.csv",
          "train_adversarial.csv", "fig_single_irf.svg",
          "fig_scenario_matrix.svg", "fig_complementarity.svg"})
      CHECK(read_file(base / "a" / name) == read_file(base / "b" / name));
  }

  SUBCASE("resumes from persisted intermediates") {
    const std::string before = read_file(report_json_path(cfg));
    fs::remove(report_json_path(cfg));
    fs::remove(report_csv_path(cfg));
    std::ostringstream relog;
    run_pipeline(cfg, &relog);
    CHECK(read_file(report_json_path(cfg)) == before);
    CHECK(relog.str().find("skipping") != std::string::npos);
  }

  SUBCASE("re-rendering the report is byte-stable") {
    const std::string svg = read_file(base / "a" / "fig_scenario_matrix.svg");
    stage_report(cfg);
    CHECK(read_file(base / "a" / "fig_scenario_matrix.svg") == svg);
  }

  SUBCASE("a different config refuses the existing artifact tree") {
    PipelineConfig other = cfg;
    other.seed = 99;
    CHECK_THROWS_WITH_AS(stage_generate(other), doctest::Contains("hash"),
                         std::runtime_error);
  }

  SUBCASE("report round-trips through JSON") {
    EvalReport back = EvalReport::from_json(
        read_file(report_json_path(cfg)));
    CHECK(back.config_hash == rep.config_hash);
    CHECK(back.singles.size() == rep.singles.size());
    CHECK(back.composite.mean_r == rep.composite.mean_r);
    CHECK(back.matrix.cells.size() == rep.matrix.cells.size());
  }
}

TEST_CASE("zero-training schedule still completes") {
  const fs::path base = temp_dir("degenerate");
  PipelineConfig cfg = tiny_config((base / "out").string());
  cfg.schedule.checkpoint_steps = {0};
  cfg.delta_grid = {};
  EvalReport rep = run_pipeline(cfg);
  REQUIRE(rep.train_adv_by_ckpt.size() == 1);
  CHECK(rep.train_adv_by_ckpt[0].first == 0);
  CHECK(rep.train_adv_by_ckpt[0].second > 0.0);
}

TEST_CASE("external ratings feed the fit stage") {
  const fs::path base = temp_dir("external");
  PipelineConfig cfg = tiny_config((base / "out").string());
  run_pipeline(cfg);
  // Use the synthesized ratings as an "external" file for a fresh tree.
  PipelineConfig ext = cfg;
  ext.out_dir = (base / "out2").string();
  ext.ratings_path = ratings_csv_path(cfg);
  EvalReport rep = run_pipeline(ext);
  CHECK(!rep.singles.empty());
}

TEST_CASE("CLI exit codes") {
  const fs::path dir = temp_dir("cli");
  const std::string bin = CURIOLAB_BIN;
  auto run_cmd = [&](const std::string& args) {
    const int status =
        std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };

  PipelineConfig cfg = tiny_config((dir / "out").string());
  cfg.save((dir / "cfg.json").string());

  CHECK(run_cmd("generate -c " + (dir / "cfg.json").string()) == 0);
  // Unknown subcommand / missing required option -> validation error.
  CHECK(run_cmd("frobnicate") == 2);
  CHECK(run_cmd("generate") == 2);
  // Invalid config field -> validation error.
  PipelineConfig bad = cfg;
  bad.k_grid = {9};
  std::ofstream os(dir / "bad.json", std::ios::binary);
  os << bad.to_json() << "\n";
  os.close();
  CHECK(run_cmd("generate -c " + (dir / "bad.json").string()) == 2);
  // Stage failure (fit without a score stage) -> 3.
  CHECK(run_cmd("fit -c " + (dir / "cfg.json").string()) == 3);
}
