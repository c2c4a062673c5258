#include <doctest.h>

#include <cmath>
#include <sstream>

#include "mtdl/commands.hpp"
#include "mtdl/io.hpp"
#include "support.hpp"

using namespace mtdl;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mtdl_test_cmd_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.num_videos = 12;
  c.frames = 20;
  c.trunk_hidden = {8};
  c.head_hidden = 4;
  c.max_epochs = 2;
  c.repeats = 2;
  c.jobs = 2;
  return c;
}

std::string slurp(const fs::path& p) { return io::read_file(p); }

}  // namespace

TEST_CASE("config text round trip") {
  ExperimentConfig c = tiny();
  c.variant = Variant::ManyToOneConcat;
  c.durations.skip[3] = 0.5;
  c.output_weights = {1, 2, 3};
  c.rule = AggregationRule::MiddleOutput;
  c.loss = FrameLoss::LL;
  c.optimizer = Optimizer::Sgd;
  const std::string text = to_text(c);
  const ExperimentConfig back = parse_config(text);
  CHECK(to_text(back) == text);
  CHECK(back.variant == Variant::ManyToOneConcat);
  CHECK(back.output_weights == std::vector<double>{1, 2, 3});
  CHECK(config_hash(back) == config_hash(c));
  c.seed = 2;
  CHECK(config_hash(back) != config_hash(c));
}

TEST_CASE("config parsing") {
  const auto c = parse_config("# comment\nseed = 9   # trailing\n\n  tau=3\nvariant = many_to_many\n");
  CHECK(c.seed == 9);
  CHECK(c.tau == 3);
  CHECK(c.variant == Variant::ManyToMany);
  CHECK(c.num_videos == 170);
  for (const char* bad : {"bogus = 1\n", "seed\n", "tau = x\n", "rule = median\n", "split = 0.5,0.5\n"}) {
    try {
      parse_config(bad);
      FAIL("expected ConfigError for " << bad);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigError);
    }
  }
}

TEST_CASE("config validation") {
  auto c = tiny();
  CHECK_NOTHROW(c.validate());
  c.split = {0.5, 0.3, 0.3};
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny();
  c.stage_labels = {"a", "b", "c"};
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny();
  c.eval_part = "holdout";
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny();
  c.feature_dim = 4;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("default benchmark profile") {
  const ExperimentConfig c;
  CHECK(c.num_videos == 170);
  CHECK(c.frames == 100);
  CHECK(c.durations.skip[3] == 0.8);
  CHECK(c.rule == AggregationRule::MultiplicativeMean);
  CHECK(c.loss == FrameLoss::EM);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("simulate") {
  const auto dir = scratch("simulate");
  const auto c = tiny();
  const Dataset data = cmd_simulate(c, dir / "a");
  cmd_simulate(c, dir / "b");
  CHECK(data.videos.size() == 12);
  for (int i = 0; i < 12; ++i) {
    CHECK(slurp(dir / "a" / io::video_filename(i)) == slurp(dir / "b" / io::video_filename(i)));
  }
  CHECK(slurp(dir / "a" / "split.csv") == slurp(dir / "b" / "split.csv"));
  CHECK(parse_config(slurp(dir / "a" / "config.resolved")).num_videos == 12);
  const auto split = io::parse_split_csv(slurp(dir / "a" / "split.csv"));
  CHECK(split.train.size() + split.validation.size() + split.test.size() == 12);
}

TEST_CASE("end-to-end subcommands") {
  const auto dir = scratch("e2e");
  auto c = tiny();
  c.variant = Variant::OneToMany;
  c.tau = 1;
  cmd_simulate(c, dir / "data");

  const auto files = cmd_train(c, dir / "data", dir / "model");
  SUBCASE("train outputs and provenance") {
    const auto phase1 = io::decode_params(slurp(files.baseline));
    const auto phase2 = io::decode_params(slurp(files.model));
    CHECK(phase1.parent_hash == 0);
    CHECK(phase2.parent_hash == io::fnv1a64(slurp(files.baseline)));
    CHECK(phase2.config_hash == config_hash(c));
    CHECK(phase2.params.trunk == phase1.params.trunk);
    const std::string log = slurp(files.log);
    CHECK(log.rfind("phase,epoch,train_loss,validation_loss\n", 0) == 0);
    CHECK(log.find(",,") == std::string::npos);
    cmd_train(c, dir / "data", dir / "model2");
    CHECK(slurp(dir / "model2" / "params.bin") == slurp(files.model));
  }

  cmd_predict(c, files.model, dir / "data", dir / "pred");
  const Dataset data = io::read_dataset(dir / "data");
  SUBCASE("predict") {
    for (int id : data.split.test) {
      const std::string text = slurp(dir / "pred" / io::probs_filename(id));
      CHECK(text.substr(0, text.find('\n')) == "frame,p1,p2,p3,p4,p5,p6");
      const auto m = io::parse_probs_csv(text);
      CHECK(m.num_frames() == 20);
      CHECK_FALSE(validate_probability_matrix(m).has_value());
    }
  }

  cmd_decode(dir / "pred", FrameLoss::EM, dir / "pred", 2);
  SUBCASE("decode") {
    for (int id : data.split.test) {
      const auto s = io::parse_labels_csv(slurp(dir / "pred" / io::decoded_filename(id)));
      CHECK(is_monotone(s));
      const auto m = io::parse_probs_csv(slurp(dir / "pred" / io::probs_filename(id)));
      CHECK(s == decode(m, FrameLoss::EM).sequence);
      CHECK(io::parse_labels_csv(slurp(dir / "pred" / io::argmax_filename(id))) == argmax_sequence(m));
    }
  }

  SUBCASE("evaluate") {
    std::ostringstream out;
    const Report r = cmd_evaluate(dir / "pred", dir / "data", dir / "eval", out);
    REQUIRE(r.rows.size() == 2);
    CHECK(r.rows[0].method == "raw");
    CHECK(r.rows[1].method == "dp");
    for (const auto& row : r.rows) {
      CHECK(row.frames == data.split.test.size() * 20);
      CHECK(row.accuracy == doctest::Approx(static_cast<double>(row.confusion.trace()) / row.confusion.total()));
    }
    CHECK(out.str().find("accuracy") != std::string::npos);
    const std::string first = slurp(dir / "eval" / "report.csv");
    cmd_evaluate(dir / "pred", dir / "data", dir / "eval", out);
    CHECK(slurp(dir / "eval" / "report.csv") == first);
    CHECK(first.rfind("method,frames,accuracy,rmse,c1_1,", 0) == 0);
  }

  SUBCASE("missing truth video") {
    fs::remove(dir / "data" / io::video_filename(data.split.test.front()));
    std::ostringstream out;
    try {
      cmd_evaluate(dir / "pred", dir / "data", dir / "eval", out);
      FAIL("expected MissingVideo");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingVideo);
    }
  }
}

TEST_CASE("predict with tau = 0 equals the raw network output for every rule") {
  const auto dir = scratch("tau0");
  auto c = tiny();
  c.variant = Variant::OneToMany;
  c.tau = 0;
  cmd_simulate(c, dir / "data");
  const auto files = cmd_train(c, dir / "data", dir / "model");
  const auto params = io::decode_params(slurp(files.model)).params;
  const Dataset data = io::read_dataset(dir / "data");
  for (auto rule : {AggregationRule::AdditiveMean, AggregationRule::MultiplicativeMean,
                    AggregationRule::MiddleOutput}) {
    c.rule = rule;
    cmd_predict(c, files.model, dir / "data", dir / "pred");
    for (int id : data.split.test) {
      const auto m = io::parse_probs_csv(slurp(dir / "pred" / io::probs_filename(id)));
      const auto grid = std::get<PredictionGrid>(predict_video(params, data.videos[id]));
      for (std::size_t n = 0; n < m.num_frames(); ++n)
        for (int l = 1; l <= 6; ++l) CHECK(std::abs(m.at(n, l) - grid.frames[n][0].probs[l - 1]) < 1e-8);
    }
  }
}

TEST_CASE("decode and evaluate perfect one-hot predictions") {
  const auto dir = scratch("perfect");
  auto c = tiny();
  const Dataset data = cmd_simulate(c, dir / "data");
  fs::create_directories(dir / "pred");
  for (int id : data.split.test) {
    io::write_file_atomic(dir / "pred" / io::probs_filename(id),
                          io::probs_csv(testing::one_hot(data.videos[id].labels, 6)));
  }
  cmd_decode(dir / "pred", FrameLoss::LL, dir / "pred");
  for (int id : data.split.test) {
    CHECK(io::parse_labels_csv(slurp(dir / "pred" / io::decoded_filename(id))) == data.videos[id].labels);
  }
  std::ostringstream out;
  const Report r = cmd_evaluate(dir / "pred", dir / "data", dir / "pred", out);
  for (const auto& row : r.rows) {
    CHECK(row.accuracy == 1.0);
    CHECK(row.rmse == 0.0);
  }
}

TEST_CASE("decode rejects invalid probability files") {
  const auto dir = scratch("badprobs");
  io::write_file_atomic(dir / io::probs_filename(0), "frame,p1,p2\n1,0.5,0.6\n");
  try {
    cmd_decode(dir, FrameLoss::EM, dir);
    FAIL("expected BadSum");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadSum);
  }
}

TEST_CASE("pipeline") {
  const auto dir = scratch("pipeline");
  auto c = tiny();
  c.out_dir = (dir / "run").string();
  std::ostringstream out;
  const auto summary = cmd_pipeline(c, out);
  REQUIRE(summary.per_seed.size() == 2);
  for (int r = 1; r <= 2; ++r) {
    const auto seed_dir = dir / "run" / ("seed_" + std::to_string(r));
    CHECK(fs::exists(seed_dir / "report.csv"));
    CHECK(fs::exists(seed_dir / "model" / "params.bin"));
    CHECK(fs::exists(seed_dir / "config.resolved"));
  }
  CHECK(fs::exists(dir / "run" / "report.csv"));
  CHECK(fs::exists(dir / "run" / "config.resolved"));
  for (std::size_t m = 0; m < 2; ++m) {
    const double mean = (summary.per_seed[0].rows[m].accuracy + summary.per_seed[1].rows[m].accuracy) / 2;
    CHECK(summary.mean.rows[m].accuracy == doctest::Approx(mean).epsilon(1e-15));
    const double d = summary.per_seed[0].rows[m].rmse - summary.per_seed[1].rows[m].rmse;
    CHECK(summary.rmse_std[m] == doctest::Approx(std::abs(d) / std::sqrt(2.0)).epsilon(1e-12));
  }
  // the aggregate file carries the same numbers
  const std::string report = slurp(dir / "run" / "report.csv");
  CHECK(report.rfind("method,seeds,accuracy_mean,accuracy_std,rmse_mean,rmse_std\n", 0) == 0);
  CHECK(report.find("raw,2," + io::format_double(summary.mean.rows[0].accuracy, 17)) != std::string::npos);

  SUBCASE("a failing stage is named") {
    auto bad = c;
    bad.out_dir = (dir / "bad").string();
    bad.num_videos = 3;  // validation part rounds to zero videos
    try {
      cmd_pipeline(bad, out);
      FAIL("expected EmptySplit");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptySplit);
      CHECK(std::string(e.what()).find("stage simulate") != std::string::npos);
    }
  }
}
