// mtdl: simulate, train, predict, decode, evaluate, pipeline.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mtdl/commands.hpp"

namespace {

struct Overrides {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> variant, rule, loss, part;
  std::optional<int> tau, repeats;
  std::vector<std::string> sets;

  mtdl::ExperimentConfig resolve() const {
    mtdl::ExperimentConfig c = config_file.empty() ? mtdl::ExperimentConfig{}
                                                   : mtdl::load_config(config_file);
    if (seed) c.seed = *seed;
    if (jobs) mtdl::set_config_value(c, "jobs", std::to_string(*jobs));
    if (variant) mtdl::set_config_value(c, "variant", *variant);
    if (tau) mtdl::set_config_value(c, "tau", std::to_string(*tau));
    if (rule) mtdl::set_config_value(c, "rule", *rule);
    if (loss) mtdl::set_config_value(c, "loss", *loss);
    if (part) mtdl::set_config_value(c, "eval_part", *part);
    if (repeats) mtdl::set_config_value(c, "repeats", std::to_string(*repeats));
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw mtdl::Error(mtdl::ErrorCode::ConfigError, "--set expects key=value, got '" + s + "'");
      }
      mtdl::set_config_value(c, s.substr(0, eq), s.substr(eq + 1));
    }
    c.validate();
    return c;
  }
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_file, "Config file (key = value lines)");
  app->add_option("--seed", o.seed, "Master seed");
  app->add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app->add_option("--set", o.sets, "Override a config key: key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task stage classification with monotone DP decoding on simulated videos"};
  app.require_subcommand(1);

  Overrides o;
  std::string out, data, params, probs, pred;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  add_common(sim, o);
  sim->add_option("--out", out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a network on a dataset");
  add_common(tr, o);
  tr->add_option("--data", data, "Dataset directory")->required();
  tr->add_option("--out", out, "Output directory")->required();
  tr->add_option("--variant", o.variant,
                 "one_to_one | many_to_one_maxpool | many_to_one_concat | one_to_many | many_to_many");
  tr->add_option("--tau", o.tau, "Context half-width");

  auto* pr = app.add_subcommand("predict", "Write per-frame stage probabilities");
  add_common(pr, o);
  pr->add_option("--params", params, "Parameter file")->required();
  pr->add_option("--data", data, "Dataset directory")->required();
  pr->add_option("--out", out, "Output directory")->required();
  pr->add_option("--rule", o.rule, "additive | multiplicative | middle");
  pr->add_option("--part", o.part, "train | validation | test | all");

  std::string loss_text = "em";
  auto* de = app.add_subcommand("decode", "Monotone DP decoding of probability files");
  de->add_option("--probs", probs, "Directory of probs_<id>.csv")->required();
  de->add_option("--out", out, "Output directory")->required();
  de->add_option("--loss", loss_text, "ll | em");
  int decode_jobs = 1;
  de->add_option("--jobs", decode_jobs, "Worker threads")->check(CLI::PositiveNumber);

  auto* ev = app.add_subcommand("evaluate", "Score decoded sequences against ground truth");
  ev->add_option("--pred", pred, "Directory of decoded_/argmax_ files")->required();
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--out", out, "Output directory (default: --pred)");

  auto* pl = app.add_subcommand("pipeline", "Run every stage over several seeds");
  add_common(pl, o);
  pl->add_option("--out", out, "Output root directory");
  pl->add_option("--variant", o.variant, "Network variant");
  pl->add_option("--tau", o.tau, "Context half-width");
  pl->add_option("--rule", o.rule, "additive | multiplicative | middle");
  pl->add_option("--loss", o.loss, "ll | em");
  pl->add_option("--repeats", o.repeats, "Number of seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << mtdl::error_code_name(mtdl::ErrorCode::ConfigError) << ": "
              << e.what() << '\n';
    return 2;
  }

  try {
    if (*sim) {
      mtdl::cmd_simulate(o.resolve(), out);
    } else if (*tr) {
      const auto files = mtdl::cmd_train(o.resolve(), data, out);
      std::cout << "wrote " << files.model.string() << '\n';
    } else if (*pr) {
      mtdl::cmd_predict(o.resolve(), params, data, out);
    } else if (*de) {
      const auto kind = mtdl::parse_loss(loss_text);
      if (!kind) throw mtdl::Error(mtdl::ErrorCode::ConfigError, "--loss must be ll or em");
      mtdl::cmd_decode(probs, *kind, out, decode_jobs);
    } else if (*ev) {
      mtdl::cmd_evaluate(pred, data, out.empty() ? pred : out, std::cout);
    } else if (*pl) {
      auto c = o.resolve();
      if (!out.empty()) c.out_dir = out;
      mtdl::cmd_pipeline(c, std::cout);
    }
  } catch (const mtdl::Error& e) {
    std::cerr << "error: " << mtdl::error_code_name(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
