#include "mtdl/commands.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <set>

#include "mtdl/io.hpp"
#include "parallel.hpp"

namespace mtdl {

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string join_doubles(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += io::format_double(v[i], 17);
  }
  return out;
}

std::string join_ints(std::span<const int> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::string_view> list_items(std::string_view value) {
  std::vector<std::string_view> out;
  if (io::trim(value).empty()) return out;
  for (auto item : io::split(value, ',')) out.push_back(io::trim(item));
  return out;
}

std::vector<double> parse_doubles(std::string_view value) {
  std::vector<double> out;
  for (auto item : list_items(value)) out.push_back(io::parse_double(item));
  return out;
}

std::vector<int> parse_ints(std::string_view value) {
  std::vector<int> out;
  for (auto item : list_items(value)) out.push_back(static_cast<int>(io::parse_int(item)));
  return out;
}

struct Key {
  const char* name;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<Key>& keys() {
  using C = ExperimentConfig;
  using V = std::string_view;
  auto integer = [](V v) { return static_cast<int>(io::parse_int(v)); };
  static const std::vector<Key> table = {
      {"seed", [](C& c, V v) { c.seed = std::stoull(std::string(io::trim(v))); },
       [](const C& c) { return std::to_string(c.seed); }},
      {"out_dir", [](C& c, V v) { c.out_dir = std::string(io::trim(v)); },
       [](const C& c) { return c.out_dir; }},
      {"jobs", [=](C& c, V v) { c.jobs = integer(v); },
       [](const C& c) { return std::to_string(c.jobs); }},
      {"num_videos", [=](C& c, V v) { c.num_videos = integer(v); },
       [](const C& c) { return std::to_string(c.num_videos); }},
      {"frames", [=](C& c, V v) { c.frames = integer(v); },
       [](const C& c) { return std::to_string(c.frames); }},
      {"stage_labels",
       [](C& c, V v) {
         c.stage_labels.clear();
         for (auto s : list_items(v)) c.stage_labels.emplace_back(s);
       },
       [](const C& c) {
         std::string out;
         for (std::size_t i = 0; i < c.stage_labels.size(); ++i) {
           if (i) out += ',';
           out += c.stage_labels[i];
         }
         return out;
       }},
      {"duration_mean", [](C& c, V v) { c.durations.mean = parse_doubles(v); },
       [](const C& c) { return join_doubles(c.durations.mean); }},
      {"duration_dispersion", [](C& c, V v) { c.durations.dispersion = parse_doubles(v); },
       [](const C& c) { return join_doubles(c.durations.dispersion); }},
      {"skip_prob", [](C& c, V v) { c.durations.skip = parse_doubles(v); },
       [](const C& c) { return join_doubles(c.durations.skip); }},
      {"feature_dim", [=](C& c, V v) { c.feature_dim = integer(v); },
       [](const C& c) { return std::to_string(c.feature_dim); }},
      {"amplitude", [](C& c, V v) { c.amplitude = io::parse_double(v); },
       [](const C& c) { return io::format_double(c.amplitude, 17); }},
      {"noise_sigma", [](C& c, V v) { c.noise_sigma = io::parse_double(v); },
       [](const C& c) { return io::format_double(c.noise_sigma, 17); }},
      {"split",
       [](C& c, V v) {
         const auto f = parse_doubles(v);
         if (f.size() != 3) throw Error(ErrorCode::ConfigError, "split needs 3 fractions");
         std::copy(f.begin(), f.end(), c.split.begin());
       },
       [](const C& c) { return join_doubles(c.split); }},
      {"variant",
       [](C& c, V v) {
         auto parsed = parse_variant(io::trim(v));
         if (!parsed) throw Error(ErrorCode::ConfigError, "unknown variant '" + std::string(v) + "'");
         c.variant = *parsed;
       },
       [](const C& c) { return std::string(variant_name(c.variant)); }},
      {"tau", [=](C& c, V v) { c.tau = integer(v); },
       [](const C& c) { return std::to_string(c.tau); }},
      {"trunk_hidden", [](C& c, V v) { c.trunk_hidden = parse_ints(v); },
       [](const C& c) { return join_ints(c.trunk_hidden); }},
      {"head_hidden", [=](C& c, V v) { c.head_hidden = integer(v); },
       [](const C& c) { return std::to_string(c.head_hidden); }},
      {"output_weights", [](C& c, V v) { c.output_weights = parse_doubles(v); },
       [](const C& c) { return join_doubles(c.output_weights); }},
      {"optimizer",
       [](C& c, V v) {
         v = io::trim(v);
         if (v == "sgd") c.optimizer = Optimizer::Sgd;
         else if (v == "adam") c.optimizer = Optimizer::Adam;
         else throw Error(ErrorCode::ConfigError, "optimizer must be sgd or adam");
       },
       [](const C& c) { return std::string(c.optimizer == Optimizer::Sgd ? "sgd" : "adam"); }},
      {"step_size", [](C& c, V v) { c.step_size = io::parse_double(v); },
       [](const C& c) { return io::format_double(c.step_size, 17); }},
      {"batch_size", [=](C& c, V v) { c.batch_size = integer(v); },
       [](const C& c) { return std::to_string(c.batch_size); }},
      {"max_epochs", [=](C& c, V v) { c.max_epochs = integer(v); },
       [](const C& c) { return std::to_string(c.max_epochs); }},
      {"patience", [=](C& c, V v) { c.patience = integer(v); },
       [](const C& c) { return std::to_string(c.patience); }},
      {"rule",
       [](C& c, V v) {
         auto parsed = parse_rule(io::trim(v));
         if (!parsed) throw Error(ErrorCode::ConfigError, "rule must be additive, multiplicative or middle");
         c.rule = *parsed;
       },
       [](const C& c) { return std::string(rule_name(c.rule)); }},
      {"loss",
       [](C& c, V v) {
         auto parsed = parse_loss(io::trim(v));
         if (!parsed) throw Error(ErrorCode::ConfigError, "loss must be ll or em");
         c.loss = *parsed;
       },
       [](const C& c) { return std::string(loss_name(c.loss)); }},
      {"eval_part", [](C& c, V v) { c.eval_part = std::string(io::trim(v)); },
       [](const C& c) { return c.eval_part; }},
      {"repeats", [=](C& c, V v) { c.repeats = integer(v); },
       [](const C& c) { return std::to_string(c.repeats); }},
  };
  return table;
}

}  // namespace

SimConfig ExperimentConfig::sim_config() const {
  SimConfig s;
  s.num_videos = num_videos;
  s.frames = frames;
  s.durations = durations;
  s.emission.dim = feature_dim;
  s.emission.amplitude = amplitude;
  s.emission.sigma = noise_sigma;
  return s;
}

NetConfig ExperimentConfig::net_config() const {
  NetConfig n;
  n.variant = variant;
  n.tau = variant == Variant::OneToOne ? 0 : tau;
  n.input_dim = feature_dim;
  n.trunk_hidden = trunk_hidden;
  n.head_hidden = head_hidden;
  n.num_stages = static_cast<int>(stage_labels.size());
  return n;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.output_weights = output_weights;
  t.optimizer = optimizer;
  t.step_size = step_size;
  t.batch_size = batch_size;
  t.max_epochs = max_epochs;
  t.patience = patience;
  t.seed = seed;
  return t;
}

void ExperimentConfig::validate() const {
  try {
    StageAlphabet alphabet(stage_labels);
    if (durations.num_stages() != alphabet.size()) {
      throw Error(ErrorCode::ConfigError, "duration model must have one entry per stage label");
    }
    durations.validate();
    sim_config().emission.validate(alphabet.size());
    if (num_videos < 1 || frames < 1) throw Error(ErrorCode::ConfigError, "num_videos and frames must be >= 1");
    if (jobs < 1) throw Error(ErrorCode::ConfigError, "jobs must be >= 1");
    if (repeats < 1) throw Error(ErrorCode::ConfigError, "repeats must be >= 1");
    static const std::set<std::string> parts{"train", "validation", "test", "all"};
    if (!parts.contains(eval_part)) throw Error(ErrorCode::ConfigError, "eval_part must be train, validation, test or all");
    const NetConfig net = net_config();
    net.validate();
    train_config().validate(net.num_heads());
    double sum = 0.0;
    for (double f : split) sum += f;
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::ConfigError, "split fractions must sum to 1");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    throw Error(ErrorCode::ConfigError, e.what());
  }
}

std::string to_text(const ExperimentConfig& c) {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(c) + '\n';
  return out;
}

void set_config_value(ExperimentConfig& c, std::string_view key, std::string_view value) {
  key = io::trim(key);
  for (const auto& k : keys()) {
    if (key == k.name) {
      try {
        k.set(c, value);
      } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, std::string(key) + ": " + e.what());
      } catch (const std::exception& e) {
        throw Error(ErrorCode::ConfigError, std::string(key) + ": bad value '" + std::string(value) + "'");
      }
      return;
    }
  }
  throw Error(ErrorCode::ConfigError, "unknown config key '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::size_t line_no = 0;
  for (auto line : io::split(text, '\n')) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = io::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
    }
    set_config_value(c, line.substr(0, eq), line.substr(eq + 1));
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  try {
    return parse_config(io::read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::uint64_t config_hash(const ExperimentConfig& c) { return io::fnv1a64(to_text(c)); }

std::vector<int> part_ids(const Dataset& data, std::string_view part) {
  if (part == "train") return data.split.train;
  if (part == "validation") return data.split.validation;
  if (part == "test") return data.split.test;
  if (part == "all") {
    std::vector<int> ids(data.videos.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    return ids;
  }
  throw Error(ErrorCode::ConfigError, "unknown dataset part '" + std::string(part) + "'");
}

// ---------------------------------------------------------------------------
// Subcommands

namespace {

void write_resolved(const ExperimentConfig& c, const fs::path& dir) {
  io::write_file_atomic(dir / "config.resolved", to_text(c));
}

/// Ids with a file named <prefix>_<id>.csv in `dir`, ascending.
std::vector<int> numbered_files(const fs::path& dir, std::string_view prefix) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, "not a directory: " + dir.string());
  std::vector<int> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!name.starts_with(std::string(prefix) + "_") || !name.ends_with(".csv")) continue;
    const auto digits = std::string_view(name).substr(prefix.size() + 1,
                                                      name.size() - prefix.size() - 5);
    try {
      ids.push_back(static_cast<int>(io::parse_int(digits)));
    } catch (const Error&) {
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

Dataset cmd_simulate(const ExperimentConfig& c, const fs::path& out) {
  c.validate();
  Dataset data;
  data.videos = simulate_dataset(c.seed, c.sim_config(), c.jobs);
  data.split = split_dataset(c.num_videos, c.split, c.seed);
  io::write_dataset(out, data, c.jobs);
  write_resolved(c, out);
  return data;
}

TrainOutputs cmd_train(const ExperimentConfig& c, const fs::path& data_dir, const fs::path& out) {
  c.validate();
  const Dataset data = io::read_dataset(data_dir);
  const NetConfig net = c.net_config();
  for (const auto& v : data.videos) {
    if (v.features.cols() != net.input_dim) {
      throw Error(ErrorCode::ShapeMismatch, "dataset feature dimension " +
                                                std::to_string(v.features.cols()) +
                                                " differs from feature_dim " +
                                                std::to_string(net.input_dim));
    }
  }
  const TrainResult result = train(data, net, c.train_config());

  const auto hash = config_hash(c);
  const std::string phase1 = io::encode_params({result.baseline, hash, 0});
  const std::string phase2 = io::encode_params({result.model, hash, io::fnv1a64(phase1)});
  TrainOutputs files{out / "params_phase1.bin", out / "params.bin", out / "train_log.csv"};
  io::write_file_atomic(files.baseline, phase1);
  io::write_file_atomic(files.model, phase2);
  io::write_file_atomic(files.log, io::train_log_csv(result.log));
  write_resolved(c, out);
  return files;
}

void cmd_predict(const ExperimentConfig& c, const fs::path& params_file, const fs::path& data_dir,
                 const fs::path& out) {
  c.validate();
  const NetParams params = io::decode_params(io::read_file(params_file)).params;
  const Dataset data = io::read_dataset(data_dir);
  const auto ids = part_ids(data, c.eval_part);
  fs::create_directories(out);
  detail::parallel_for(static_cast<int>(ids.size()), c.jobs, [&](int i) {
    const auto& video = data.videos[ids[i]];
    const VideoPrediction pred = predict_video(params, video);
    const ProbabilityMatrix m = std::holds_alternative<PredictionGrid>(pred)
                                    ? aggregate(std::get<PredictionGrid>(pred), c.rule)
                                    : std::get<ProbabilityMatrix>(pred);
    io::write_file_atomic(out / io::probs_filename(video.id), io::probs_csv(m));
  });
  write_resolved(c, out);
}

void cmd_decode(const fs::path& probs_dir, FrameLoss kind, const fs::path& out, int jobs) {
  const auto ids = numbered_files(probs_dir, "probs");
  if (ids.empty()) throw Error(ErrorCode::IoError, "no probs_<id>.csv files in " + probs_dir.string());
  fs::create_directories(out);
  detail::parallel_for(static_cast<int>(ids.size()), jobs, [&](int i) {
    const int id = ids[i];
    const auto path = probs_dir / io::probs_filename(id);
    const ProbabilityMatrix m = io::parse_probs_csv(io::read_file(path));
    if (auto issue = validate_probability_matrix(m)) {
      throw Error(issue->code, path.string() + ": " + issue->message());
    }
    io::write_file_atomic(out / io::argmax_filename(id), io::labels_csv(argmax_sequence(m)));
    io::write_file_atomic(out / io::decoded_filename(id), io::labels_csv(decode(m, kind).sequence));
  });
}

std::string report_csv(const Report& r) {
  std::string out = "method,frames,accuracy,rmse";
  const int L = r.rows.empty() ? 0 : r.rows.front().confusion.num_stages();
  for (int t = 1; t <= L; ++t)
    for (int p = 1; p <= L; ++p) out += ",c" + std::to_string(t) + "_" + std::to_string(p);
  out += '\n';
  for (const auto& row : r.rows) {
    out += row.method + ',' + std::to_string(row.frames) + ',' + io::format_double(row.accuracy, 17) +
           ',' + io::format_double(row.rmse, 17);
    for (int t = 1; t <= L; ++t)
      for (int p = 1; p <= L; ++p) out += ',' + std::to_string(row.confusion.at(t, p));
    out += '\n';
  }
  return out;
}

namespace {

void print_report(const Report& r, std::ostream& os) {
  os << std::left << std::setw(8) << "method" << std::setw(10) << "frames" << std::setw(12)
     << "accuracy" << "rmse\n";
  for (const auto& row : r.rows) {
    os << std::left << std::setw(8) << row.method << std::setw(10) << row.frames << std::setw(12)
       << io::format_double(row.accuracy, 6) << io::format_double(row.rmse, 6) << '\n';
  }
}

}  // namespace

Report cmd_evaluate(const fs::path& pred_dir, const fs::path& data_dir, const fs::path& out,
                    std::ostream& os) {
  const auto ids = numbered_files(pred_dir, "decoded");
  if (ids.empty()) throw Error(ErrorCode::MissingVideo, "no decoded_<id>.csv files in " + pred_dir.string());

  std::vector<StageSequence> truth, raw, dp;
  for (int id : ids) {
    const auto truth_path = data_dir / io::video_filename(id);
    const auto raw_path = pred_dir / io::argmax_filename(id);
    if (!fs::exists(truth_path)) throw Error(ErrorCode::MissingVideo, "missing " + truth_path.string());
    if (!fs::exists(raw_path)) throw Error(ErrorCode::MissingVideo, "missing " + raw_path.string());
    truth.push_back(io::parse_video_csv(io::read_file(truth_path), id).labels);
    raw.push_back(io::parse_labels_csv(io::read_file(raw_path)));
    dp.push_back(io::parse_labels_csv(io::read_file(pred_dir / io::decoded_filename(id))));
  }

  int L = 1;
  for (const auto* group : {&truth, &raw, &dp})
    for (const auto& s : *group)
      for (Stage v : s) L = std::max(L, v);
  if (fs::exists(data_dir / "config.resolved")) {
    L = std::max(L, static_cast<int>(load_config(data_dir / "config.resolved").stage_labels.size()));
  }

  Report report;
  for (const auto& [name, pred] : {std::pair{"raw", &raw}, std::pair{"dp", &dp}}) {
    MethodScore s;
    s.method = name;
    s.accuracy = accuracy(*pred, truth);
    s.rmse = rmse(*pred, truth);
    s.confusion = confusion(*pred, truth, L);
    s.frames = static_cast<std::size_t>(s.confusion.total());
    report.rows.push_back(std::move(s));
  }
  io::write_file_atomic(out / "report.csv", report_csv(report));
  print_report(report, os);
  return report;
}

PipelineSummary cmd_pipeline(const ExperimentConfig& c, std::ostream& os) {
  c.validate();
  const fs::path root = c.out_dir;
  fs::create_directories(root);
  write_resolved(c, root);

  PipelineSummary summary;
  for (int r = 0; r < c.repeats; ++r) {
    ExperimentConfig run = c;
    run.seed = derive_seed(c.seed, seed_stream::kRepeat, static_cast<std::uint64_t>(r));
    const fs::path dir = root / ("seed_" + std::to_string(r + 1));
    run.out_dir = dir.string();
    run.repeats = 1;
    os << "== seed " << r + 1 << "/" << c.repeats << " (" << run.seed << ")\n";

    auto stage = [&](const char* name, auto&& fn) {
      try {
        fn();
      } catch (const Error& e) {
        throw Error(e.code(), std::string("stage ") + name + ": " + e.what());
      }
    };
    stage("simulate", [&] { cmd_simulate(run, dir / "data"); });
    stage("train", [&] { cmd_train(run, dir / "data", dir / "model"); });
    stage("predict", [&] { cmd_predict(run, dir / "model" / "params.bin", dir / "data", dir / "pred"); });
    stage("decode", [&] { cmd_decode(dir / "pred", run.loss, dir / "pred", run.jobs); });
    stage("evaluate", [&] {
      summary.per_seed.push_back(cmd_evaluate(dir / "pred", dir / "data", dir, os));
    });
    write_resolved(run, dir);
  }

  // Aggregate: mean and sample standard deviation over seeds.
  const auto& first = summary.per_seed.front();
  const double R = static_cast<double>(summary.per_seed.size());
  for (std::size_t m = 0; m < first.rows.size(); ++m) {
    MethodScore agg;
    agg.method = first.rows[m].method;
    agg.confusion = ConfusionMatrix(first.rows[m].confusion.num_stages());
    for (const auto& rep : summary.per_seed) {
      agg.accuracy += rep.rows[m].accuracy / R;
      agg.rmse += rep.rows[m].rmse / R;
      agg.frames += rep.rows[m].frames;
      agg.confusion.merge(rep.rows[m].confusion);
    }
    double va = 0.0, vr = 0.0;
    for (const auto& rep : summary.per_seed) {
      va += std::pow(rep.rows[m].accuracy - agg.accuracy, 2);
      vr += std::pow(rep.rows[m].rmse - agg.rmse, 2);
    }
    summary.accuracy_std.push_back(R > 1 ? std::sqrt(va / (R - 1)) : 0.0);
    summary.rmse_std.push_back(R > 1 ? std::sqrt(vr / (R - 1)) : 0.0);
    summary.mean.rows.push_back(std::move(agg));
  }

  std::string csv = "method,seeds,accuracy_mean,accuracy_std,rmse_mean,rmse_std\n";
  for (std::size_t m = 0; m < summary.mean.rows.size(); ++m) {
    const auto& row = summary.mean.rows[m];
    csv += row.method + ',' + std::to_string(summary.per_seed.size()) + ',' +
           io::format_double(row.accuracy, 17) + ',' + io::format_double(summary.accuracy_std[m], 17) +
           ',' + io::format_double(row.rmse, 17) + ',' + io::format_double(summary.rmse_std[m], 17) + '\n';
  }
  io::write_file_atomic(root / "report.csv", csv);
  io::write_file_atomic(root / "confusion.csv", report_csv(summary.mean));

  os << "== mean over " << summary.per_seed.size() << " seeds\n";
  for (std::size_t m = 0; m < summary.mean.rows.size(); ++m) {
    const auto& row = summary.mean.rows[m];
    os << std::left << std::setw(8) << row.method << "accuracy " << io::format_double(row.accuracy, 6)
       << " +- " << io::format_double(summary.accuracy_std[m], 3) << "   rmse "
       << io::format_double(row.rmse, 6) << " +- " << io::format_double(summary.rmse_std[m], 3) << '\n';
  }
  return summary;
}

}  // namespace mtdl
