#include "ttavid/app/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "ttavid/errors.hpp"
#include "ttavid/json_text.hpp"
#include "ttavid/remote.hpp"

namespace ttavid::app {
namespace fs = std::filesystem;
namespace {

constexpr std::uint64_t kAdaptRole = 11;
constexpr std::uint64_t kHeldoutRole = 12;
constexpr std::uint64_t kClipRole = 13;
constexpr std::uint64_t kBatchPickRole = 14;

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> backend;
};

void apply(RunConfig& cfg, const GlobalFlags& g) {
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.out = *g.out;
  if (g.backend) {
    if (*g.backend != "sim" && *g.backend != "remote") throw ConfigError("--backend must be sim or remote");
    cfg.backend = *g.backend;
  }
  sync_derived(cfg);
}

std::string file_stem(std::string_view id) {
  std::string s(id);
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return s;
}

std::optional<std::vector<double>> shared_prior(const RunConfig& cfg) {
  if (cfg.sim.prior != "window") return std::nullopt;
  return sim::window_prior(cfg.sim.params.num_frames, cfg.sim.window_start, cfg.sim.window_length,
                           cfg.sim.window_mass);
}

std::vector<VideoSample> to_samples(const RunConfig& cfg, const sim::SimBatch& batch, std::uint64_t role) {
  std::vector<VideoSample> out;
  for (std::size_t i = 0; i < batch.environments.size(); ++i) {
    const auto& env = batch.environments[i];
    std::optional<std::vector<double>> clip;
    if (cfg.sim.clip_signal > 0.0) {
      Rng rng(stream_seed(cfg.seed, {kClipRole, role, i}));
      clip = sim::synthetic_clip_scores(env, cfg.sim.clip_signal, cfg.sim.clip_noise, rng);
    }
    VideoSample s = make_sim_sample(env, i, std::move(clip));
    if (role == kHeldoutRole) {
      s.video_id = "heldout-" + std::to_string(i);
      s.question_id = "hq-" + std::to_string(i);
    }
    out.push_back(std::move(s));
  }
  return out;
}

sim::SimBatch adaptation_batch(const RunConfig& cfg) {
  if (!cfg.sim.env_file.empty()) return sim::parse_simenv(read_text_file(cfg.sim.env_file));
  const auto prior = shared_prior(cfg);
  return sim::generate_batch(cfg.sim.params, cfg.adapt.batch_size,
                             prior ? std::optional<std::span<const double>>(*prior) : std::nullopt,
                             stream_seed(cfg.seed, {kAdaptRole}));
}

std::string summary_table(const std::vector<EpochSummary>& epochs) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "epoch  mean_reward  majority_freq  informative_mass  skipped  failures\n";
  for (const auto& e : epochs) {
    os << std::setw(5) << e.epoch << "  " << std::setw(11) << e.mean_reward << "  " << std::setw(13)
       << e.majority_frequency << "  " << std::setw(16);
    if (e.informative_mass) {
      os << *e.informative_mass;
    } else {
      os << "-";
    }
    os << "  " << std::setw(7) << e.skipped << "  " << std::setw(8) << e.failures << "\n";
  }
  return os.str();
}

std::string summary_csv(const std::vector<EpochSummary>& epochs) {
  std::string out = "epoch,mean_reward,majority_frequency,informative_mass,skipped,failures\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + "," + json_text::format_double(e.mean_reward) + "," +
           json_text::format_double(e.majority_frequency) + "," +
           (e.informative_mass ? json_text::format_double(*e.informative_mass) : std::string()) + "," +
           std::to_string(e.skipped) + "," + std::to_string(e.failures) + "\n";
  }
  return out;
}

std::map<std::string, std::string> load_labels(const std::string& path) {
  const auto j = json_text::parse(read_text_file(path), path);
  if (!j.is_object()) throw DataFormatError(path + ": labels must be a JSON object question_id -> answer");
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : j.items()) out[k] = v.get<std::string>();
  return out;
}

std::vector<VideoSample> remote_batch(const RunConfig& cfg) {
  if (cfg.remote.data_root.empty()) throw ConfigError("remote backend: [remote] data_root is not set");
  std::vector<VideoSample> all = load_video_root(cfg.remote.data_root);
  if (!cfg.remote.labels.empty()) {
    const auto labels = load_labels(cfg.remote.labels);
    for (auto& s : all) {
      if (auto it = labels.find(s.question_id); it != labels.end()) s.ground_truth = it->second;
    }
  }
  if (all.size() <= cfg.adapt.batch_size) return all;
  std::vector<double> w(all.size(), 1.0);
  Rng rng(stream_seed(cfg.seed, {kBatchPickRole}));
  const FrameSubset pick = sample_without_replacement(w, cfg.adapt.batch_size, rng);
  std::vector<VideoSample> out;
  for (std::size_t i : pick) out.push_back(all[i]);
  return out;
}

EndpointConfig endpoint_from_env(const RunConfig& cfg) {
  EndpointConfig e = EndpointConfig::from_env();
  e.backoff_base = std::chrono::milliseconds(static_cast<long long>(cfg.remote.backoff_ms));
  return e;
}

// --- adapt ----------------------------------------------------------------

int cmd_adapt(RunConfig cfg, std::ostream& out) {
  std::optional<EndpointConfig> endpoint;
  std::vector<VideoSample> samples;
  if (cfg.backend == "remote") {
    endpoint = endpoint_from_env(cfg);
    samples = remote_batch(cfg);
    if (cfg.adapt.reward_mode == RewardMode::GroundTruth && cfg.remote.labels.empty()) {
      throw ConfigError("gt-reward in remote mode needs [remote] labels");
    }
  } else {
    samples = to_samples(cfg, adaptation_batch(cfg), kAdaptRole);
  }

  const fs::path dir(cfg.out);
  fs::create_directories(dir / "distributions");
  write_text_file(dir / "effective_config.ini", render_config(cfg));
  if (cfg.backend == "sim") {
    sim::SimBatch batch;
    for (const auto& s : samples) batch.environments.push_back(*s.env);
    write_text_file(dir / "simenv.json", sim::serialize_simenv(batch));
  }

  const fs::path log_path = dir / "rollouts.jsonl";
  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  auto flush_epoch = [&](const EpochCheckpoint& cp) {
    for (const auto& r : cp.records) log << serialize_record(r) << "\n";
    log.flush();
  };

  std::optional<ToyPolicy> policy;
  if (cfg.policy.enabled) {
    if (cfg.backend != "sim") throw ConfigError("the toy policy runs only with the sim backend");
    policy = initial_policy(cfg);
  }
  SimOracleBackend sim_backend(cfg.sim.wrap_text);
  std::optional<RemoteBackend> remote_backend;
  Backend* backend = &sim_backend;
  if (endpoint) {
    remote_backend.emplace(*endpoint, cfg.adapt.max_prompt_tokens);
    backend = &*remote_backend;
  }

  const AdaptResult result = adapt_batch(samples, cfg.adapt, backend, policy ? &*policy : nullptr, flush_epoch);

  const std::int64_t created = cfg.backend == "sim" ? 0 : static_cast<std::int64_t>(std::time(nullptr));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    DistributionFile f{result.distributions[i], {samples[i].video_id, samples[i].question_id, created}, std::nullopt};
    write_fdist(dir / "distributions" / (file_stem(samples[i].video_id) + ".fdist.json"), f);
  }
  const GlobalPrior prior = average_distributions(std::span<const FrameDistribution>(result.distributions));
  write_fdist(dir / "global_prior.fdist.json", global_prior_file(prior, {"global", "", created}));
  if (result.policy) write_text_file(dir / "policy.json", serialize_policy(*result.policy));
  write_text_file(dir / "summary.csv", summary_csv(result.epochs));

  out << "adapted " << samples.size() << " videos, " << result.records.size() << " rollouts\n";
  out << summary_table(result.epochs);
  out << "wrote " << dir.string() << "\n";
  return kExitOk;
}

// --- infer ----------------------------------------------------------------

struct InferFlags {
  std::string prior_path;
  std::string policy_path;
  std::string baseline = "none";
  std::optional<std::size_t> votes;
  std::optional<std::size_t> frames;
  std::optional<std::string> mode;
  bool interpolate = false;
};

int cmd_infer(RunConfig cfg, const InferFlags& flags, std::ostream& out) {
  std::optional<EndpointConfig> endpoint;
  std::vector<VideoSample> samples;
  if (cfg.backend == "remote") {
    endpoint = endpoint_from_env(cfg);
    const std::string root = cfg.remote.eval_root.empty() ? cfg.remote.data_root : cfg.remote.eval_root;
    if (root.empty()) throw ConfigError("remote backend: set [remote] eval_root or data_root");
    samples = load_video_root(root);
  } else {
    samples = sim_heldout_samples(cfg);
  }

  InferenceConfig icfg = cfg.infer;
  if (flags.frames) icfg.frames = *flags.frames;
  if (flags.mode) icfg.mode = parse_selection_mode(*flags.mode);
  if (flags.votes) icfg.votes = *flags.votes;
  if (flags.interpolate) icfg.interpolate = true;

  GlobalPrior prior;
  if (flags.baseline == "random") {
    prior = {uniform_probs(samples.front().num_frames), 0};
  } else {
    if (flags.prior_path.empty()) throw ConfigError("infer: --prior is required unless --baseline random");
    prior = to_global_prior(read_fdist(flags.prior_path));
    if (flags.baseline == "clip") {
      for (const auto& s : samples) {
        if (!s.clip_scores) throw ConfigError("--baseline clip needs CLIP scores for " + s.video_id);
      }
      icfg.clip_blend = BlendSpec{1.0, 0.0};
    } else if (flags.baseline == "self-consistency") {
      icfg.votes = flags.votes.value_or(8);
    } else if (flags.baseline != "none") {
      throw ConfigError("unknown baseline '" + flags.baseline + "' (none|random|clip|self-consistency)");
    }
  }

  std::optional<ToyPolicy> policy;
  if (!flags.policy_path.empty()) policy = parse_policy(read_text_file(flags.policy_path));
  SimOracleBackend sim_backend(cfg.sim.wrap_text);
  std::optional<PolicyBackend> policy_backend;
  std::optional<RemoteBackend> remote_backend;
  Backend* backend = &sim_backend;
  if (endpoint) {
    remote_backend.emplace(*endpoint, cfg.adapt.max_prompt_tokens);
    backend = &*remote_backend;
  } else if (policy) {
    policy_backend.emplace(*policy);
    backend = &*policy_backend;
  }

  const auto preds = adapted_inference(samples, prior, icfg, *backend);

  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  std::string lines;
  bool labeled = true;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    json_text::ObjectWriter w;
    w.field("video_id", preds[i].video_id).field("question_id", preds[i].question_id);
    if (preds[i].answer) {
      w.field("answer", *preds[i].answer);
    } else {
      w.raw("answer", "null");
    }
    w.field("frames", std::span<const std::size_t>(preds[i].frames));
    if (samples[i].ground_truth) {
      w.field("correct", preds[i].answer.has_value() && *preds[i].answer == *samples[i].ground_truth);
    } else {
      labeled = false;
    }
    lines += w.str() + "\n";
  }
  write_text_file(dir / "predictions.jsonl", lines);
  const std::size_t answered =
      static_cast<std::size_t>(std::count_if(preds.begin(), preds.end(), [](const auto& p) { return p.answer.has_value(); }));
  out << "predictions: " << preds.size() << " (" << answered << " answered)\n";
  if (labeled) {
    out << "accuracy: " << std::fixed << std::setprecision(4) << accuracy(preds, samples) << "\n";
  }
  out << "wrote " << (dir / "predictions.jsonl").string() << "\n";
  return kExitOk;
}

// --- dist -----------------------------------------------------------------

int cmd_dist_merge(const std::vector<std::string>& inputs, const std::string& output, std::ostream& out) {
  std::vector<std::vector<double>> probs;
  for (const auto& p : inputs) probs.push_back(read_fdist(p).dist.probs);
  const GlobalPrior prior = average_distributions(std::span<const std::vector<double>>(probs));
  write_fdist(output, global_prior_file(prior, {"global", "", 0}));
  out << "merged " << inputs.size() << " distributions over " << prior.num_frames() << " frames into " << output << "\n";
  return kExitOk;
}

int cmd_dist_interpolate(const std::string& input, std::size_t frames, const std::string& output, std::ostream& out) {
  DistributionFile f = read_fdist(input);
  const std::size_t from = f.dist.num_frames();
  f.dist.probs = interpolate(f.dist.probs, frames);
  f.dist.weights = f.dist.probs;
  write_fdist(output, f);
  out << "interpolated " << from << " -> " << frames << " frames into " << output << "\n";
  return kExitOk;
}

int cmd_dist_blend(const std::string& clip_path, const std::string& learned_path, double w_clip,
                   std::optional<double> w_dist, const std::string& output, std::ostream& out) {
  const DistributionFile clip = read_fdist(clip_path);
  DistributionFile learned = read_fdist(learned_path);
  const BlendSpec spec{w_clip, w_dist.value_or(1.0 - w_clip)};
  learned.dist.probs = blend(clip.dist.probs, learned.dist.probs, spec);
  learned.dist.weights = learned.dist.probs;
  write_fdist(output, learned);
  out << "blended w_clip=" << spec.w_clip << " w_dist=" << spec.w_dist << " into " << output << "\n";
  return kExitOk;
}

int cmd_dist_show(const std::string& input, const std::string& output, std::ostream& out) {
  const DistributionFile f = read_fdist(input);
  std::string csv = "frame_index,prob\n";
  for (std::size_t t = 0; t < f.dist.probs.size(); ++t) {
    csv += std::to_string(t) + "," + json_text::format_double(f.dist.probs[t]) + "\n";
  }
  if (output.empty()) {
    out << csv;
  } else {
    write_text_file(output, csv);
    out << "wrote " << output << "\n";
  }
  return kExitOk;
}

// --- ablate ---------------------------------------------------------------

struct AblationRow {
  std::string variant;
  double mean_reward = 0.0;
  double informative_mass = 0.0;
  double heldout_accuracy = 0.0;
};

AblationRow run_variant(const std::string& name, const RunConfig& cfg) {
  const AdaptResult r = run_sim_adaptation(cfg);
  const GlobalPrior prior = average_distributions(std::span<const FrameDistribution>(r.distributions));
  AblationRow row;
  row.variant = name;
  row.mean_reward = r.epochs.back().mean_reward;
  row.informative_mass = r.epochs.back().informative_mass.value_or(0.0);
  row.heldout_accuracy = evaluate_heldout(cfg, prior, r.policy ? &*r.policy : nullptr);
  return row;
}

int cmd_ablate(RunConfig cfg, const std::string& kind, std::ostream& out) {
  if (kind != "gt-reward" && kind != "uniform-init" && kind != "vary-KN" && kind != "epochs") {
    throw ConfigError("unknown ablation '" + kind + "' (gt-reward|uniform-init|vary-KN|epochs)");
  }
  if (cfg.backend == "remote") {
    if (kind == "gt-reward" && cfg.remote.labels.empty()) {
      throw ConfigError("gt-reward in remote mode needs a labels file ([remote] labels)");
    }
    throw ConfigError("ablations are sim-mode sweeps; run them with --backend sim");
  }

  std::string header = "variant,mean_reward,informative_mass,heldout_accuracy";
  std::vector<std::vector<std::string>> rows;
  auto push = [&](const AblationRow& r) {
    rows.push_back({r.variant, json_text::format_double(r.mean_reward), json_text::format_double(r.informative_mass),
                    json_text::format_double(r.heldout_accuracy)});
  };

  if (kind == "gt-reward") {
    RunConfig majority = cfg;
    majority.adapt.reward_mode = RewardMode::Frequency;
    RunConfig gt = cfg;
    gt.adapt.reward_mode = RewardMode::GroundTruth;
    push(run_variant("majority-reward", majority));
    push(run_variant("gt-reward", gt));
  } else if (kind == "uniform-init") {
    RunConfig clip = cfg;
    if (clip.sim.clip_signal <= 0.0) clip.sim.clip_signal = 0.5;
    RunConfig uniform = cfg;
    uniform.sim.clip_signal = 0.0;
    push(run_variant("clip-init", clip));
    push(run_variant("uniform-init", uniform));
  } else if (kind == "vary-KN") {
    for (std::size_t k : {4, 8}) {
      for (std::size_t n : {8, 16, 32}) {
        RunConfig v = cfg;
        v.adapt.subsets = k;
        v.adapt.rollouts = n;
        push(run_variant("K=" + std::to_string(k) + " N=" + std::to_string(n), v));
      }
    }
  } else {
    header = "epoch,mean_reward,majority_frequency,informative_mass,heldout_accuracy";
    run_sim_adaptation(cfg, [&](const EpochCheckpoint& cp) {
      const GlobalPrior prior = average_distributions(cp.distributions);
      const double acc = evaluate_heldout(cfg, prior, cp.policy);
      rows.push_back({std::to_string(cp.epoch), json_text::format_double(cp.summary.mean_reward),
                      json_text::format_double(cp.summary.majority_frequency),
                      json_text::format_double(cp.summary.informative_mass.value_or(0.0)),
                      json_text::format_double(acc)});
    });
  }

  std::string csv = header + "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) csv += (i ? "," : "") + r[i];
    csv += "\n";
  }
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  write_text_file(dir / ("ablation-" + kind + ".csv"), csv);

  // Aligned table for the terminal; four decimals is enough to compare rows.
  std::vector<std::string> cols;
  std::stringstream hs(header);
  for (std::string c; std::getline(hs, c, ',');) cols.push_back(c);
  std::vector<std::size_t> width(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) width[i] = std::max<std::size_t>(cols[i].size(), 16);
  for (std::size_t i = 0; i < cols.size(); ++i) out << std::setw(static_cast<int>(width[i])) << cols[i] << " ";
  out << "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      out << std::setw(static_cast<int>(width[i]));
      if (i == 0) {
        out << r[i];
      } else {
        out << std::fixed << std::setprecision(4) << std::stod(r[i]);
      }
      out << " ";
    }
    out << "\n";
  }
  out << "wrote " << (dir / ("ablation-" + kind + ".csv")).string() << "\n";
  return kExitOk;
}

// --- simgen ---------------------------------------------------------------

int cmd_simgen(const RunConfig& cfg, const std::string& output, std::ostream& out) {
  const fs::path path = output.empty() ? fs::path(cfg.out) / "simenv.json" : fs::path(output);
  RunConfig fresh = cfg;
  fresh.sim.env_file.clear();
  const sim::SimBatch batch = adaptation_batch(fresh);
  write_text_file(path, sim::serialize_simenv(batch));
  out << "wrote " << batch.environments.size() << " environments to " << path.string() << "\n";
  return kExitOk;
}

}  // namespace

ToyPolicy initial_policy(const RunConfig& cfg) {
  return sim::pretrained_policy(cfg.sim.params.answer_count, cfg.policy.evidence_weight, cfg.adapt.temperature);
}

std::vector<VideoSample> sim_adaptation_samples(const RunConfig& config) {
  return to_samples(config, adaptation_batch(config), kAdaptRole);
}

std::vector<VideoSample> sim_heldout_samples(const RunConfig& config) {
  const auto prior = shared_prior(config);
  const sim::SimBatch batch =
      sim::generate_batch(config.sim.params, config.sim.heldout,
                          prior ? std::optional<std::span<const double>>(*prior) : std::nullopt,
                          stream_seed(config.seed, {kHeldoutRole}));
  return to_samples(config, batch, kHeldoutRole);
}

AdaptResult run_sim_adaptation(const RunConfig& config, const EpochCallback& on_epoch) {
  const auto samples = sim_adaptation_samples(config);
  SimOracleBackend backend(config.sim.wrap_text);
  std::optional<ToyPolicy> policy;
  if (config.policy.enabled) policy = initial_policy(config);
  return adapt_batch(samples, config.adapt, &backend, policy ? &*policy : nullptr, on_epoch);
}

double accuracy(const std::vector<Prediction>& predictions, const std::vector<VideoSample>& samples) {
  if (predictions.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& truth = samples.at(i).ground_truth;
    if (predictions[i].answer && truth && *predictions[i].answer == *truth) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double evaluate_heldout(const RunConfig& config, const GlobalPrior& prior, const ToyPolicy* policy) {
  const auto samples = sim_heldout_samples(config);
  SimOracleBackend oracle(config.sim.wrap_text);
  std::optional<PolicyBackend> pb;
  Backend* backend = &oracle;
  if (policy) {
    pb.emplace(*policy);
    backend = &*pb;
  }
  return accuracy(adapted_inference(samples, prior, config.infer, *backend), samples);
}

std::string serialize_policy(const ToyPolicy& policy) {
  auto flat = [](const Eigen::MatrixXd& m) {
    std::vector<double> v;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
    }
    return v;
  };
  const auto theta = flat(policy.theta);
  const auto ref = flat(policy.reference);
  json_text::ObjectWriter w;
  w.field("version", "toypolicy-v1")
      .field("feature_dim", policy.feature_dim())
      .field("answer_count", policy.answer_count())
      .field("temperature", policy.temperature)
      .field("theta", std::span<const double>(theta))
      .field("reference", std::span<const double>(ref));
  return w.str() + "\n";
}

ToyPolicy parse_policy(std::string_view text) {
  const auto j = json_text::parse(text, "toypolicy-v1");
  if (!j.is_object() || j.value("version", "") != "toypolicy-v1") {
    throw DataFormatError("toypolicy-v1: missing or unsupported version");
  }
  try {
    const auto rows = j.at("feature_dim").get<Eigen::Index>();
    const auto cols = j.at("answer_count").get<Eigen::Index>();
    auto unflat = [&](const char* key) {
      const auto v = j.at(key).get<std::vector<double>>();
      if (static_cast<Eigen::Index>(v.size()) != rows * cols) {
        throw DataFormatError(std::string("toypolicy-v1: ") + key + " has the wrong size");
      }
      Eigen::MatrixXd m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
      }
      return m;
    };
    ToyPolicy p(unflat("theta"), j.at("temperature").get<double>());
    p.reference = unflat("reference");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError(std::string("toypolicy-v1: ") + e.what());
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Test-time adaptation for video QA: frequency rewards, frame bandit, GRPO toy policy"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags global;
  app.add_option("--seed", global.seed, "Root random seed (overrides [run] seed)");
  app.add_option("--out", global.out, "Output directory (overrides [run] out)");
  app.add_option("--backend", global.backend, "sim or remote (overrides [run] backend)");

  std::string config_path;
  auto* adapt = app.add_subcommand("adapt", "Adapt on a batch and write distributions, prior, policy and log");
  adapt->add_option("config", config_path, "Run config file")->required();

  InferFlags infer_flags;
  auto* infer = app.add_subcommand("infer", "Predict on an evaluation set with a frame prior");
  infer->add_option("config", config_path, "Run config file")->required();
  infer->add_option("--prior", infer_flags.prior_path, "Global prior (fdist-v1)");
  infer->add_option("--policy", infer_flags.policy_path, "Toy-policy checkpoint (sim mode)");
  infer->add_option("--baseline", infer_flags.baseline, "none|random|clip|self-consistency");
  infer->add_option("--votes", infer_flags.votes, "Votes per question for self-consistency");
  infer->add_option("--frames", infer_flags.frames, "Frames per question");
  infer->add_option("--mode", infer_flags.mode, "sample|topk");
  infer->add_flag("--interpolate", infer_flags.interpolate, "Regrid the prior to each video's frame grid");

  auto* dist = app.add_subcommand("dist", "Frame-distribution file utilities");
  dist->require_subcommand(1);
  std::vector<std::string> merge_inputs;
  std::string output;
  auto* merge = dist->add_subcommand("merge", "Average distributions into a global prior");
  merge->add_option("inputs", merge_inputs, "fdist-v1 files")->required();
  merge->add_option("-o,--output", output, "Output file")->required();
  std::string input;
  std::size_t target_frames = 0;
  auto* interp = dist->add_subcommand("interpolate", "Regrid a distribution");
  interp->add_option("input", input, "fdist-v1 file")->required();
  interp->add_option("--frames", target_frames, "Target frame count")->required();
  interp->add_option("-o,--output", output, "Output file")->required();
  std::string clip_path;
  std::string learned_path;
  double w_clip = 0.0;
  std::optional<double> w_dist;
  auto* blend_cmd = dist->add_subcommand("blend", "Blend a CLIP-score distribution with a learned one");
  blend_cmd->add_option("--clip", clip_path, "CLIP-score distribution (fdist-v1)")->required();
  blend_cmd->add_option("--learned", learned_path, "Learned distribution (fdist-v1)")->required();
  blend_cmd->add_option("--w-clip", w_clip, "Weight on the CLIP distribution")->required();
  blend_cmd->add_option("--w-dist", w_dist, "Weight on the learned distribution (default 1 - w_clip)");
  blend_cmd->add_option("-o,--output", output, "Output file")->required();
  auto* show = dist->add_subcommand("show", "Print frame_index,prob CSV");
  show->add_option("input", input, "fdist-v1 file")->required();
  show->add_option("-o,--output", output, "Write CSV here instead of stdout");

  std::string ablation;
  auto* ablate = app.add_subcommand("ablate", "Run a sim-mode ablation sweep");
  ablate->add_option("config", config_path, "Run config file")->required();
  ablate->add_option("--kind", ablation, "gt-reward|uniform-init|vary-KN|epochs")->required();

  auto* simgen = app.add_subcommand("simgen", "Write the sim batch described by a config (simenv-v1)");
  simgen->add_option("config", config_path, "Run config file")->required();
  simgen->add_option("-o,--output", output, "Output file (default <out>/simenv.json)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  auto config = [&] {
    RunConfig cfg = load_config(config_path);
    apply(cfg, global);
    return cfg;
  };

  try {
    if (*adapt) return cmd_adapt(config(), out);
    if (*infer) return cmd_infer(config(), infer_flags, out);
    if (*ablate) return cmd_ablate(config(), ablation, out);
    if (*simgen) return cmd_simgen(config(), output, out);
    if (*merge) return cmd_dist_merge(merge_inputs, output, out);
    if (*interp) return cmd_dist_interpolate(input, target_frames, output, out);
    if (*blend_cmd) return cmd_dist_blend(clip_path, learned_path, w_clip, w_dist, output, out);
    if (*show) return cmd_dist_show(input, output, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const DataFormatError& e) {
    err << "data format error: " << e.what() << "\n";
    return kExitDataFormat;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace ttavid::app
