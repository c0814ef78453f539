#include "ttavid/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "ttavid/errors.hpp"
#include "ttavid/json_text.hpp"

namespace ttavid {
namespace {

// Stream tags keep the subset draws, generations and inference draws of the
// same (epoch, video) independent.
constexpr std::uint64_t kSubsetStream = 1;
constexpr std::uint64_t kGenerationStream = 2;
constexpr std::uint64_t kInferenceStream = 3;

struct Outcome {
  Generation generation;
  std::string error;
};

// Runs `count` jobs with at most `parallelism` in flight; results are stored
// by job index so the order never depends on scheduling.
template <typename Job>
std::vector<Outcome> run_jobs(std::size_t count, std::size_t parallelism, Job job) {
  std::vector<Outcome> out(count);
  auto run_one = [&](std::size_t i) {
    try {
      out[i].generation = job(i);
    } catch (const BackendError& e) {
      out[i].error = e.what();
    }
  };
  const std::size_t workers = std::min(parallelism, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) run_one(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) run_one(i);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

std::vector<double> normalized_scores(const std::vector<double>& scores) {
  const double total = std::accumulate(scores.begin(), scores.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("clip scores are all zero");
  std::vector<double> p(scores);
  for (double& x : p) x /= total;
  return p;
}

std::size_t answer_index(const ExtractedAnswer& a, std::size_t option_count) {
  if (!a.valid || a.value.size() != 1) return option_count;
  const auto idx = static_cast<std::size_t>(a.value[0] - 'A');
  return idx < option_count ? idx : option_count;
}

}  // namespace

std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double informative_mass(const FrameDistribution& dist, const sim::SimEnvironment& env) {
  double m = 0.0;
  for (std::size_t t : env.informative) m += dist.probs.at(t);
  return m;
}

void VideoSample::validate() const {
  if (num_frames == 0) throw std::invalid_argument("sample " + video_id + ": empty frame grid");
  if (!frame_paths.empty() && frame_paths.size() != num_frames) {
    throw std::invalid_argument("sample " + video_id + ": frame list length differs from T");
  }
  if (env && env->num_frames != num_frames) {
    throw std::invalid_argument("sample " + video_id + ": sim environment grid differs from T");
  }
  if (clip_scores) {
    if (clip_scores->size() != num_frames) {
      throw std::invalid_argument("sample " + video_id + ": clip scores length differs from T");
    }
    for (double s : *clip_scores) {
      if (!(s >= 0.0)) throw std::invalid_argument("sample " + video_id + ": negative clip score");
    }
  }
}

VideoSample make_sim_sample(const sim::SimEnvironment& env, std::size_t index,
                            std::optional<std::vector<double>> clip_scores) {
  VideoSample s;
  s.video_id = "sim-" + std::to_string(index);
  s.question_id = "q-" + std::to_string(index);
  s.question = "Which option does the video support?";
  s.format = AnswerFormat::multiple_choice(static_cast<int>(env.answer_count));
  s.num_frames = env.num_frames;
  s.env = env;
  s.clip_scores = std::move(clip_scores);
  s.ground_truth = std::string(1, sim::option_letter(env.truth));
  return s;
}

void AdaptationConfig::validate() const {
  if (subsets == 0 || frames_per_subset == 0 || rollouts == 0 || epochs == 0) {
    throw std::invalid_argument("K, F, N and epochs must all be >= 1");
  }
  if (!(reward.alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (!(train.eta > 0.0)) throw std::invalid_argument("policy learning rate must be > 0");
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
}

// --- rolloutlog-v1 --------------------------------------------------------

std::string serialize_record(const RolloutRecord& r) {
  json_text::ObjectWriter w;
  w.field("version", "rolloutlog-v1")
      .field("video_id", r.video_id)
      .field("question_id", r.question_id)
      .field("epoch", r.epoch)
      .field("subset_index", r.subset_index)
      .field("rollout_index", r.rollout_index)
      .field("subset", std::span<const std::size_t>(r.subset))
      .field("text", r.text)
      .field("answer", r.answer.value)
      .field("valid", r.answer.valid);
  if (r.reward) {
    w.field("reward", *r.reward);
  } else {
    w.raw("reward", "null");
  }
  w.field("latency_ms", r.latency_ms).field("error", r.error);
  return w.str();
}

RolloutRecord parse_record(std::string_view line) {
  const nlohmann::json j = json_text::parse(line, "rolloutlog-v1");
  if (!j.is_object() || j.value("version", "") != "rolloutlog-v1") {
    throw DataFormatError("rolloutlog-v1: missing or unsupported version");
  }
  RolloutRecord r;
  try {
    r.video_id = j.at("video_id").get<std::string>();
    r.question_id = j.at("question_id").get<std::string>();
    r.epoch = j.at("epoch").get<std::size_t>();
    r.subset_index = j.at("subset_index").get<std::size_t>();
    r.rollout_index = j.at("rollout_index").get<std::size_t>();
    r.subset = j.at("subset").get<FrameSubset>();
    r.text = j.at("text").get<std::string>();
    r.answer.value = j.at("answer").get<std::string>();
    r.answer.valid = j.at("valid").get<bool>();
    if (!j.at("reward").is_null()) r.reward = j.at("reward").get<double>();
    r.latency_ms = j.at("latency_ms").get<double>();
    r.error = j.value("error", "");
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError(std::string("rolloutlog-v1: bad record: ") + e.what());
  }
  return r;
}

// --- backends -------------------------------------------------------------

Generation SimOracleBackend::generate(const GenerationRequest& request) {
  if (!request.sample.env) throw BackendError("sim backend: sample " + request.sample.video_id + " has no sim environment");
  Rng rng(request.stream);
  const char letter = sim::option_letter(sim::oracle_answer(*request.sample.env, request.frames, rng));
  std::string text = wrap_text_ ? "Reasoning over the selected frames.\nAnswer: " + std::string(1, letter)
                                : std::string(1, letter);
  return {std::move(text), 0.0};
}

Generation PolicyBackend::generate(const GenerationRequest& request) {
  if (!request.sample.env) throw BackendError("policy backend: sample " + request.sample.video_id + " has no sim environment");
  Rng rng(request.stream);
  const Eigen::VectorXd x = sim::policy_features(*request.sample.env, request.frames);
  const std::size_t a = rollout_policy(*policy_, x, 1, rng).front();
  return {"Answer: " + std::string(1, sim::option_letter(a)), 0.0};
}

// --- adaptation loop ------------------------------------------------------

AdaptResult adapt_batch(std::span<const VideoSample> samples, const AdaptationConfig& config, Backend* backend,
                        const ToyPolicy* policy, const EpochCallback& on_epoch) {
  config.validate();
  if (samples.empty()) throw std::invalid_argument("adapt: empty batch");
  const std::size_t grid = samples.front().num_frames;
  for (const auto& s : samples) {
    s.validate();
    if (s.num_frames != grid) {
      throw std::invalid_argument("adapt: all samples must share a frame grid (" + std::to_string(grid) + " vs " +
                                  std::to_string(s.num_frames) + " for " + s.video_id + ")");
    }
    if (policy && !s.env) throw std::invalid_argument("adapt: toy-policy mode needs sim samples");
    if (config.reward_mode == RewardMode::GroundTruth && !s.ground_truth) {
      throw std::invalid_argument("adapt: gt-reward needs a ground-truth label for " + s.video_id);
    }
  }
  if (config.frames_per_subset > grid) {
    throw std::invalid_argument("adapt: F = " + std::to_string(config.frames_per_subset) + " exceeds T = " +
                                std::to_string(grid));
  }
  if (!policy && !backend) throw std::invalid_argument("adapt: no backend");

  AdaptResult result;
  for (const auto& s : samples) {
    result.distributions.push_back(
        s.clip_scores ? init_distribution(grid, std::span<const double>(*s.clip_scores)) : init_distribution(grid));
  }
  std::optional<ToyPolicy> current;
  std::optional<PolicyBackend> policy_backend;
  if (policy) {
    current = *policy;
    policy_backend.emplace(*current);
    backend = &*policy_backend;
  }
  const std::size_t K = config.subsets;
  const std::size_t N = config.rollouts;
  const std::size_t parallelism = backend->thread_safe() ? std::max<std::size_t>(config.parallelism, 1) : 1;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::size_t first_record = result.records.size();
    EpochSummary summary;
    summary.epoch = epoch + 1;
    double reward_sum = 0.0;
    std::size_t reward_count = 0;
    double majority_sum = 0.0;
    std::size_t scored = 0;
    std::vector<std::vector<PolicyRollout>> epoch_groups;

    for (std::size_t i = 0; i < samples.size(); ++i) {
      const VideoSample& sample = samples[i];
      const std::uint64_t vid = stable_hash(sample.video_id + "\x1f" + sample.question_id);
      Rng subset_rng(stream_seed(config.seed, {kSubsetStream, epoch, vid}));
      std::vector<FrameSubset> subsets;
      for (std::size_t k = 0; k < K; ++k) {
        subsets.push_back(sample_subset(result.distributions[i], config.frames_per_subset, subset_rng));
      }

      const auto outcomes = run_jobs(K * N, parallelism, [&](std::size_t job) {
        const std::size_t k = job / N;
        const std::size_t n = job % N;
        GenerationRequest req{sample, subsets[k], config.temperature, config.max_response_tokens,
                              stream_seed(config.seed, {kGenerationStream, epoch, vid, k, n})};
        return backend->generate(req);
      });

      AnswerPool pool(K, N);
      for (std::size_t job = 0; job < K * N; ++job) {
        const std::size_t k = job / N;
        const std::size_t n = job % N;
        RolloutRecord rec;
        rec.video_id = sample.video_id;
        rec.question_id = sample.question_id;
        rec.epoch = epoch + 1;
        rec.subset_index = k;
        rec.rollout_index = n;
        rec.subset = subsets[k];
        rec.text = outcomes[job].generation.text;
        rec.latency_ms = outcomes[job].generation.latency_ms;
        rec.error = outcomes[job].error;
        rec.answer = rec.error.empty() ? extract_answer(rec.text, sample.format) : ExtractedAnswer::invalid();
        if (!rec.error.empty()) ++summary.failures;
        pool.add(k, n, rec.answer);
        result.records.push_back(std::move(rec));
      }

      RewardReport report = compute_rewards(pool, config.reward);
      if (config.reward_mode == RewardMode::GroundTruth && !report.degenerate) {
        std::vector<double> sums(K, 0.0);
        for (std::size_t e = 0; e < pool.entries().size(); ++e) {
          const auto& entry = pool.entries()[e];
          const double r = !entry.answer.valid ? config.reward.invalid_reward
                                               : (entry.answer.value == *sample.ground_truth ? 1.0 : 0.0);
          report.per_rollout[e] = r;
          sums[entry.subset] += r;
        }
        for (std::size_t k = 0; k < K; ++k) report.per_subset[k] = sums[k] / static_cast<double>(N);
        report.baseline = std::accumulate(report.per_subset.begin(), report.per_subset.end(), 0.0) /
                          static_cast<double>(K);
      }
      for (std::size_t e = 0; e < K * N; ++e) {
        result.records[result.records.size() - K * N + e].reward = report.per_rollout[e];
        reward_sum += report.per_rollout[e];
        ++reward_count;
      }

      if (report.degenerate) {
        ++summary.skipped;
        continue;
      }
      ++scored;
      majority_sum += report.freqs.at(*report.majority);
      result.distributions[i] =
          update(result.distributions[i], BanditUpdateInput{subsets, report.per_subset, config.eta_fs});

      if (current) {
        const AdvantageGroup adv =
            compute_advantages(report.per_rollout, config.grouping, N, config.train.std_epsilon);
        std::vector<PolicyRollout> group;
        const std::size_t options = sample.env->answer_count;
        for (std::size_t e = 0; e < K * N; ++e) {
          const std::size_t a = answer_index(pool.entries()[e].answer, options);
          if (a == options) continue;
          group.push_back({sim::policy_features(*sample.env, subsets[pool.entries()[e].subset]), a,
                           adv.advantages[e]});
        }
        if (config.cadence == PolicyCadence::PerQuestion) {
          if (!group.empty()) current = policy_step(*current, group, config.train);
          policy_backend->set_policy(*current);
        } else {
          epoch_groups.push_back(std::move(group));
        }
      }
    }

    if (current && config.cadence == PolicyCadence::PerEpoch) {
      current = policy_step_grouped(*current, epoch_groups, config.train);
      policy_backend->set_policy(*current);
    }

    summary.mean_reward = reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0;
    summary.majority_frequency = scored ? majority_sum / static_cast<double>(scored) : 0.0;
    double mass = 0.0;
    std::size_t sim_count = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!samples[i].env) continue;
      mass += informative_mass(result.distributions[i], *samples[i].env);
      ++sim_count;
    }
    if (sim_count) summary.informative_mass = mass / static_cast<double>(sim_count);
    result.epochs.push_back(summary);

    const std::span<const RolloutRecord> epoch_records(result.records.data() + first_record,
                                                       result.records.size() - first_record);
    if (on_epoch) {
      on_epoch(EpochCheckpoint{epoch + 1, epoch_records, result.distributions, current ? &*current : nullptr,
                               result.epochs.back()});
    }
    if (summary.failures == epoch_records.size()) {
      throw BackendError("every generation failed in epoch " + std::to_string(epoch + 1) + "; last error: " +
                         epoch_records.back().error);
    }
  }
  result.policy = current;
  return result;
}

// --- inference ------------------------------------------------------------

std::vector<Prediction> adapted_inference(std::span<const VideoSample> samples, const GlobalPrior& prior,
                                          const InferenceConfig& config, Backend& backend) {
  if (config.votes == 0) throw std::invalid_argument("inference needs votes >= 1");
  const std::size_t parallelism = backend.thread_safe() ? std::max<std::size_t>(config.parallelism, 1) : 1;
  std::vector<Prediction> out;
  out.reserve(samples.size());
  for (const auto& sample : samples) {
    sample.validate();
    std::vector<double> probs = prior.probs;
    if (probs.size() != sample.num_frames) {
      if (!config.interpolate) {
        throw ConfigError("prior grid has " + std::to_string(probs.size()) + " frames but sample " + sample.video_id +
                          " has " + std::to_string(sample.num_frames) + "; pass --interpolate to regrid");
      }
      probs = interpolate(probs, sample.num_frames);
    }
    if (config.clip_blend && sample.clip_scores) {
      probs = blend(normalized_scores(*sample.clip_scores), probs, *config.clip_blend);
    }
    const std::uint64_t vid = stable_hash(sample.video_id + "\x1f" + sample.question_id);
    Rng rng(stream_seed(config.seed, {kInferenceStream, vid}));

    Prediction pred;
    pred.video_id = sample.video_id;
    pred.question_id = sample.question_id;
    pred.frames = select_inference_frames(probs, config.frames, config.mode, rng);

    const auto outcomes = run_jobs(config.votes, parallelism, [&](std::size_t v) {
      GenerationRequest req{sample, pred.frames, config.temperature, config.max_tokens,
                            stream_seed(config.seed, {kInferenceStream, vid, v + 1})};
      return backend.generate(req);
    });
    AnswerPool pool(1, config.votes);
    for (std::size_t v = 0; v < config.votes; ++v) {
      pool.add(0, v, outcomes[v].error.empty() ? extract_answer(outcomes[v].generation.text, sample.format)
                                                : ExtractedAnswer::invalid());
    }
    pred.answer = majority_answer(compute_frequencies(pool).counts);
    out.push_back(std::move(pred));
  }
  return out;
}

}  // namespace ttavid
