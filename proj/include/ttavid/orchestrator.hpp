#pragma once

// The adaptation loop. Per epoch and per question: draw K frame subsets from
// the question's frame distribution, collect N generations per subset, score
// the K x N pool, update the frame bandit with the per-subset mean rewards
// and, with a toy policy, take GRPO steps. Also runs inference with a
// global frame prior.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttavid/answer.hpp"
#include "ttavid/distribution.hpp"
#include "ttavid/frame_bandit.hpp"
#include "ttavid/grpo.hpp"
#include "ttavid/reward.hpp"
#include "ttavid/sim_env.hpp"

namespace ttavid {

struct VideoSample {
  std::string video_id;
  std::string question_id;
  std::string question;
  AnswerFormat format;
  std::size_t num_frames = 0;
  std::vector<std::filesystem::path> frame_paths;  // remote mode
  std::optional<sim::SimEnvironment> env;          // sim mode
  std::optional<std::vector<double>> clip_scores;
  std::optional<std::string> ground_truth;         // only for gt-reward ablations and scoring

  void validate() const;
};

// Wraps a sim environment as a multiple-choice sample.
VideoSample make_sim_sample(const sim::SimEnvironment& env, std::size_t index,
                            std::optional<std::vector<double>> clip_scores = std::nullopt);

enum class PolicyCadence { PerEpoch, PerQuestion };
enum class RewardMode { Frequency, GroundTruth };

struct AdaptationConfig {
  std::size_t subsets = 4;             // K
  std::size_t frames_per_subset = 4;   // F
  std::size_t rollouts = 8;            // N
  std::size_t epochs = 5;
  double temperature = 1.0;
  std::size_t batch_size = 32;
  RewardParams reward;
  RewardMode reward_mode = RewardMode::Frequency;
  double eta_fs = 3.0;
  Grouping grouping = Grouping::PerSubset;
  PolicyCadence cadence = PolicyCadence::PerEpoch;
  TrainConfig train;
  std::size_t max_prompt_tokens = 7524;
  std::size_t max_response_tokens = 1024;
  std::size_t parallelism = 4;  // in-flight generations for thread-safe backends
  std::uint64_t seed = 0;

  void validate() const;
};

struct RolloutRecord {
  std::string video_id;
  std::string question_id;
  std::size_t epoch = 0;
  std::size_t subset_index = 0;
  std::size_t rollout_index = 0;
  FrameSubset subset;
  std::string text;
  ExtractedAnswer answer;
  std::optional<double> reward;
  double latency_ms = 0.0;
  std::string error;  // backend failure message, empty on success
};

std::string serialize_record(const RolloutRecord& record);
RolloutRecord parse_record(std::string_view line);

struct GenerationRequest {
  const VideoSample& sample;
  std::span<const std::size_t> frames;
  double temperature = 1.0;
  std::size_t max_tokens = 1024;
  std::uint64_t stream = 0;  // per-call seed for stochastic backends
};

struct Generation {
  std::string text;
  double latency_ms = 0.0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  // Throws BackendError on failure.
  virtual Generation generate(const GenerationRequest& request) = 0;
  // Whether generate() may be called from several threads at once.
  virtual bool thread_safe() const { return false; }
};

// Answers with the sim oracle, optionally wrapped as "Answer: X" text so the
// extractor runs end to end.
class SimOracleBackend : public Backend {
 public:
  explicit SimOracleBackend(bool wrap_text = true) : wrap_text_(wrap_text) {}
  Generation generate(const GenerationRequest& request) override;
  bool thread_safe() const override { return true; }

 private:
  bool wrap_text_;
};

// Samples answers from a toy policy over the sim features of the subset.
class PolicyBackend : public Backend {
 public:
  explicit PolicyBackend(const ToyPolicy& policy) : policy_(&policy) {}
  void set_policy(const ToyPolicy& policy) { policy_ = &policy; }
  Generation generate(const GenerationRequest& request) override;
  bool thread_safe() const override { return true; }

 private:
  const ToyPolicy* policy_;
};

struct EpochSummary {
  std::size_t epoch = 0;
  double mean_reward = 0.0;
  double majority_frequency = 0.0;  // mean over scored questions
  std::optional<double> informative_mass;  // sim samples only, after the update
  std::size_t skipped = 0;                 // questions with no valid answer
  std::size_t failures = 0;                // failed generations
};

struct EpochCheckpoint {
  std::size_t epoch = 0;
  std::span<const RolloutRecord> records;  // this epoch only
  std::span<const FrameDistribution> distributions;
  const ToyPolicy* policy = nullptr;
  const EpochSummary& summary;
};

using EpochCallback = std::function<void(const EpochCheckpoint&)>;

struct AdaptResult {
  std::vector<FrameDistribution> distributions;
  std::optional<ToyPolicy> policy;
  std::vector<RolloutRecord> records;
  std::vector<EpochSummary> epochs;
};

// `backend` produces generations unless `policy` is given, in which case the
// loop samples from (and trains) a copy of the toy policy; samples then need
// sim environments. `on_epoch` runs after every epoch, before a total-failure
// abort, so callers can flush logs.
AdaptResult adapt_batch(std::span<const VideoSample> samples, const AdaptationConfig& config, Backend* backend,
                        const ToyPolicy* policy, const EpochCallback& on_epoch = {});

struct InferenceConfig {
  std::size_t frames = 32;
  SelectionMode mode = SelectionMode::SampleWithoutReplacement;
  std::size_t votes = 1;                // > 1 means self-consistency voting
  std::optional<BlendSpec> clip_blend;  // blend each sample's CLIP scores into the prior
  bool interpolate = false;             // regrid the prior when grids differ
  double temperature = 1.0;
  std::size_t max_tokens = 1024;
  std::size_t parallelism = 4;
  std::uint64_t seed = 0;
};

struct Prediction {
  std::string video_id;
  std::string question_id;
  std::optional<std::string> answer;  // absent when no valid answer came back
  FrameSubset frames;
};

std::vector<Prediction> adapted_inference(std::span<const VideoSample> samples, const GlobalPrior& prior,
                                          const InferenceConfig& config, Backend& backend);

// Stable 64-bit FNV-1a, used to key random streams by id.
std::uint64_t stable_hash(std::string_view s);

// Sum of probability mass on the environment's informative frames.
double informative_mass(const FrameDistribution& dist, const sim::SimEnvironment& env);

}  // namespace ttavid
