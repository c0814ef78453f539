#pragma once

// Synthetic video-QA world. Each environment hides a set of informative
// frames; an answer oracle is correct with probability
//   p_correct(S) = p_base + gain * min(1, |S ∩ I| / m)
// and otherwise picks a wrong option uniformly. Also provides the exact
// expected-reward oracle used to check the reward engine and the bandit.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ttavid/frame_bandit.hpp"
#include "ttavid/grpo.hpp"
#include "ttavid/random.hpp"
#include "ttavid/reward.hpp"

namespace ttavid::sim {

struct SimParams {
  std::size_t num_frames = 40;
  std::size_t answer_count = 10;
  std::size_t informative_count = 4;
  std::size_t frames_for_full_signal = 0;  // m; 0 means informative_count
  double p_base = -1.0;                    // < 0 means 1 / answer_count
  double gain = -1.0;                      // < 0 means full coverage reaches 0.9
};

struct SimEnvironment {
  std::size_t num_frames = 0;
  std::size_t answer_count = 0;
  std::vector<std::size_t> informative;  // sorted
  std::size_t truth = 0;
  double p_base = 0.0;
  double gain = 0.0;
  std::size_t frames_for_full_signal = 1;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument when the accuracy model leaves [0, 1].
  void validate() const;
};

struct SimBatch {
  std::vector<SimEnvironment> environments;
};

char option_letter(std::size_t index);

SimEnvironment generate_env(const SimParams& params, std::optional<std::span<const double>> shared_prior,
                            std::uint64_t seed);

SimBatch generate_batch(const SimParams& params, std::size_t count,
                        std::optional<std::span<const double>> shared_prior, std::uint64_t seed);

// min(1, |S ∩ I| / m)
double coverage(const SimEnvironment& env, std::span<const std::size_t> subset);
double p_correct(const SimEnvironment& env, std::span<const std::size_t> subset);

// Oracle answer distribution over the M options for a given subset.
std::vector<double> answer_distribution(const SimEnvironment& env, std::span<const std::size_t> subset);

std::size_t oracle_answer(const SimEnvironment& env, std::span<const std::size_t> subset, Rng& rng);

// Exact E[rbar_k] for each subset by enumerating the pool's count
// configurations. Requires K * N <= 16 and M <= 4; throws std::length_error
// otherwise (use monte_carlo_subset_reward).
std::vector<double> expected_subset_reward(const SimEnvironment& env, std::span<const FrameSubset> subsets,
                                           std::size_t rollouts, const RewardParams& params);

struct MonteCarloEstimate {
  std::vector<double> mean;
  std::vector<double> std_error;
};

// Samples `draws` pools from the oracle and scores each with the reward
// engine.
MonteCarloEstimate monte_carlo_subset_reward(const SimEnvironment& env, std::span<const FrameSubset> subsets,
                                             std::size_t rollouts, const RewardParams& params,
                                             std::size_t draws, Rng& rng);

// Frequency rewards evaluated straight from answer indices, independent of
// the reward engine's data structures. answers[k][n] is an option index.
struct PoolRewards {
  std::vector<std::vector<double>> per_rollout;
  std::vector<double> per_subset;
  double entropy_norm = 0.0;
};
PoolRewards exact_pool_rewards(const std::vector<std::vector<std::size_t>>& answers, double alpha);

// Positional prior placing `inside_mass` uniformly on [start, start + length)
// and the rest uniformly elsewhere.
std::vector<double> window_prior(std::size_t num_frames, std::size_t start, std::size_t length,
                                 double inside_mass);

// CLIP-style relevance scores: 1 + signal on informative frames plus
// uniform noise in [0, noise).
std::vector<double> synthetic_clip_scores(const SimEnvironment& env, double signal, double noise, Rng& rng);

// Toy-policy features [1, e_0, ..., e_{M-1}] where e_truth is the
// informative coverage min(1, |S ∩ I| / m) and all other entries are 0.
Eigen::VectorXd policy_features(const SimEnvironment& env, std::span<const std::size_t> subset);

// Unadapted toy policy: weight `evidence_weight` on each option's own
// evidence feature, zero bias.
ToyPolicy pretrained_policy(std::size_t answer_count, double evidence_weight, double temperature);

// --- simenv-v1 ------------------------------------------------------------
std::string serialize_simenv(const SimBatch& batch);
SimBatch parse_simenv(std::string_view text);

}  // namespace ttavid::sim
