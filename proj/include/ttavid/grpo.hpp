#pragma once

// Group-relative policy optimization at desk scale. A ToyPolicy maps a
// feature vector to a softmax distribution over answer options; rewards are
// standardized within groups and used as advantages in a REINFORCE-style
// surrogate.

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ttavid/random.hpp"

namespace ttavid {

enum class Grouping { PerSubset, WholePool };

struct AdvantageGroup {
  std::vector<double> rewards;
  std::vector<double> advantages;
  Grouping grouping = Grouping::PerSubset;
};

// PerSubset treats consecutive blocks of `group_size` rewards as groups;
// WholePool uses one group. a_i = (r_i - mean_g) / std_g with the population
// standard deviation; groups with std_g < std_epsilon get all-zero advantages.
AdvantageGroup compute_advantages(std::span<const double> rewards, Grouping grouping,
                                  std::size_t group_size, double std_epsilon = 1e-8);

struct ToyPolicy {
  Eigen::MatrixXd theta;      // feature_dim x answer_count
  Eigen::MatrixXd reference;  // pi_ref parameters for the optional KL term
  double temperature = 1.0;

  ToyPolicy() = default;
  ToyPolicy(Eigen::MatrixXd initial, double temp);

  std::size_t feature_dim() const { return static_cast<std::size_t>(theta.rows()); }
  std::size_t answer_count() const { return static_cast<std::size_t>(theta.cols()); }

  Eigen::VectorXd logits(const Eigen::VectorXd& features) const;
  Eigen::VectorXd probabilities(const Eigen::VectorXd& features) const;
};

struct TrainConfig {
  double eta = 5e-2;  // toy-policy learning rate
  int epochs = 5;
  double kl_coeff = 0.0;
  double std_epsilon = 1e-8;
};

struct PolicyRollout {
  Eigen::VectorXd features;
  std::size_t answer = 0;
  double advantage = 0.0;
};

// Gradient of the surrogate
//   J(theta) = mean_i a_i log pi(answer_i | x_i)
//              - kl_coeff * mean_i KL(pi(.|x_i) || pi_ref(.|x_i)).
// Throws std::domain_error naming the rollout if any contribution is not
// finite.
Eigen::MatrixXd surrogate_gradient(const ToyPolicy& policy, std::span<const PolicyRollout> rollouts,
                                   const TrainConfig& config);

// The surrogate value itself; used by finite-difference checks.
double surrogate_objective(const ToyPolicy& policy, std::span<const PolicyRollout> rollouts,
                           const TrainConfig& config);

// theta <- theta + eta * surrogate_gradient.
ToyPolicy policy_step(const ToyPolicy& policy, std::span<const PolicyRollout> rollouts,
                      const TrainConfig& config);

// theta <- theta + eta * mean_q surrogate_gradient(group_q). Each group is
// one question's rollouts, so every question carries equal weight. Empty
// groups are ignored; with no nonempty group the policy is returned as is.
ToyPolicy policy_step_grouped(const ToyPolicy& policy, std::span<const std::vector<PolicyRollout>> groups,
                              const TrainConfig& config);

// N independent draws from softmax(theta^T x / temperature); argmax when the
// temperature is below 1e-6.
std::vector<std::size_t> rollout_policy(const ToyPolicy& policy, const Eigen::VectorXd& features,
                                        std::size_t count, Rng& rng);

// Draws one index from a probability vector by inverse CDF.
std::size_t sample_categorical(std::span<const double> probs, Rng& rng);

}  // namespace ttavid
