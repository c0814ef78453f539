#pragma once

// Frequency reward with entropy penalty over the K x N rollout pool of one
// question. Every rollout's reward is the pool frequency of its answer minus
// alpha times the normalized entropy of the pool's answer distribution.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ttavid/answer.hpp"

namespace ttavid {

struct RewardParams {
  double alpha = 0.75;           // entropy-penalty strength, >= 0
  double invalid_reward = -1.0;  // reward for rollouts whose answer is INVALID
};

struct PoolEntry {
  std::size_t subset = 0;   // k in [0, K)
  std::size_t rollout = 0;  // n in [0, N)
  ExtractedAnswer answer;
};

class AnswerPool {
 public:
  AnswerPool(std::size_t subsets, std::size_t rollouts_per_subset);

  // Builds a pool from answers laid out subset-major: answers[k * N + n].
  static AnswerPool from_grid(std::size_t subsets, std::size_t rollouts_per_subset,
                              std::vector<ExtractedAnswer> answers);

  void add(std::size_t subset, std::size_t rollout, ExtractedAnswer answer);

  // Throws std::invalid_argument unless every (k, n) appears exactly once.
  void validate() const;

  std::size_t subsets() const { return subsets_; }
  std::size_t rollouts_per_subset() const { return rollouts_; }
  const std::vector<PoolEntry>& entries() const { return entries_; }

 private:
  std::size_t subsets_;
  std::size_t rollouts_;
  std::vector<PoolEntry> entries_;
};

using AnswerCounts = std::map<std::string, std::size_t>;
using AnswerFreqs = std::map<std::string, double>;

struct Frequencies {
  AnswerCounts counts;
  AnswerFreqs freqs;
  bool degenerate = false;  // no valid answer in the pool
};

struct RewardReport {
  AnswerCounts counts;
  AnswerFreqs freqs;
  double entropy_norm = 0.0;
  std::vector<double> per_rollout;  // aligned with AnswerPool::entries()
  std::vector<double> per_subset;   // mean reward of each subset k
  double baseline = 0.0;            // mean of per_subset
  std::optional<std::string> majority;
  bool degenerate = false;          // pool had no valid answer; skip updates
};

// Counts and empirical frequencies over valid answers; INVALID entries are
// excluded from both.
Frequencies compute_frequencies(const AnswerPool& pool);

// Shannon entropy (natural log) divided by log |A|. Zero when |A| = 1.
double normalized_entropy(const AnswerFreqs& freqs);

RewardReport compute_rewards(const AnswerPool& pool, const RewardParams& params);

// Modal answer; ties go to the lexicographically smallest token.
// Throws std::domain_error when the pool has no valid answer.
std::string self_consistency_answer(const AnswerPool& pool);

// Modal answer of a count map with the same tie-break. Empty map -> nullopt.
std::optional<std::string> majority_answer(const AnswerCounts& counts);

}  // namespace ttavid
