#include "ttavid/reward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ttavid {

AnswerPool::AnswerPool(std::size_t subsets, std::size_t rollouts_per_subset)
    : subsets_(subsets), rollouts_(rollouts_per_subset) {
  if (subsets == 0 || rollouts_per_subset == 0) {
    throw std::invalid_argument("answer pool needs K >= 1 and N >= 1");
  }
  entries_.reserve(subsets * rollouts_per_subset);
}

AnswerPool AnswerPool::from_grid(std::size_t subsets, std::size_t rollouts_per_subset,
                                 std::vector<ExtractedAnswer> answers) {
  if (answers.size() != subsets * rollouts_per_subset) {
    throw std::invalid_argument("answer grid size " + std::to_string(answers.size()) +
                                " != K*N = " + std::to_string(subsets * rollouts_per_subset));
  }
  AnswerPool pool(subsets, rollouts_per_subset);
  for (std::size_t i = 0; i < answers.size(); ++i) {
    pool.add(i / rollouts_per_subset, i % rollouts_per_subset, std::move(answers[i]));
  }
  return pool;
}

void AnswerPool::add(std::size_t subset, std::size_t rollout, ExtractedAnswer answer) {
  if (subset >= subsets_ || rollout >= rollouts_) {
    throw std::invalid_argument("pool entry (" + std::to_string(subset) + ", " +
                                std::to_string(rollout) + ") out of range");
  }
  entries_.push_back({subset, rollout, std::move(answer)});
}

void AnswerPool::validate() const {
  if (entries_.size() != subsets_ * rollouts_) {
    throw std::invalid_argument("answer pool has " + std::to_string(entries_.size()) +
                                " entries, expected K*N = " + std::to_string(subsets_ * rollouts_));
  }
  std::vector<bool> seen(subsets_ * rollouts_, false);
  for (const auto& e : entries_) {
    const std::size_t slot = e.subset * rollouts_ + e.rollout;
    if (seen[slot]) {
      throw std::invalid_argument("duplicate pool entry (" + std::to_string(e.subset) + ", " +
                                  std::to_string(e.rollout) + ")");
    }
    seen[slot] = true;
  }
}

Frequencies compute_frequencies(const AnswerPool& pool) {
  pool.validate();
  Frequencies out;
  std::size_t total = 0;
  for (const auto& e : pool.entries()) {
    if (!e.answer.valid) continue;
    ++out.counts[e.answer.value];
    ++total;
  }
  out.degenerate = total == 0;
  for (const auto& [answer, c] : out.counts) {
    out.freqs[answer] = static_cast<double>(c) / static_cast<double>(total);
  }
  return out;
}

double normalized_entropy(const AnswerFreqs& freqs) {
  if (freqs.size() <= 1) return 0.0;
  double h = 0.0;
  for (const auto& [answer, p] : freqs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  const double h_norm = h / std::log(static_cast<double>(freqs.size()));
  return std::clamp(h_norm, 0.0, 1.0);
}

std::optional<std::string> majority_answer(const AnswerCounts& counts) {
  std::optional<std::string> best;
  std::size_t best_count = 0;
  // std::map iterates in ascending key order, so strict '>' keeps the
  // smallest token on ties.
  for (const auto& [answer, c] : counts) {
    if (c > best_count) {
      best = answer;
      best_count = c;
    }
  }
  return best;
}

RewardReport compute_rewards(const AnswerPool& pool, const RewardParams& params) {
  if (!(params.alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  Frequencies f = compute_frequencies(pool);

  RewardReport report;
  report.degenerate = f.degenerate;
  report.entropy_norm = f.degenerate ? 0.0 : normalized_entropy(f.freqs);
  report.majority = majority_answer(f.counts);

  const double penalty = params.alpha * report.entropy_norm;
  report.per_rollout.reserve(pool.entries().size());
  std::vector<double> subset_sum(pool.subsets(), 0.0);
  for (const auto& e : pool.entries()) {
    const double r = e.answer.valid ? f.freqs.at(e.answer.value) - penalty : params.invalid_reward;
    report.per_rollout.push_back(r);
    subset_sum[e.subset] += r;
  }

  const double n = static_cast<double>(pool.rollouts_per_subset());
  report.per_subset.reserve(pool.subsets());
  double baseline = 0.0;
  for (double s : subset_sum) {
    report.per_subset.push_back(s / n);
    baseline += s / n;
  }
  report.baseline = baseline / static_cast<double>(pool.subsets());
  report.counts = std::move(f.counts);
  report.freqs = std::move(f.freqs);
  return report;
}

std::string self_consistency_answer(const AnswerPool& pool) {
  const Frequencies f = compute_frequencies(pool);
  auto m = majority_answer(f.counts);
  if (!m) throw std::domain_error("self-consistency: pool has no valid answer, no prediction");
  return *m;
}

}  // namespace ttavid
