#pragma once
// Reference computations for the tests. These deliberately avoid the library's
// own data structures so a shared bug cannot hide in both.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

inline constexpr const char* kInvalid = "INVALID";

struct PoolResult {
  std::vector<double> per_rollout;  // subset-major, same order as the input
  std::vector<double> per_subset;
  double baseline = 0.0;
  double entropy_norm = 0.0;
};

// Frequency reward straight from the definition: p(a) over valid answers,
// entropy in nats over the distinct valid answers, divided by log of their
// count; invalid answers score `invalid_reward`.
inline PoolResult pool_rewards(const std::vector<std::string>& answers, std::size_t subsets, double alpha,
                               double invalid_reward = -1.0) {
  PoolResult out;
  std::vector<std::string> distinct;
  std::vector<double> count;
  double valid = 0.0;
  for (const auto& a : answers) {
    if (a == kInvalid) continue;
    valid += 1.0;
    auto it = std::find(distinct.begin(), distinct.end(), a);
    if (it == distinct.end()) {
      distinct.push_back(a);
      count.push_back(1.0);
    } else {
      count[static_cast<std::size_t>(it - distinct.begin())] += 1.0;
    }
  }
  double h = 0.0;
  for (double c : count) h -= (c / valid) * std::log(c / valid);
  out.entropy_norm = distinct.size() > 1 ? h / std::log(static_cast<double>(distinct.size())) : 0.0;
  for (const auto& a : answers) {
    if (a == kInvalid) {
      out.per_rollout.push_back(invalid_reward);
      continue;
    }
    const auto idx = static_cast<std::size_t>(std::find(distinct.begin(), distinct.end(), a) - distinct.begin());
    out.per_rollout.push_back(count[idx] / valid - alpha * out.entropy_norm);
  }
  const std::size_t n = answers.size() / subsets;
  for (std::size_t k = 0; k < subsets; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += out.per_rollout[k * n + i];
    out.per_subset.push_back(s / static_cast<double>(n));
  }
  for (double r : out.per_subset) out.baseline += r;
  out.baseline /= static_cast<double>(subsets);
  return out;
}

// One bandit round computed directly on probabilities:
// p'_t proportional to p_t * exp(eta * sum_k (r_k - mean r) [t in S_k]).
inline std::vector<double> bandit_step(const std::vector<double>& p, const std::vector<std::vector<std::size_t>>& subsets,
                                       const std::vector<double>& rewards, double eta) {
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  std::vector<double> out(p.size());
  double z = 0.0;
  for (std::size_t t = 0; t < p.size(); ++t) {
    double e = 0.0;
    for (std::size_t k = 0; k < subsets.size(); ++k) {
      if (std::count(subsets[k].begin(), subsets[k].end(), t)) e += rewards[k] - mean;
    }
    out[t] = p[t] * std::exp(eta * e);
    z += out[t];
  }
  for (double& v : out) v /= z;
  return out;
}

inline std::vector<double> elementwise_mean(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out(rows.front().size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    long double s = 0.0L;
    for (const auto& r : rows) s += r[i];
    out[i] = static_cast<double>(s / static_cast<long double>(rows.size()));
  }
  return out;
}

// Softmax log-likelihood objective for theta given as a flat row-major
// vector (rows = features, cols = answers).
inline double surrogate(const std::vector<double>& theta, std::size_t rows, std::size_t cols,
                        const std::vector<std::vector<double>>& features, const std::vector<std::size_t>& answers,
                        const std::vector<double>& advantages, double temperature) {
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    std::vector<double> z(cols, 0.0);
    for (std::size_t j = 0; j < cols; ++j) {
      for (std::size_t r = 0; r < rows; ++r) z[j] += theta[r * cols + j] * features[i][r];
      z[j] /= temperature;
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    total += advantages[i] * (z[answers[i]] - mx - std::log(s));
  }
  return total / static_cast<double>(features.size());
}

// Central finite difference of f at x along every coordinate.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Upper 1% points of the chi-square distribution, indexed by degrees of
// freedom (standard table values).
inline double chi_square_critical_99(std::size_t dof) {
  static const double table[] = {0.0,    6.635,  9.210,  11.345, 13.277, 15.086, 16.812,
                                 18.475, 20.090, 21.666, 23.209, 24.725, 26.217};
  return table[dof];
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("ttavid-" + tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace oracle
