#include "ttavid/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ttavid/errors.hpp"
#include "ttavid/json_text.hpp"

namespace ttavid {
namespace {

std::vector<double> normalized(std::vector<double> v) {
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("distribution has no positive mass");
  for (double& x : v) x /= total;
  return v;
}

void check_distribution(std::span<const double> p, const char* what) {
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw std::invalid_argument(std::string(what) + ": entries must be finite and nonnegative");
    }
  }
}

}  // namespace

std::vector<double> uniform_probs(std::size_t num_frames) {
  if (num_frames == 0) throw std::invalid_argument("frame grid must have T >= 1");
  return std::vector<double>(num_frames, 1.0 / static_cast<double>(num_frames));
}

GlobalPrior average_distributions(std::span<const std::vector<double>> probs) {
  if (probs.empty()) throw std::invalid_argument("cannot average an empty list of distributions");
  const std::size_t t = probs.front().size();
  for (const auto& p : probs) {
    if (p.size() != t) {
      throw std::invalid_argument("cannot average distributions over grids of " + std::to_string(t) +
                                  " and " + std::to_string(p.size()) + " frames; interpolate first");
    }
  }
  GlobalPrior prior;
  prior.source_count = probs.size();
  prior.probs.assign(t, 0.0);
  for (std::size_t i = 0; i < t; ++i) {
    double s = 0.0;
    for (const auto& p : probs) s += p[i];
    prior.probs[i] = s / static_cast<double>(probs.size());
  }
  return prior;
}

GlobalPrior average_distributions(std::span<const FrameDistribution> dists) {
  std::vector<std::vector<double>> probs;
  probs.reserve(dists.size());
  for (const auto& d : dists) probs.push_back(d.probs);
  return average_distributions(std::span<const std::vector<double>>(probs));
}

std::vector<double> interpolate(std::span<const double> probs, std::size_t target_frames) {
  const std::size_t src = probs.size();
  if (src < 2) throw std::invalid_argument("interpolation needs a source grid of T >= 2");
  if (target_frames == 0) throw std::invalid_argument("interpolation target grid must have T >= 1");
  check_distribution(probs, "interpolate");
  if (target_frames == src) return normalized(std::vector<double>(probs.begin(), probs.end()));

  std::vector<double> out(target_frames);
  for (std::size_t j = 0; j < target_frames; ++j) {
    const double pos = target_frames == 1
                           ? 0.5
                           : static_cast<double>(j) / static_cast<double>(target_frames - 1);
    const double x = pos * static_cast<double>(src - 1);
    const std::size_t lo = std::min(static_cast<std::size_t>(std::floor(x)), src - 2);
    const double frac = x - static_cast<double>(lo);
    out[j] = probs[lo] * (1.0 - frac) + probs[lo + 1] * frac;
  }
  return normalized(std::move(out));
}

std::vector<double> blend(std::span<const double> clip_probs, std::span<const double> learned_probs,
                          const BlendSpec& spec) {
  if (clip_probs.size() != learned_probs.size()) {
    throw std::invalid_argument("blend: clip distribution has " + std::to_string(clip_probs.size()) +
                                " frames, learned has " + std::to_string(learned_probs.size()));
  }
  if (spec.w_clip < 0.0 || spec.w_dist < 0.0 || std::abs(spec.w_clip + spec.w_dist - 1.0) > 1e-12) {
    throw std::invalid_argument("blend weights must be nonnegative and sum to 1");
  }
  check_distribution(clip_probs, "blend");
  check_distribution(learned_probs, "blend");
  // Endpoints pass their input through untouched.
  if (spec.w_dist == 0.0) return std::vector<double>(clip_probs.begin(), clip_probs.end());
  if (spec.w_clip == 0.0) return std::vector<double>(learned_probs.begin(), learned_probs.end());
  std::vector<double> out(clip_probs.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = spec.w_clip * clip_probs[i] + spec.w_dist * learned_probs[i];
  }
  return normalized(std::move(out));
}

FrameSubset select_inference_frames(std::span<const double> probs, std::size_t count, SelectionMode mode,
                                    Rng& rng) {
  if (count > probs.size()) {
    throw std::invalid_argument("cannot select " + std::to_string(count) + " frames from T = " +
                                std::to_string(probs.size()));
  }
  if (mode == SelectionMode::SampleWithoutReplacement) return sample_without_replacement(probs, count, rng);

  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  FrameSubset out(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.begin(), out.end());
  return out;
}

// --- fdist-v1 -------------------------------------------------------------

std::string serialize_fdist(const DistributionFile& file) {
  json_text::ObjectWriter meta;
  meta.field("video_id", file.meta.video_id)
      .field("question_id", file.meta.question_id)
      .field("created_unix", file.meta.created_unix);

  json_text::ObjectWriter w;
  w.field("version", "fdist-v1");
  if (file.source_count) w.field("kind", "global");
  w.field("num_frames", file.dist.num_frames())
      .field("init", file.dist.init_kind == InitKind::Uniform ? "uniform" : "clip")
      .field("weights", std::span<const double>(file.dist.weights))
      .field("probs", std::span<const double>(file.dist.probs))
      .field("step_count", file.dist.step_count);
  if (file.source_count) w.field("source_count", *file.source_count);
  w.raw("meta", meta.str());
  return w.str() + "\n";
}

namespace {

template <typename T>
T required(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw DataFormatError(std::string("fdist-v1: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError(std::string("fdist-v1: field '") + key + "' has the wrong type: " + e.what());
  }
}

}  // namespace

DistributionFile parse_fdist(std::string_view text) {
  const nlohmann::json j = json_text::parse(text, "fdist-v1");
  if (!j.is_object()) throw DataFormatError("fdist-v1: top level must be an object");
  if (required<std::string>(j, "version") != "fdist-v1") {
    throw DataFormatError("fdist-v1: unsupported version '" + j.at("version").get<std::string>() + "'");
  }
  DistributionFile file;
  const auto n = required<std::size_t>(j, "num_frames");
  const auto init = required<std::string>(j, "init");
  if (init != "uniform" && init != "clip") throw DataFormatError("fdist-v1: init must be uniform or clip");
  file.dist.init_kind = init == "uniform" ? InitKind::Uniform : InitKind::ClipScores;
  file.dist.weights = required<std::vector<double>>(j, "weights");
  file.dist.probs = required<std::vector<double>>(j, "probs");
  file.dist.step_count = required<std::size_t>(j, "step_count");
  if (file.dist.weights.size() != n || file.dist.probs.size() != n) {
    throw DataFormatError("fdist-v1: weights/probs length does not match num_frames = " + std::to_string(n));
  }
  double total = 0.0;
  for (double p : file.dist.probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw DataFormatError("fdist-v1: probs must be finite and nonnegative");
    total += p;
  }
  if (n == 0 || std::abs(total - 1.0) > 1e-9) throw DataFormatError("fdist-v1: probs do not sum to 1");
  const auto meta = j.contains("meta") ? j.at("meta") : nlohmann::json::object();
  if (!meta.is_object()) throw DataFormatError("fdist-v1: meta must be an object");
  file.meta.video_id = meta.value("video_id", "");
  file.meta.question_id = meta.value("question_id", "");
  file.meta.created_unix = meta.value("created_unix", std::int64_t{0});
  if (j.contains("kind")) {
    if (j.at("kind") != "global") throw DataFormatError("fdist-v1: unknown kind");
    file.source_count = required<std::size_t>(j, "source_count");
  }
  return file;
}

DistributionFile global_prior_file(const GlobalPrior& prior, DistributionMeta meta) {
  DistributionFile file;
  file.dist.weights = prior.probs;
  file.dist.probs = prior.probs;
  file.dist.init_kind = InitKind::Uniform;
  file.meta = std::move(meta);
  file.source_count = prior.source_count;
  return file;
}

GlobalPrior to_global_prior(const DistributionFile& file) {
  return {file.dist.probs, file.source_count.value_or(1)};
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

DistributionFile read_fdist(const std::filesystem::path& path) {
  try {
    return parse_fdist(read_text_file(path));
  } catch (const DataFormatError& e) {
    throw DataFormatError(path.string() + ": " + e.what());
  }
}

void write_fdist(const std::filesystem::path& path, const DistributionFile& file) {
  write_text_file(path, serialize_fdist(file));
}

SelectionMode parse_selection_mode(std::string_view text) {
  if (text == "sample") return SelectionMode::SampleWithoutReplacement;
  if (text == "topk") return SelectionMode::TopK;
  throw std::invalid_argument("unknown frame selection mode '" + std::string(text) + "' (sample|topk)");
}

std::string to_string(SelectionMode mode) {
  return mode == SelectionMode::TopK ? "topk" : "sample";
}

}  // namespace ttavid
