#include <atomic>
#include <cmath>
#include <mutex>

#include "doctest.h"
#include "support/oracles.hpp"
#include "ttavid/errors.hpp"
#include "ttavid/orchestrator.hpp"

using namespace ttavid;

namespace {

class ConstantBackend : public Backend {
 public:
  explicit ConstantBackend(std::string text) : text_(std::move(text)) {}
  Generation generate(const GenerationRequest&) override {
    ++calls;
    return {text_, 1.5};
  }
  std::atomic<int> calls{0};

 private:
  std::string text_;
};

// Fails every call whose stream seed is odd; otherwise answers "A".
class FlakyBackend : public Backend {
 public:
  Generation generate(const GenerationRequest& r) override {
    if (r.stream % 2 == 1) throw BackendError("upstream 503");
    return {"Answer: A", 0.0};
  }
};

class BrokenBackend : public Backend {
 public:
  Generation generate(const GenerationRequest&) override { throw BackendError("connection refused"); }
};

// Records the frame lists it was shown.
class RecordingBackend : public Backend {
 public:
  Generation generate(const GenerationRequest& r) override {
    std::lock_guard lock(mutex);
    seen.emplace_back(r.frames.begin(), r.frames.end());
    return {"Answer: B", 0.0};
  }
  std::mutex mutex;
  std::vector<FrameSubset> seen;
};

sim::SimEnvironment point_env() {
  std::vector<double> point(40, 0.0);
  for (int i = 0; i < 4; ++i) point[i] = 0.25;
  return sim::generate_env(sim::SimParams{}, point, 0);
}

std::vector<VideoSample> sim_batch(std::size_t count, std::uint64_t seed, sim::SimParams params = {}) {
  std::vector<VideoSample> out;
  const auto envs = sim::generate_batch(params, count, std::nullopt, seed).environments;
  for (std::size_t i = 0; i < envs.size(); ++i) out.push_back(make_sim_sample(envs[i], i));
  return out;
}

AdaptationConfig small_config() {
  AdaptationConfig c;
  c.epochs = 5;
  c.batch_size = 1;
  return c;
}

}  // namespace

TEST_CASE("one question, defaults: 160 records and 5 bandit updates") {
  const std::vector<VideoSample> batch{make_sim_sample(point_env(), 0)};
  SimOracleBackend backend;
  std::vector<std::size_t> epochs_seen;
  const auto r = adapt_batch(batch, small_config(), &backend, nullptr,
                             [&](const EpochCheckpoint& c) { epochs_seen.push_back(c.epoch); });
  CHECK(r.records.size() == 5 * 4 * 8);
  CHECK(r.distributions.front().step_count == 5);
  CHECK(r.epochs.size() == 5);
  CHECK(epochs_seen == std::vector<std::size_t>{1, 2, 3, 4, 5});
  CHECK_FALSE(r.policy.has_value());
  for (const auto& rec : r.records) {
    CHECK(rec.subset.size() == 4);
    CHECK(rec.reward.has_value());
    CHECK(rec.error.empty());
  }
}

TEST_CASE("point-mass prior, seed 0: informative mass grows") {
  const std::vector<VideoSample> batch{make_sim_sample(point_env(), 0)};
  SimOracleBackend backend;
  const auto r = adapt_batch(batch, small_config(), &backend, nullptr);
  double previous = 4.0 / 40.0;
  const double initial = previous;
  for (const auto& e : r.epochs) {
    REQUIRE(e.informative_mass.has_value());
    previous = *e.informative_mass;
  }
  CHECK(previous > initial);
  CHECK(informative_mass(r.distributions.front(), *batch.front().env) == previous);
}

TEST_CASE("a backend that always gives the same answer leaves the distribution alone") {
  const auto batch = sim_batch(2, 4);
  ConstantBackend backend("Answer: C");
  const auto r = adapt_batch(batch, small_config(), &backend, nullptr);
  CHECK(backend.calls == 2 * 5 * 32);
  for (const auto& d : r.distributions) {
    for (double p : d.probs) CHECK(p == doctest::Approx(1.0 / 40.0).epsilon(1e-14));
  }
  for (const auto& e : r.epochs) {
    CHECK(e.mean_reward == 1.0);
    CHECK(e.majority_frequency == 1.0);
  }
}

TEST_CASE("backend failures become invalid rollouts") {
  const auto batch = sim_batch(1, 5);
  FlakyBackend flaky;
  const auto r = adapt_batch(batch, small_config(), &flaky, nullptr);
  std::size_t failed = 0;
  for (const auto& rec : r.records) {
    if (rec.error.empty()) {
      CHECK(rec.answer.valid);
      continue;
    }
    ++failed;
    CHECK_FALSE(rec.answer.valid);
    CHECK(rec.reward == -1.0);
    CHECK(rec.error == "upstream 503");
  }
  CHECK(failed > 0);
  std::size_t summed = 0;
  for (const auto& e : r.epochs) summed += e.failures;
  CHECK(summed == failed);

  // Nothing succeeds: the epoch callback still runs, then the loop aborts.
  BrokenBackend broken;
  std::size_t logged = 0;
  CHECK_THROWS_AS(adapt_batch(batch, small_config(), &broken, nullptr,
                              [&](const EpochCheckpoint& c) { logged += c.records.size(); }),
                  BackendError);
  CHECK(logged == 32);
}

TEST_CASE("questions without a valid answer are skipped") {
  auto batch = sim_batch(2, 6);
  ConstantBackend mute("I cannot tell.");
  AdaptationConfig c = small_config();
  c.epochs = 2;
  const auto r = adapt_batch(batch, c, &mute, nullptr);
  for (const auto& d : r.distributions) CHECK(d.step_count == 0);
  CHECK(r.epochs[0].skipped == 2);
  CHECK(r.epochs[1].skipped == 2);
}

TEST_CASE("uniform prior with top-k picks the first frames") {
  const auto batch = sim_batch(1, 7);
  RecordingBackend backend;
  InferenceConfig ic;
  ic.frames = 8;
  ic.mode = SelectionMode::TopK;
  const auto preds = adapted_inference(batch, GlobalPrior{uniform_probs(40), 1}, ic, backend);
  CHECK(preds.front().frames == FrameSubset{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(preds.front().answer == "B");
  REQUIRE(backend.seen.size() == 1);
  CHECK(backend.seen.front() == preds.front().frames);
}

TEST_CASE("inference: grids, voting and interpolation") {
  const auto batch = sim_batch(3, 8);
  SimOracleBackend backend;
  InferenceConfig ic;
  ic.frames = 4;
  CHECK_THROWS_AS(adapted_inference(batch, GlobalPrior{uniform_probs(20), 1}, ic, backend), ConfigError);
  ic.interpolate = true;
  CHECK(adapted_inference(batch, GlobalPrior{uniform_probs(20), 1}, ic, backend).size() == 3);

  // Self-consistency: a sure oracle answers the truth on every vote.
  sim::SimParams sure;
  sure.p_base = 0.0;
  sure.gain = 1.0;
  sure.informative_count = 40;
  const auto easy = sim_batch(4, 9, sure);
  ic.votes = 5;
  ic.frames = 40;
  ic.interpolate = false;
  const auto preds = adapted_inference(easy, GlobalPrior{uniform_probs(40), 1}, ic, backend);
  for (std::size_t i = 0; i < easy.size(); ++i) CHECK(preds[i].answer == easy[i].ground_truth);

  ic.votes = 0;
  CHECK_THROWS_AS(adapted_inference(easy, GlobalPrior{uniform_probs(40), 1}, ic, backend), std::invalid_argument);
}

TEST_CASE("rolloutlog-v1 records round trip") {
  RolloutRecord r;
  r.video_id = "vid\"1";
  r.question_id = "q\n2";
  r.epoch = 3;
  r.subset_index = 2;
  r.rollout_index = 7;
  r.subset = {1, 5, 9};
  r.text = "Thinking...\nAnswer: \\boxed{C}";
  r.answer = ExtractedAnswer::of("C");
  r.reward = 0.1415409814436343;
  r.latency_ms = 12.25;
  const std::string line = serialize_record(r);
  CHECK(line.find('\n') == std::string::npos);
  const auto back = parse_record(line);
  CHECK(back.video_id == r.video_id);
  CHECK(back.question_id == r.question_id);
  CHECK(back.subset == r.subset);
  CHECK(back.text == r.text);
  CHECK(back.answer == r.answer);
  CHECK(back.reward == r.reward);
  CHECK(serialize_record(back) == line);

  r.reward.reset();
  r.answer = ExtractedAnswer::invalid();
  r.error = "timeout";
  CHECK(serialize_record(parse_record(serialize_record(r))) == serialize_record(r));
  CHECK_THROWS_AS(parse_record("{\"version\":\"rolloutlog-v1\"}"), DataFormatError);
  CHECK_THROWS_AS(parse_record("not json"), DataFormatError);
}

TEST_CASE("adaptation is deterministic and independent of thread count") {
  const auto batch = sim_batch(3, 10);
  SimOracleBackend backend;
  AdaptationConfig c = small_config();
  c.parallelism = 1;
  const auto a = adapt_batch(batch, c, &backend, nullptr);
  c.parallelism = 8;
  const auto b = adapt_batch(batch, c, &backend, nullptr);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(serialize_record(a.records[i]) == serialize_record(b.records[i]));
  for (std::size_t i = 0; i < batch.size(); ++i) CHECK(a.distributions[i].probs == b.distributions[i].probs);
}

TEST_CASE("property: permuting the batch barely moves the trained policy") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto batch = sim_batch(4, 20 + seed, sim::SimParams{40, 4, 4, 2, -1, -1});
    AdaptationConfig c = small_config();
    c.epochs = 3;
    c.seed = seed;
    const auto policy = sim::pretrained_policy(4, 1.0, 1.0);
    const auto a = adapt_batch(batch, c, nullptr, &policy);
    std::reverse(batch.begin(), batch.end());
    const auto b = adapt_batch(batch, c, nullptr, &policy);
    REQUIRE(a.policy.has_value());
    const double diff = (a.policy->theta - b.policy->theta).cwiseAbs().maxCoeff();
    CHECK(diff <= 1e-9);
    CHECK((a.policy->theta - policy.theta).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("input validation") {
  SimOracleBackend backend;
  auto batch = sim_batch(2, 11);
  AdaptationConfig c = small_config();
  c.frames_per_subset = 41;
  CHECK_THROWS_AS(adapt_batch(batch, c, &backend, nullptr), std::invalid_argument);
  c = small_config();
  c.subsets = 0;
  CHECK_THROWS_AS(adapt_batch(batch, c, &backend, nullptr), std::invalid_argument);
  c = small_config();
  CHECK_THROWS_AS(adapt_batch(std::span<const VideoSample>(), c, &backend, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(adapt_batch(batch, c, nullptr, nullptr), std::invalid_argument);
  batch[1].num_frames = 20;
  batch[1].env.reset();
  CHECK_THROWS_AS(adapt_batch(batch, c, &backend, nullptr), std::invalid_argument);
  CHECK(stable_hash("") == 0xcbf29ce484222325ULL);
  CHECK(stable_hash("a") == 0xaf63dc4c8601ec8cULL);
}
