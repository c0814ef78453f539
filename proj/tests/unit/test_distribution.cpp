#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support/oracles.hpp"
#include "ttavid/distribution.hpp"
#include "ttavid/errors.hpp"

using namespace ttavid;

namespace {

std::vector<double> random_probs(std::size_t t, Rng& rng) {
  std::vector<double> p(t);
  for (double& x : p) x = uniform01(rng) + 1e-3;
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& x : p) x /= s;
  return p;
}

}  // namespace

TEST_CASE("averaging") {
  const std::vector<std::vector<double>> same(3, {0.1, 0.2, 0.3, 0.4});
  const auto avg = average_distributions(std::span<const std::vector<double>>(same)).probs;
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(avg[i] - same[0][i]) < 1e-15);

  const std::vector<std::vector<double>> two{{1, 0}, {0, 1}};
  const auto p = average_distributions(std::span<const std::vector<double>>(two));
  CHECK(p.probs == std::vector<double>{0.5, 0.5});
  CHECK(p.source_count == 2);

  Rng rng(1);
  const std::vector<std::vector<double>> three{random_probs(4, rng), random_probs(4, rng), random_probs(4, rng)};
  const auto got = average_distributions(std::span<const std::vector<double>>(three)).probs;
  const auto want = oracle::elementwise_mean(three);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);

  const std::vector<std::vector<double>> mismatched{{0.5, 0.5}, {0.2, 0.3, 0.5}};
  CHECK_THROWS_AS(average_distributions(std::span<const std::vector<double>>(mismatched)), std::invalid_argument);
  CHECK_THROWS_AS(average_distributions(std::span<const std::vector<double>>()), std::invalid_argument);
}

TEST_CASE("property: averages are distributions and ignore input order") {
  Rng rng(2);
  for (int it = 0; it < 1000; ++it) {
    const std::size_t t = 1 + uniform_index(rng, 30), v = 1 + uniform_index(rng, 8);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < v; ++i) rows.push_back(random_probs(t, rng));
    const auto a = average_distributions(std::span<const std::vector<double>>(rows)).probs;
    std::reverse(rows.begin(), rows.end());
    const auto b = average_distributions(std::span<const std::vector<double>>(rows)).probs;
    REQUIRE(std::abs(std::accumulate(a.begin(), a.end(), 0.0) - 1.0) < 1e-12);
    for (std::size_t i = 0; i < t; ++i) {
      REQUIRE(a[i] >= 0.0);
      REQUIRE(std::abs(a[i] - b[i]) < 1e-15);
    }
  }
}

TEST_CASE("interpolation") {
  const std::vector<double> two{0.7, 0.3};
  const auto three = interpolate(two, 3);
  // Raw values 0.7, 0.5, 0.3, renormalized by 1.5.
  CHECK(three[0] == doctest::Approx(0.7 / 1.5).epsilon(1e-14));
  CHECK(three[1] == doctest::Approx(0.5 / 1.5).epsilon(1e-14));
  CHECK(three[2] == doctest::Approx(0.3 / 1.5).epsilon(1e-14));
  CHECK(std::abs(three[0] - 0.4667) < 1e-4);
  CHECK(std::abs(three[1] - 0.3333) < 1e-4);
  CHECK(std::abs(three[2] - 0.2) < 1e-4);

  CHECK_THROWS_AS(interpolate(std::vector<double>{1.0}, 4), std::invalid_argument);
  CHECK_THROWS_AS(interpolate(two, 0), std::invalid_argument);
  CHECK(interpolate(two, 1) == std::vector<double>{1.0});
}

TEST_CASE("property: interpolation is the identity on matching grids and keeps uniform uniform") {
  Rng rng(3);
  for (int it = 0; it < 1000; ++it) {
    const std::size_t t = 2 + uniform_index(rng, 60);
    const auto p = random_probs(t, rng);
    const auto same = interpolate(p, t);
    for (std::size_t i = 0; i < t; ++i) REQUIRE(std::abs(same[i] - p[i]) < 1e-12);
    const std::size_t dst = 1 + uniform_index(rng, 80);
    const auto u = interpolate(uniform_probs(t), dst);
    for (double x : u) REQUIRE(std::abs(x - 1.0 / static_cast<double>(dst)) < 1e-12);
    const auto q = interpolate(p, dst);
    REQUIRE(std::abs(std::accumulate(q.begin(), q.end(), 0.0) - 1.0) < 1e-12);
  }
}

TEST_CASE("blending") {
  const std::vector<double> clip{0.6, 0.3, 0.1}, learned{0.2, 0.2, 0.6};
  CHECK(blend(clip, learned, {1.0, 0.0}) == clip);
  CHECK(blend(clip, learned, {0.0, 1.0}) == learned);
  CHECK(blend(std::vector<double>{1, 0}, std::vector<double>{0, 1}, {0.5, 0.5}) == std::vector<double>{0.5, 0.5});
  CHECK_THROWS_AS(blend(clip, learned, {0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(blend(clip, std::vector<double>{0.5, 0.5}, {0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("property: blend stays between its inputs") {
  Rng rng(4);
  for (int it = 0; it < 1000; ++it) {
    const std::size_t t = 1 + uniform_index(rng, 40);
    const auto a = random_probs(t, rng), b = random_probs(t, rng);
    const double w = uniform01(rng);
    const auto c = blend(a, b, {w, 1.0 - w});
    for (std::size_t i = 0; i < t; ++i) {
      REQUIRE(c[i] >= std::min(a[i], b[i]) - 1e-15);
      REQUIRE(c[i] <= std::max(a[i], b[i]) + 1e-15);
    }
  }
}

TEST_CASE("inference frame selection") {
  Rng rng(5);
  const std::vector<double> p{0.1, 0.4, 0.4, 0.1};
  CHECK(select_inference_frames(p, 2, SelectionMode::TopK, rng) == FrameSubset{1, 2});
  CHECK(select_inference_frames(p, 4, SelectionMode::TopK, rng) == FrameSubset{0, 1, 2, 3});
  CHECK(select_inference_frames(p, 4, SelectionMode::SampleWithoutReplacement, rng) == FrameSubset{0, 1, 2, 3});
  CHECK(select_inference_frames(uniform_probs(10), 3, SelectionMode::TopK, rng) == FrameSubset{0, 1, 2});
  Rng a(9), b(9);
  CHECK(select_inference_frames(uniform_probs(40), 8, SelectionMode::SampleWithoutReplacement, a) ==
        select_inference_frames(uniform_probs(40), 8, SelectionMode::SampleWithoutReplacement, b));
  CHECK_THROWS_AS(select_inference_frames(p, 5, SelectionMode::TopK, rng), std::invalid_argument);
  CHECK(parse_selection_mode("topk") == SelectionMode::TopK);
  CHECK(to_string(parse_selection_mode("sample")) == "sample");
  CHECK_THROWS(parse_selection_mode("best"));
}

TEST_CASE("fdist-v1 round trip is bitwise") {
  Rng rng(6);
  for (int it = 0; it < 1000; ++it) {
    DistributionFile f;
    f.dist.probs = random_probs(1 + uniform_index(rng, 50), rng);
    f.dist.weights = f.dist.probs;
    for (double& w : f.dist.weights) w *= std::exp(20.0 * (uniform01(rng) - 0.5));
    f.dist.init_kind = it % 2 ? InitKind::ClipScores : InitKind::Uniform;
    f.dist.step_count = uniform_index(rng, 100);
    f.meta = {"vid-" + std::to_string(it), "q\"" + std::to_string(it), static_cast<std::int64_t>(rng() >> 33)};
    if (it % 3 == 0) f.source_count = 1 + uniform_index(rng, 10);
    const std::string text = serialize_fdist(f);
    const auto g = parse_fdist(text);
    REQUIRE(g.dist.probs == f.dist.probs);
    REQUIRE(g.dist.weights == f.dist.weights);
    REQUIRE(g.dist.init_kind == f.dist.init_kind);
    REQUIRE(g.dist.step_count == f.dist.step_count);
    REQUIRE(g.meta.video_id == f.meta.video_id);
    REQUIRE(g.meta.question_id == f.meta.question_id);
    REQUIRE(g.meta.created_unix == f.meta.created_unix);
    REQUIRE(g.source_count == f.source_count);
    REQUIRE(serialize_fdist(g) == text);
  }
}

TEST_CASE("fdist-v1 field layout") {
  DistributionFile f;
  f.dist = init_distribution(2);
  f.meta = {"v", "q", 0};
  CHECK(serialize_fdist(f) ==
        "{\"version\":\"fdist-v1\",\"num_frames\":2,\"init\":\"uniform\",\"weights\":[0.5,0.5],"
        "\"probs\":[0.5,0.5],\"step_count\":0,\"meta\":{\"video_id\":\"v\",\"question_id\":\"q\","
        "\"created_unix\":0}}\n");
  const auto g = global_prior_file({{0.25, 0.75}, 3}, {"", "", 0});
  const std::string text = serialize_fdist(g);
  CHECK(text.find("\"kind\":\"global\"") != std::string::npos);
  CHECK(text.find("\"source_count\":3") != std::string::npos);
  CHECK(to_global_prior(parse_fdist(text)).source_count == 3);
}

TEST_CASE("malformed fdist-v1 files") {
  try {
    parse_fdist("{\"version\": \"fdist-v1\", \"num_frames\": 2,, }");
    FAIL("expected a parse error");
  } catch (const DataFormatError& e) {
    // Offset of the second comma, counted from 1.
    CHECK(std::string(e.what()).find("byte 41") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_fdist("[]"), DataFormatError);
  CHECK_THROWS_AS(parse_fdist("{\"version\":\"fdist-v2\"}"), DataFormatError);
  CHECK_THROWS_AS(parse_fdist("{\"version\":\"fdist-v1\",\"num_frames\":2,\"init\":\"uniform\","
                              "\"weights\":[1],\"probs\":[1],\"step_count\":0}"),
                  DataFormatError);
  CHECK_THROWS_AS(parse_fdist("{\"version\":\"fdist-v1\",\"num_frames\":2,\"init\":\"uniform\","
                              "\"weights\":[1,1],\"probs\":[0.9,0.9],\"step_count\":0}"),
                  DataFormatError);
  CHECK_THROWS_AS(parse_fdist("{\"version\":\"fdist-v1\",\"num_frames\":2,\"init\":\"best\","
                              "\"weights\":[1,1],\"probs\":[0.5,0.5],\"step_count\":0}"),
                  DataFormatError);
  CHECK_THROWS_AS(parse_fdist("{\"version\":\"fdist-v1\",\"num_frames\":\"2\",\"init\":\"uniform\","
                              "\"weights\":[1,1],\"probs\":[0.5,0.5],\"step_count\":0}"),
                  DataFormatError);
}

TEST_CASE("file helpers") {
  oracle::TempDir dir("dist");
  DistributionFile f;
  f.dist = init_distribution(3);
  write_fdist(dir.path() / "nested" / "a.fdist.json", f);
  CHECK(read_fdist(dir.path() / "nested" / "a.fdist.json").dist.probs == f.dist.probs);
  CHECK_THROWS_AS(read_fdist(dir.path() / "missing.json"), DataFormatError);
}
