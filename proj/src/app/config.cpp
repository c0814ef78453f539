#include "ttavid/app/config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>
#include <vector>

#include "ttavid/distribution.hpp"
#include "ttavid/errors.hpp"
#include "ttavid/json_text.hpp"

namespace ttavid::app {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void fail(std::string_view source, int line, std::string_view key, const std::string& msg) {
  std::ostringstream os;
  os << source << ":" << line << ": " << key << ": " << msg;
  throw ConfigError(os.str());
}

// Binds config keys to fields. Each binder parses text into its field and
// renders the field back for the effective config.
struct Field {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <typename T>
T parse_number(const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("expected a number, got '" + text + "'");
  return v;
}

Field size_field(std::size_t& f) {
  return {[&f](const std::string& s) { f = parse_number<std::size_t>(s); }, [&f] { return std::to_string(f); }};
}
Field u64_field(std::uint64_t& f) {
  return {[&f](const std::string& s) { f = parse_number<std::uint64_t>(s); }, [&f] { return std::to_string(f); }};
}
Field double_field(double& f) {
  return {[&f](const std::string& s) { f = parse_number<double>(s); }, [&f] { return json_text::format_double(f); }};
}
Field string_field(std::string& f) {
  return {[&f](const std::string& s) { f = s; }, [&f] { return f; }};
}
Field bool_field(bool& f) {
  return {[&f](const std::string& s) {
            if (s == "true" || s == "1") {
              f = true;
            } else if (s == "false" || s == "0") {
              f = false;
            } else {
              throw std::invalid_argument("expected true or false, got '" + s + "'");
            }
          },
          [&f] { return std::string(f ? "true" : "false"); }};
}

template <typename E>
Field enum_field(E& f, std::vector<std::pair<std::string, E>> names) {
  return {[&f, names](const std::string& s) {
            for (const auto& [n, v] : names) {
              if (n == s) {
                f = v;
                return;
              }
            }
            std::string allowed;
            for (const auto& [n, v] : names) allowed += (allowed.empty() ? "" : "|") + n;
            throw std::invalid_argument("expected one of " + allowed + ", got '" + s + "'");
          },
          [&f, names] {
            for (const auto& [n, v] : names) {
              if (v == f) return n;
            }
            return std::string();
          }};
}

// Ordered (section.key, field) table; order defines the rendered layout.
std::vector<std::pair<std::string, Field>> bind(RunConfig& c) {
  std::vector<std::pair<std::string, Field>> t;
  t.emplace_back("run.backend", string_field(c.backend));
  t.emplace_back("run.seed", u64_field(c.seed));
  t.emplace_back("run.out", string_field(c.out));

  auto& a = c.adapt;
  t.emplace_back("adapt.subsets", size_field(a.subsets));
  t.emplace_back("adapt.frames_per_subset", size_field(a.frames_per_subset));
  t.emplace_back("adapt.rollouts", size_field(a.rollouts));
  t.emplace_back("adapt.epochs", size_field(a.epochs));
  t.emplace_back("adapt.temperature", double_field(a.temperature));
  t.emplace_back("adapt.batch_size", size_field(a.batch_size));
  t.emplace_back("adapt.eta_fs", double_field(a.eta_fs));
  t.emplace_back("adapt.grouping", enum_field(a.grouping, {{"per-subset", Grouping::PerSubset},
                                                           {"whole-pool", Grouping::WholePool}}));
  t.emplace_back("adapt.cadence", enum_field(a.cadence, {{"per-epoch", PolicyCadence::PerEpoch},
                                                         {"per-question", PolicyCadence::PerQuestion}}));
  t.emplace_back("adapt.reward_mode", enum_field(a.reward_mode, {{"frequency", RewardMode::Frequency},
                                                                 {"ground-truth", RewardMode::GroundTruth}}));
  t.emplace_back("adapt.parallelism", size_field(a.parallelism));
  t.emplace_back("adapt.max_prompt_tokens", size_field(a.max_prompt_tokens));
  t.emplace_back("adapt.max_response_tokens", size_field(a.max_response_tokens));

  t.emplace_back("reward.alpha", double_field(a.reward.alpha));
  t.emplace_back("reward.invalid_reward", double_field(a.reward.invalid_reward));

  t.emplace_back("policy.enabled", bool_field(c.policy.enabled));
  t.emplace_back("policy.eta", double_field(a.train.eta));
  t.emplace_back("policy.kl_coeff", double_field(a.train.kl_coeff));
  t.emplace_back("policy.std_epsilon", double_field(a.train.std_epsilon));
  t.emplace_back("policy.evidence_weight", double_field(c.policy.evidence_weight));

  auto& s = c.sim;
  t.emplace_back("sim.num_frames", size_field(s.params.num_frames));
  t.emplace_back("sim.answer_count", size_field(s.params.answer_count));
  t.emplace_back("sim.informative_count", size_field(s.params.informative_count));
  t.emplace_back("sim.frames_for_full_signal", size_field(s.params.frames_for_full_signal));
  t.emplace_back("sim.p_base", double_field(s.params.p_base));
  t.emplace_back("sim.gain", double_field(s.params.gain));
  t.emplace_back("sim.heldout", size_field(s.heldout));
  t.emplace_back("sim.prior", string_field(s.prior));
  t.emplace_back("sim.window_start", size_field(s.window_start));
  t.emplace_back("sim.window_length", size_field(s.window_length));
  t.emplace_back("sim.window_mass", double_field(s.window_mass));
  t.emplace_back("sim.clip_signal", double_field(s.clip_signal));
  t.emplace_back("sim.clip_noise", double_field(s.clip_noise));
  t.emplace_back("sim.wrap_text", bool_field(s.wrap_text));
  t.emplace_back("sim.env_file", string_field(s.env_file));

  auto& i = c.infer;
  t.emplace_back("infer.frames", size_field(i.frames));
  t.emplace_back("infer.mode", enum_field(i.mode, {{"sample", SelectionMode::SampleWithoutReplacement},
                                                   {"topk", SelectionMode::TopK}}));
  t.emplace_back("infer.votes", size_field(i.votes));
  t.emplace_back("infer.interpolate", bool_field(i.interpolate));

  t.emplace_back("remote.data_root", string_field(c.remote.data_root));
  t.emplace_back("remote.eval_root", string_field(c.remote.eval_root));
  t.emplace_back("remote.labels", string_field(c.remote.labels));
  t.emplace_back("remote.backoff_ms", double_field(c.remote.backoff_ms));
  return t;
}

void check(const RunConfig& c, const IniMap& ini, std::string_view source) {
  auto line_of = [&](const std::string& key) {
    const auto it = ini.find(key);
    return it == ini.end() ? 0 : it->second.line;
  };
  auto require = [&](bool ok, const std::string& key, const std::string& msg) {
    if (!ok) fail(source, line_of(key), key, msg);
  };
  require(c.backend == "sim" || c.backend == "remote", "run.backend", "expected sim or remote");
  require(c.adapt.subsets >= 1, "adapt.subsets", "must be >= 1");
  require(c.adapt.frames_per_subset >= 1, "adapt.frames_per_subset", "must be >= 1");
  require(c.adapt.rollouts >= 1, "adapt.rollouts", "must be >= 1");
  require(c.adapt.epochs >= 1, "adapt.epochs", "must be >= 1");
  require(c.adapt.batch_size >= 1, "adapt.batch_size", "must be >= 1");
  require(c.adapt.temperature >= 0.0, "adapt.temperature", "must be >= 0");
  require(c.adapt.reward.alpha >= 0.0, "reward.alpha", "must be >= 0");
  require(c.adapt.train.eta > 0.0, "policy.eta", "must be > 0");
  require(c.adapt.train.kl_coeff >= 0.0, "policy.kl_coeff", "must be >= 0");
  require(c.sim.params.answer_count >= 2 && c.sim.params.answer_count <= 26, "sim.answer_count", "must be in [2, 26]");
  require(c.sim.params.informative_count <= c.sim.params.num_frames, "sim.informative_count", "exceeds sim.num_frames");
  require(c.adapt.frames_per_subset <= c.sim.params.num_frames || c.backend != "sim", "adapt.frames_per_subset",
          "exceeds sim.num_frames");
  require(c.sim.prior == "none" || c.sim.prior == "window", "sim.prior", "expected none or window");
  require(c.sim.prior != "window" || c.sim.window_start + c.sim.window_length <= c.sim.params.num_frames,
          "sim.window_length", "window extends past sim.num_frames");
  require(c.infer.votes >= 1, "infer.votes", "must be >= 1");
}

}  // namespace

void sync_derived(RunConfig& c) {
  c.adapt.train.epochs = static_cast<int>(c.adapt.epochs);
  c.adapt.seed = c.seed;
  c.infer.seed = c.seed;
  c.infer.temperature = c.adapt.temperature;
  c.infer.max_tokens = c.adapt.max_response_tokens;
  c.infer.parallelism = c.adapt.parallelism;
}

IniMap parse_ini(std::string_view text, std::string_view source) {
  IniMap out;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(source, line_no, line, "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) fail(source, line_no, line, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(source, line_no, line, "expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) fail(source, line_no, line, "missing key");
    if (section.empty()) fail(source, line_no, key, "key outside of any [section]");
    const std::string full = section + "." + key;
    if (out.count(full)) fail(source, line_no, full, "duplicate key (first set on line " + std::to_string(out[full].line) + ")");
    out[full] = {std::move(value), line_no};
  }
  return out;
}

RunConfig parse_config(std::string_view text, std::string_view source) {
  const IniMap ini = parse_ini(text, source);
  RunConfig c;
  auto table = bind(c);
  for (const auto& [key, entry] : ini) {
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& b) { return b.first == key; });
    if (it == table.end()) fail(source, entry.line, key, "unknown key");
    try {
      it->second.set(entry.value);
    } catch (const std::exception& e) {
      fail(source, entry.line, key, e.what());
    }
  }
  sync_derived(c);
  check(c, ini, source);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataFormatError&) {
    throw ConfigError("cannot read config file " + path);
  }
  return parse_config(text, path);
}

std::string render_config(const RunConfig& config) {
  RunConfig copy = config;
  auto table = bind(copy);
  std::string out;
  std::string section;
  for (const auto& [key, field] : table) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + field.get() + "\n";
  }
  return out;
}

}  // namespace ttavid::app
