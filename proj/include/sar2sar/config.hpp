#pragma once

// Run configuration: a plain-text file of `key = value` lines. Blank lines
// and lines starting with '#' are ignored. Every key must appear in the
// schema below; unknown or repeated keys are errors. Values are checked
// against their declared kind when the file is loaded, so a command never
// starts with a malformed setting.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sar2sar/binary_io.hpp"
#include "sar2sar/error.hpp"
#include "sar2sar/evaluation.hpp"
#include "sar2sar/network.hpp"
#include "sar2sar/training.hpp"

namespace sar2sar {

enum class ValueKind { integer, real, boolean, text, path, int_list, milestones, regions };

struct ConfigKey {
  std::string_view name;
  ValueKind kind;
  std::string_view fallback; // empty: unset unless given
  std::string_view help;
};

// clang-format off
inline const std::vector<ConfigKey> &config_schema() {
  static const std::vector<ConfigKey> keys{
      {"seed", ValueKind::integer, "1", "root seed for every random stream"},
      {"out", ValueKind::path, "", "output directory (overridden by --out)"},
      {"looks", ValueKind::real, "1", "number of looks L of the speckle"},

      {"network.depth", ValueKind::integer, "2", "U-Net levels"},
      {"network.channels", ValueKind::int_list, "16,32", "channels per level"},
      {"network.kernel_size", ValueKind::integer, "3", "convolution kernel size (odd)"},
      {"network.leaky_slope", ValueKind::real, "0.1", "leaky ReLU slope"},

      {"simulate.train_scenes", ValueKind::integer, "8", "scenes in the training split"},
      {"simulate.test_scenes", ValueKind::integer, "2", "scenes in the held-out split"},
      {"simulate.width", ValueKind::integer, "256", "scene width"},
      {"simulate.height", ValueKind::integer, "256", "scene height"},
      {"simulate.log_mean", ValueKind::real, "4", "mean log-reflectivity"},
      {"simulate.texture", ValueKind::real, "0.5", "texture strength (log units)"},
      {"simulate.dates", ValueKind::integer, "4", "dates per time series (0: no series)"},
      {"simulate.change_fraction", ValueKind::real, "0.1", "changed area per date"},
      {"simulate.change_min_factor", ValueKind::real, "2", "smallest reflectivity change factor"},
      {"simulate.change_max_factor", ValueKind::real, "8", "largest reflectivity change factor"},
      {"simulate.correlation_sigma", ValueKind::real, "0", "Gaussian speckle correlation width (0: white)"},

      {"train.phase", ValueKind::text, "A", "A, B or C"},
      {"train.data", ValueKind::path, "", "split directory written by simulate"},
      {"train.init", ValueKind::path, "", "checkpoint of the previous phase (B, C)"},
      {"train.resume", ValueKind::path, "", "checkpoint of this phase to continue from"},
      {"train.epochs", ValueKind::integer, "", "epochs (default 10 for A, 20 for B)"},
      {"train.batch_size", ValueKind::integer, "4", "patches per step"},
      {"train.patch_size", ValueKind::integer, "64", "patch edge in pixels"},
      {"train.stride", ValueKind::integer, "32", "patch grid stride"},
      {"train.loss", ValueKind::text, "likelihood", "likelihood or l2"},
      {"train.lr", ValueKind::real, "", "base learning rate (default 1e-3 for A, 1e-5 for B, C)"},
      {"train.lr_milestones", ValueKind::milestones, "", "epoch:factor list (default 5:0.1,10:0.01 for A)"},
      {"train.compensation", ValueKind::boolean, "true", "compensate changes between paired dates"},
      {"train.subsample_factor", ValueKind::integer, "2", "pre-estimate subsampling (phase B)"},
      {"train.refinement_iterations", ValueKind::integer, "1", "compensation refreshes (phase C)"},
      {"train.epochs_per_iteration", ValueKind::integer, "10", "epochs per refinement iteration"},
      {"train.pairs", ValueKind::text, "random", "random or closest_date"},
      {"train.pairs_per_location", ValueKind::integer, "1", "date pairs per patch location and epoch"},

      {"despeckle.checkpoint", ValueKind::path, "", "network checkpoint"},
      {"despeckle.input", ValueKind::path, "", "intensity image file or directory"},
      {"despeckle.tile", ValueKind::integer, "256", "inference tile edge"},
      {"despeckle.ramp", ValueKind::integer, "8", "tile blending ramp width"},
      {"despeckle.preview", ValueKind::boolean, "false", "also write 8-bit PGM previews"},

      {"evaluate.reference", ValueKind::path, "", "reflectivity image file or directory"},
      {"evaluate.estimate", ValueKind::path, "", "restored images matched by file name"},
      {"evaluate.noisy", ValueKind::path, "", "observed intensity images matched by file name"},
      {"evaluate.checkpoint", ValueKind::path, "", "network used to produce estimates"},
      {"evaluate.metrics", ValueKind::text, "psnr", "comma list of psnr, enl, wasserstein"},
      {"evaluate.instances", ValueKind::integer, "20", "noisy instances for the PSNR protocol"},
      {"evaluate.regions", ValueKind::regions, "", "ENL rectangles x,y,w,h separated by ';'"},
      {"evaluate.peak", ValueKind::real, "0", "PSNR peak (0: max reference amplitude)"},

      {"efficiency.looks", ValueKind::real, "1", "looks of the simulated samples"},
      {"efficiency.trials", ValueKind::integer, "10000", "Monte Carlo trials per N"},
      {"efficiency.sample_counts", ValueKind::int_list, "1,2,5,10,20,50,100,200", "values of N"},
      {"efficiency.x_true", ValueKind::real, "1", "true reflectivity"},
  };
  return keys;
}
// clang-format on

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos)
      return out;
    start = pos + 1;
  }
}

inline const ConfigKey *find_key(std::string_view name) {
  for (const auto &k : config_schema())
    if (k.name == name)
      return &k;
  return nullptr;
}

template <class T> std::optional<T> parse_number(std::string_view s) {
  T v{};
  const char *end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end)
    return std::nullopt;
  return v;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  if (s == "true" || s == "yes" || s == "1")
    return true;
  if (s == "false" || s == "no" || s == "0")
    return false;
  return std::nullopt;
}

inline bool valid_value(ValueKind kind, const std::string &v) {
  switch (kind) {
  case ValueKind::integer:
    return parse_number<long long>(v).has_value();
  case ValueKind::real:
    return parse_number<double>(v).has_value();
  case ValueKind::boolean:
    return parse_bool(v).has_value();
  case ValueKind::text:
  case ValueKind::path:
    return true;
  case ValueKind::int_list:
    for (const auto &item : split(v, ','))
      if (!parse_number<int>(item))
        return false;
    return true;
  case ValueKind::milestones:
    for (const auto &item : split(v, ',')) {
      const auto parts = split(item, ':');
      if (parts.size() != 2 || !parse_number<int>(parts[0]) || !parse_number<double>(parts[1]))
        return false;
    }
    return true;
  case ValueKind::regions:
    for (const auto &item : split(v, ';')) {
      const auto parts = split(item, ',');
      if (parts.size() != 4)
        return false;
      for (const auto &p : parts)
        if (!parse_number<int>(p))
          return false;
    }
    return true;
  }
  return false;
}

} // namespace detail

class RunConfig {
public:
  /// Parses configuration text; `origin` names the source in messages.
  static RunConfig parse(std::string_view text, const std::string &origin = "config") {
    RunConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = detail::trim(line);
      if (t.empty() || t.front() == '#')
        continue;
      const auto where = origin + ":" + std::to_string(lineno) + ": ";
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(where + "expected key = value");
      cfg.set(detail::trim(std::string_view(t).substr(0, eq)),
              detail::trim(std::string_view(t).substr(eq + 1)), where);
    }
    return cfg;
  }

  static RunConfig load(const std::filesystem::path &path) {
    std::vector<char> bytes;
    try {
      bytes = read_file(path);
    } catch (const std::exception &) {
      throw ConfigError("cannot read config file " + path.string());
    }
    return parse(std::string_view(bytes.data(), bytes.size()), path.string());
  }

  /// Sets a key, rejecting unknown keys, repeats and malformed values.
  void set(const std::string &key, const std::string &value, const std::string &where = "") {
    const ConfigKey *k = detail::find_key(key);
    if (!k)
      throw ConfigError(where + "unknown key '" + key + "'");
    if (values_.count(key))
      throw ConfigError(where + "key '" + key + "' given twice");
    if (!detail::valid_value(k->kind, value))
      throw ConfigError(where + "bad value '" + value + "' for '" + key + "'");
    values_[key] = value;
  }

  /// Like set(), but replaces an existing value (command-line overrides).
  void override_value(const std::string &key, const std::string &value) {
    values_.erase(key);
    set(key, value, "override: ");
  }

  bool has(const std::string &key) const { return !raw(key).empty(); }

  std::string text(const std::string &key) const { return raw(key); }

  std::filesystem::path path(const std::string &key) const { return raw(key); }

  long long integer(const std::string &key) const {
    return *detail::parse_number<long long>(require(key));
  }

  int integer_in(const std::string &key, long long lo, long long hi) const {
    const long long v = integer(key);
    if (v < lo || v > hi)
      throw ConfigError(key + " = " + std::to_string(v) + " outside [" + std::to_string(lo) +
                        ", " + std::to_string(hi) + "]");
    return static_cast<int>(v);
  }

  std::uint64_t seed() const {
    const long long v = integer("seed");
    if (v < 0)
      throw ConfigError("seed must be non-negative");
    return static_cast<std::uint64_t>(v);
  }

  double real(const std::string &key) const { return *detail::parse_number<double>(require(key)); }

  bool boolean(const std::string &key) const { return *detail::parse_bool(require(key)); }

  std::vector<int> int_list(const std::string &key) const {
    std::vector<int> out;
    for (const auto &item : detail::split(require(key), ','))
      out.push_back(*detail::parse_number<int>(item));
    return out;
  }

  std::vector<std::pair<int, double>> milestones(const std::string &key) const {
    std::vector<std::pair<int, double>> out;
    for (const auto &item : detail::split(require(key), ',')) {
      const auto parts = detail::split(item, ':');
      out.emplace_back(*detail::parse_number<int>(parts[0]), *detail::parse_number<double>(parts[1]));
    }
    return out;
  }

  std::vector<Region> regions(const std::string &key) const {
    std::vector<Region> out;
    for (const auto &item : detail::split(require(key), ';')) {
      const auto p = detail::split(item, ',');
      out.push_back({*detail::parse_number<int>(p[0]), *detail::parse_number<int>(p[1]),
                     *detail::parse_number<int>(p[2]), *detail::parse_number<int>(p[3])});
    }
    return out;
  }

  /// Every schema key with its effective value, one `key=value` per line
  /// in schema order. Equal canonical text means equal results. The output
  /// location and the resume point are left out: neither changes what a
  /// run computes.
  std::string canonical() const {
    std::string out;
    for (const auto &k : config_schema())
      if (k.name != "out" && k.name != "train.resume")
        out += std::string(k.name) + "=" + raw(std::string(k.name)) + "\n";
    return out;
  }

  std::string hash() const { return hex_digest(canonical()); }

private:
  std::string raw(const std::string &key) const {
    const ConfigKey *k = detail::find_key(key);
    if (!k)
      throw std::logic_error("config key '" + key + "' is not in the schema");
    const auto it = values_.find(key);
    return it != values_.end() ? it->second : std::string(k->fallback);
  }

  std::string require(const std::string &key) const {
    std::string v = raw(key);
    if (v.empty())
      throw ConfigError("missing required key '" + key + "'");
    return v;
  }

  std::map<std::string, std::string> values_;
};

inline NetworkConfig network_config(const RunConfig &cfg) {
  NetworkConfig net;
  net.depth = cfg.integer_in("network.depth", 1, 8);
  net.channels = cfg.int_list("network.channels");
  net.kernel_size = cfg.integer_in("network.kernel_size", 1, 15);
  net.leaky_slope = cfg.real("network.leaky_slope");
  try {
    net.validate();
  } catch (const std::invalid_argument &e) {
    throw ConfigError(std::string("network: ") + e.what());
  }
  return net;
}

inline LooksCount looks_of(const RunConfig &cfg, const std::string &key = "looks") {
  try {
    return LooksCount(cfg.real(key));
  } catch (const std::invalid_argument &e) {
    throw ConfigError(key + ": " + e.what());
  }
}

inline Phase phase_of(const RunConfig &cfg) {
  const auto p = cfg.text("train.phase");
  if (p == "A")
    return Phase::A;
  if (p == "B")
    return Phase::B;
  if (p == "C")
    return Phase::C;
  throw ConfigError("train.phase must be A, B or C, got '" + p + "'");
}

/// PhaseConfig from the train.* keys, with phase-dependent defaults for
/// epochs and learning rate.
inline PhaseConfig phase_config(const RunConfig &cfg, const NetworkConfig &net) {
  PhaseConfig pc;
  pc.phase = phase_of(cfg);
  pc.seed = cfg.seed();
  pc.epochs = cfg.has("train.epochs") ? cfg.integer_in("train.epochs", 1, 100000)
                                      : (pc.phase == Phase::A ? 10 : 20);
  pc.batch_size = cfg.integer_in("train.batch_size", 1, 4096);
  pc.patch_size = cfg.integer_in("train.patch_size", 1, 1 << 14);
  pc.stride = cfg.integer_in("train.stride", 1, 1 << 14);
  const auto loss = cfg.text("train.loss");
  if (loss == "likelihood")
    pc.loss = LossKind::likelihood;
  else if (loss == "l2")
    pc.loss = LossKind::l2_debiased;
  else
    throw ConfigError("train.loss must be likelihood or l2, got '" + loss + "'");
  pc.schedule = default_schedule(pc.phase);
  if (cfg.has("train.lr"))
    pc.schedule.base = cfg.real("train.lr");
  if (cfg.has("train.lr_milestones"))
    pc.schedule.milestones = cfg.milestones("train.lr_milestones");
  pc.change_compensation = cfg.boolean("train.compensation");
  pc.subsample_factor = cfg.integer_in("train.subsample_factor", 1, 64);
  pc.refinement_iterations = cfg.integer_in("train.refinement_iterations", 1, 1000);
  pc.epochs_per_iteration = cfg.integer_in("train.epochs_per_iteration", 1, 100000);
  const auto pairs = cfg.text("train.pairs");
  if (pairs == "random")
    pc.pairs = PairMode::random;
  else if (pairs == "closest_date")
    pc.pairs = PairMode::closest_date;
  else
    throw ConfigError("train.pairs must be random or closest_date, got '" + pairs + "'");
  pc.pairs_per_location = cfg.integer_in("train.pairs_per_location", 1, 1000);
  pc.validate(net);
  return pc;
}

} // namespace sar2sar
