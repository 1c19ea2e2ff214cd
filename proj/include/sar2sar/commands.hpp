#pragma once

// The command-line operations. Each command reads and checks its whole
// configuration and loads every input before creating anything under the
// output directory, so a configuration error leaves no partial output.
//
// Every file written goes through OutputDir, which records the file's
// digest together with the seed, the config hash and the code version in
// <out>/manifest.json.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sar2sar/checkpoint.hpp"
#include "sar2sar/config.hpp"
#include "sar2sar/efficiency.hpp"
#include "sar2sar/evaluation.hpp"
#include "sar2sar/image_io.hpp"
#include "sar2sar/inference.hpp"
#include "sar2sar/synthetic.hpp"
#include "sar2sar/training.hpp"
#include "sar2sar/version.hpp"

namespace sar2sar {

inline constexpr const char *kImageExtension = ".s2s";
inline constexpr const char *kCheckpointExtension = ".s2sw";

namespace detail {

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string numbered(const char *prefix, int i, int width) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, i);
  return buf;
}

/// Output directory named by the `out` key, checked without creating it.
inline std::filesystem::path output_root(const RunConfig &cfg) {
  namespace fs = std::filesystem;
  if (!cfg.has("out"))
    throw ConfigError("no output directory: set 'out' or pass --out");
  const fs::path out = cfg.path("out");
  std::error_code ec;
  for (fs::path p = fs::absolute(out); !p.empty(); p = p.parent_path()) {
    if (fs::exists(p, ec)) {
      if (!fs::is_directory(p, ec))
        throw ConfigError("output path " + out.string() + ": " + p.string() +
                          " exists and is not a directory");
      break;
    }
    if (p == p.parent_path())
      break;
  }
  return out;
}

/// Checks that `key` is set and names an existing file or directory.
inline std::filesystem::path existing_path(const RunConfig &cfg, const std::string &key,
                                           const std::string &what) {
  if (!cfg.has(key))
    throw ConfigError("missing " + what + ": set '" + key + "'");
  const auto p = cfg.path(key);
  if (!std::filesystem::exists(p))
    throw ConfigError(what + " '" + p.string() + "' (" + key + ") does not exist");
  return p;
}

/// The file itself, or the image files directly inside a directory,
/// sorted by name.
inline std::vector<std::filesystem::path> image_files(const std::filesystem::path &p,
                                                      const std::string &key) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(p))
    return {p};
  std::vector<fs::path> out;
  for (const auto &e : fs::directory_iterator(p))
    if (e.is_regular_file() && e.path().extension() == kImageExtension)
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty())
    throw ConfigError("no " + std::string(kImageExtension) + " images in " + p.string() + " (" +
                      key + ")");
  return out;
}

inline std::vector<std::filesystem::path> subdirectories(const std::filesystem::path &p) {
  std::vector<std::filesystem::path> out;
  for (const auto &e : std::filesystem::directory_iterator(p))
    if (e.is_directory())
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

inline Image load_tagged(const std::filesystem::path &p, Domain expected, const std::string &key) {
  Image img = read_image(p);
  if (img.domain() != expected)
    throw ConfigError(p.string() + " (" + key + ") holds a " + std::string(to_string(img.domain())) +
                      " image, expected " + std::string(to_string(expected)));
  return img;
}

inline Checkpoint load_checkpoint_for(const RunConfig &cfg, const std::string &key,
                                      const std::string &what) {
  return load_checkpoint(existing_path(cfg, key, what));
}

} // namespace detail

/// Writes files below a root directory and keeps the manifest up to date.
class OutputDir {
public:
  OutputDir(std::filesystem::path root, std::string command, const RunConfig &cfg)
      : root_(std::move(root)), command_(std::move(command)), seed_(cfg.seed()),
        config_hash_(cfg.hash()) {
    std::filesystem::create_directories(root_);
    const auto manifest = root_ / "manifest.json";
    if (std::filesystem::exists(manifest)) {
      const auto bytes = read_file(manifest);
      manifest_ = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
      if (manifest_.is_discarded() || !manifest_.contains("artifacts"))
        throw FormatError(manifest.string() + ": not a manifest written by this tool");
    } else {
      manifest_ = {{"artifacts", nlohmann::json::object()}};
    }
  }

  const std::filesystem::path &root() const { return root_; }

  void write(const std::string &rel, const std::vector<char> &bytes) {
    const auto path = root_ / rel;
    std::filesystem::create_directories(path.parent_path());
    write_file(path, bytes);
    record(rel, hex_digest(bytes));
  }

  void write_text(const std::string &rel, const std::string &text) {
    write(rel, std::vector<char>(text.begin(), text.end()));
  }

  void write_image(const std::string &rel, const Image &img) { write(rel, encode_image(img)); }

  /// Saves `ck` (setting its digest) and returns the digest.
  std::string write_checkpoint(const std::string &rel, Checkpoint &ck) {
    const auto bytes = encode_checkpoint(ck);
    write(rel, bytes);
    ck.digest = hex_digest(bytes);
    return ck.digest;
  }

  /// Rewrites manifest.json with every artifact recorded so far.
  void flush_manifest() {
    const std::string text = manifest_.dump(2) + "\n";
    write_file(root_ / "manifest.json", std::vector<char>(text.begin(), text.end()));
  }

private:
  void record(const std::string &rel, const std::string &digest) {
    manifest_["artifacts"][rel] = {{"command", command_},
                                   {"seed", seed_},
                                   {"config_hash", config_hash_},
                                   {"code_version", kCodeVersion},
                                   {"digest", digest}};
  }

  std::filesystem::path root_;
  std::string command_;
  std::uint64_t seed_;
  std::string config_hash_;
  nlohmann::json manifest_;
};

// ---------------------------------------------------------------- simulate

/// Writes a training and a held-out split of synthetic data:
///   <split>/clean/scene_NNN.s2s          reflectivity
///   <split>/noisy/scene_NNN.s2s          one speckled observation
///   <split>/series/scene_NNN/date_TT.s2s speckled dates with changes
///   <split>/truth/scene_NNN/date_TT.s2s  reflectivity of each date
///   <split>/masks/scene_NNN/date_TT.s2s  1 where the date was changed
inline void cmd_simulate(const RunConfig &cfg, std::ostream *log = nullptr) {
  const auto root = detail::output_root(cfg);
  const LooksCount looks = looks_of(cfg);
  SceneOptions scene;
  scene.width = cfg.integer_in("simulate.width", 8, 1 << 14);
  scene.height = cfg.integer_in("simulate.height", 8, 1 << 14);
  scene.log_mean = cfg.real("simulate.log_mean");
  scene.texture_strength = cfg.real("simulate.texture");
  if (!(scene.texture_strength >= 0.0))
    throw ConfigError("simulate.texture must be >= 0");
  const int train_scenes = cfg.integer_in("simulate.train_scenes", 0, 10000);
  const int test_scenes = cfg.integer_in("simulate.test_scenes", 0, 10000);
  if (train_scenes + test_scenes == 0)
    throw ConfigError("simulate needs at least one scene");
  const int dates = cfg.integer_in("simulate.dates", 0, 1000);
  if (dates == 1)
    throw ConfigError("simulate.dates must be 0 or at least 2");
  ChangeModel change;
  change.area_fraction = cfg.real("simulate.change_fraction");
  change.enabled = change.area_fraction > 0.0;
  if (!(change.area_fraction >= 0.0 && change.area_fraction < 1.0))
    throw ConfigError("simulate.change_fraction must lie in [0, 1)");
  const double fmin = cfg.real("simulate.change_min_factor");
  const double fmax = cfg.real("simulate.change_max_factor");
  if (!(fmin >= 1.0 && fmax >= fmin))
    throw ConfigError("change factors need 1 <= simulate.change_min_factor <= "
                      "simulate.change_max_factor");
  change.min_log_factor = std::log(fmin);
  change.max_log_factor = std::log(fmax);
  std::optional<CorrelationKernel> kernel;
  const double sigma = cfg.real("simulate.correlation_sigma");
  if (!(sigma >= 0.0))
    throw ConfigError("simulate.correlation_sigma must be >= 0");
  if (sigma > 0.0) {
    if (!looks.is_integer())
      throw ConfigError("correlated speckle needs an integer number of looks");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    if (2 * radius + 1 > std::min(scene.width, scene.height))
      throw ConfigError("simulate.correlation_sigma too large for the scene size");
    kernel = CorrelationKernel::gaussian(sigma, radius);
  }

  OutputDir out(root, "simulate", cfg);
  const Rng rng = Rng(cfg.seed()).derive("simulate");
  const auto split = [&](const std::string &name, int count) {
    const Rng srng = rng.derive(name);
    const auto scenes = synthetic_scenes(count, scene, srng.derive("scenes"));
    for (int i = 0; i < count; ++i) {
      const std::string id = detail::numbered("scene_", i, 3);
      out.write_image(name + "/clean/" + id + kImageExtension, scenes[i]);
      Rng noise = srng.derive("noisy").derive(static_cast<std::uint64_t>(i));
      out.write_image(name + "/noisy/" + id + kImageExtension,
                      corrupt(scenes[i], looks, noise, kernel));
      if (dates == 0)
        continue;
      const auto ts = simulate_time_series(scenes[i], dates, looks, change, kernel,
                                           srng.derive("series").derive(static_cast<std::uint64_t>(i)));
      for (int t = 0; t < dates; ++t) {
        const std::string file = id + "/" + detail::numbered("date_", t, 2) + kImageExtension;
        out.write_image(name + "/series/" + file, ts.dates[t]);
        out.write_image(name + "/truth/" + file, ts.reflectivity[t]);
        out.write_image(name + "/masks/" + file, ts.change_masks[t]);
      }
    }
    if (log && count > 0)
      *log << "simulate: " << count << " " << name << " scenes written\n";
  };
  split("train", train_scenes);
  split("test", test_scenes);
  out.flush_manifest();
}

// ------------------------------------------------------------------- train

namespace detail {

inline nlohmann::json record_json(const EpochRecord &r, const std::vector<std::string> &flags,
                                  const std::string &checkpoint) {
  return {{"phase", std::string(to_string(r.phase))},
          {"epoch", r.epoch},
          {"iteration", r.iteration},
          {"lr", r.lr},
          {"mean_loss", r.mean_loss},
          {"steps", r.steps},
          {"compensation_refreshed", r.compensation_refreshed},
          {"flags", flags},
          {"checkpoint", checkpoint}};
}

inline std::string report_csv(const nlohmann::json &history) {
  std::string csv = "phase,epoch,iteration,lr,mean_loss,steps,compensation_refreshed,flags,"
                    "checkpoint\n";
  for (const auto &r : history) {
    std::string flags;
    for (const auto &f : r.at("flags"))
      flags += (flags.empty() ? "" : ";") + f.get<std::string>();
    csv += r.at("phase").get<std::string>() + "," + std::to_string(r.at("epoch").get<int>()) + "," +
           std::to_string(r.at("iteration").get<int>()) + "," +
           format_real(r.at("lr").get<double>()) + "," +
           format_real(r.at("mean_loss").get<double>()) + "," +
           std::to_string(r.at("steps").get<std::size_t>()) + "," +
           (r.at("compensation_refreshed").get<bool>() ? "1" : "0") + "," + flags + "," +
           r.at("checkpoint").get<std::string>() + "\n";
  }
  return csv;
}

inline std::string events_jsonl(const nlohmann::json &history) {
  std::string out;
  for (const auto &r : history)
    out += r.dump() + "\n";
  return out;
}

inline std::string phase_prefix(Phase p) { return std::string("phase") + std::string(to_string(p)); }

} // namespace detail

/// Trains one phase. Writes a checkpoint per epoch under checkpoints/, the
/// final checkpoint phase<X>.s2sw, report.csv and events.jsonl (one record
/// per epoch), all rewritten after every epoch so an interrupted run can
/// be resumed with train.resume.
inline void cmd_train(const RunConfig &cfg, std::ostream *log = nullptr) {
  namespace fs = std::filesystem;
  const auto root = detail::output_root(cfg);
  const NetworkConfig net = network_config(cfg);
  const PhaseConfig pc = phase_config(cfg, net);
  const LooksCount looks = looks_of(cfg);
  const std::string phase(to_string(pc.phase));
  const fs::path data = detail::existing_path(cfg, "train.data", "training data directory");

  // Data.
  std::vector<Image> clean;
  std::vector<TimeSeries> series;
  if (pc.phase == Phase::A) {
    const fs::path dir = data / "clean";
    if (!fs::is_directory(dir))
      throw ConfigError("phase A needs clean scenes in " + dir.string() + " (train.data)");
    for (const auto &f : detail::image_files(dir, "train.data"))
      clean.push_back(detail::load_tagged(f, Domain::reflectivity, "train.data"));
  } else {
    const fs::path dir = data / "series";
    if (!fs::is_directory(dir))
      throw ConfigError("phase " + phase + " needs time series in " + dir.string() +
                        " (train.data)");
    for (const auto &sd : detail::subdirectories(dir)) {
      TimeSeries ts;
      for (const auto &f : detail::image_files(sd, "train.data"))
        ts.dates.push_back(detail::load_tagged(f, Domain::intensity, "train.data"));
      if (ts.dates.size() < 2)
        throw ConfigError("time series " + sd.string() + " has fewer than two dates");
      try {
        ts.validate();
      } catch (const std::invalid_argument &e) {
        throw ConfigError(sd.string() + ": " + e.what());
      }
      series.push_back(std::move(ts));
    }
    if (series.empty())
      throw ConfigError("no time series directories in " + dir.string());
  }
  for (const auto &img : clean)
    if (img.width() < pc.patch_size || img.height() < pc.patch_size)
      throw ConfigError("training image smaller than train.patch_size");
  for (const auto &ts : series)
    if (ts.width() < pc.patch_size || ts.height() < pc.patch_size)
      throw ConfigError("time series smaller than train.patch_size");

  // Starting point: previous phase, or this phase's own resume checkpoint.
  std::optional<Checkpoint> parent;
  if (pc.phase != Phase::A) {
    const std::string need = pc.phase == Phase::B ? "A" : "B";
    if (!cfg.has("train.init"))
      throw ConfigError("phase " + phase + " needs the phase-" + need +
                        " checkpoint: set 'train.init'");
    parent = detail::load_checkpoint_for(cfg, "train.init", "phase-" + need + " checkpoint");
    if (parent->meta.phase != need)
      throw ConfigError("train.init is a phase-" + parent->meta.phase +
                        " checkpoint; phase " + phase + " needs a phase-" + need + " checkpoint");
    if (!(parent->params.config() == net))
      throw ConfigError("network.* keys do not match the network in train.init");
  } else if (cfg.has("train.init")) {
    throw ConfigError("phase A starts from a fresh network; train.init is not used");
  }
  std::optional<Checkpoint> resume;
  if (cfg.has("train.resume")) {
    resume = detail::load_checkpoint_for(cfg, "train.resume", "resume checkpoint");
    if (resume->meta.phase != phase)
      throw ConfigError("train.resume is a phase-" + resume->meta.phase + " checkpoint, not phase " +
                        phase);
    if (resume->meta.seed != pc.seed)
      throw ConfigError("train.resume was trained with seed " + std::to_string(resume->meta.seed) +
                        ", not " + std::to_string(pc.seed));
    if (resume->meta.config_hash != cfg.hash())
      throw ConfigError("train.resume was written under a different configuration");
    if (!resume->adam)
      throw ConfigError("train.resume holds no optimizer state");
    if (resume->meta.epoch > pc.total_epochs())
      throw ConfigError("train.resume is past the configured number of epochs");
  }

  std::vector<std::string> flags;
  if (pc.phase != Phase::A && !pc.change_compensation)
    flags.push_back("no-compensation");

  TrainState state;
  nlohmann::json history = nlohmann::json::array();
  if (resume) {
    state.params = resume->params;
    state.adam = *resume->adam;
    state.epochs_done = resume->meta.epoch;
    state.reference = resume->reference;
    history = resume->meta.extra.value("history", nlohmann::json::array());
  } else if (parent) {
    NetworkParams<float> start = parent->params;
    start.provenance().push_back(parent->meta.phase + ":" + parent->digest);
    state = TrainState::fresh(std::move(start), pc);
    if (pc.phase == Phase::B && pc.change_compensation)
      state.reference = parent->params;
  } else {
    Rng init = Rng(pc.seed).derive("init");
    state = TrainState::fresh(NetworkParams<float>::initialized(net, init), pc);
  }

  OutputDir out(root, "train", cfg);
  const std::string prefix = detail::phase_prefix(pc.phase);
  const auto make_checkpoint = [&](const TrainState &s) {
    Checkpoint ck;
    ck.params = s.params;
    ck.adam = s.adam;
    ck.reference = s.reference;
    ck.meta.phase = phase;
    ck.meta.epoch = s.epochs_done;
    ck.meta.seed = pc.seed;
    ck.meta.loss = std::string(to_string(pc.loss));
    ck.meta.config_hash = cfg.hash();
    ck.meta.code_version = std::string(kCodeVersion);
    ck.meta.flags = flags;
    ck.meta.extra = {{"history", history}};
    return ck;
  };
  const auto on_epoch = [&](const EpochRecord &rec, const TrainState &s) {
    const std::string rel =
        "checkpoints/" + prefix + detail::numbered("_epoch_", rec.epoch, 3) + kCheckpointExtension;
    history.push_back(detail::record_json(rec, flags, rel));
    Checkpoint ck = make_checkpoint(s);
    out.write_checkpoint(rel, ck);
    out.write_text("report.csv", detail::report_csv(history));
    out.write_text("events.jsonl", detail::events_jsonl(history));
    out.flush_manifest();
    if (log)
      *log << "phase " << phase << " epoch " << rec.epoch << "/" << pc.total_epochs()
           << " lr " << rec.lr << " loss " << rec.mean_loss << "\n";
  };

  if (pc.phase == Phase::A)
    train_phase_a(state, clean, looks, pc, on_epoch);
  else
    train_phase_bc(state, series, looks, pc, on_epoch);

  Checkpoint final_ck = make_checkpoint(state);
  out.write_checkpoint(prefix + kCheckpointExtension, final_ck);
  out.write_text("report.csv", detail::report_csv(history));
  out.write_text("events.jsonl", detail::events_jsonl(history));
  out.flush_manifest();
}

// --------------------------------------------------------------- despeckle

/// Restores an intensity image (or every image in a directory). Writes
/// <stem>.s2s (reflectivity estimate) and <stem>_amplitude.s2s, plus an
/// 8-bit <stem>.pgm preview when despeckle.preview is set.
inline void cmd_despeckle(const RunConfig &cfg, std::ostream *log = nullptr) {
  const auto root = detail::output_root(cfg);
  const Checkpoint ck = detail::load_checkpoint_for(cfg, "despeckle.checkpoint", "checkpoint");
  const auto input = detail::existing_path(cfg, "despeckle.input", "input image");
  TileOptions tiles;
  tiles.tile = cfg.integer_in("despeckle.tile", 1, 1 << 16);
  tiles.ramp = cfg.integer_in("despeckle.ramp", 1, 1 << 10);
  const bool preview = cfg.boolean("despeckle.preview");
  std::vector<std::pair<std::string, Image>> images;
  for (const auto &f : detail::image_files(input, "despeckle.input"))
    images.emplace_back(f.stem().string(),
                        detail::load_tagged(f, Domain::intensity, "despeckle.input"));

  OutputDir out(root, "despeckle", cfg);
  for (const auto &[stem, img] : images) {
    const Image restored = despeckle(ck.params, img, tiles);
    out.write_image(stem + kImageExtension, restored);
    out.write_image(stem + "_amplitude" + kImageExtension, to_amplitude(restored));
    if (preview)
      out.write(stem + ".pgm", encode_pgm_preview(restored));
    if (log)
      *log << "despeckle: " << stem << "\n";
  }
  out.flush_manifest();
}

// ---------------------------------------------------------------- evaluate

/// Metrics CSV (image,metric,value,sigma) in metrics.csv.
///
/// psnr: against evaluate.reference. With evaluate.noisy or
/// evaluate.estimate, one value per image (sigma 0); with only
/// evaluate.checkpoint, the mean and sample standard deviation over
/// evaluate.instances fresh noisy instances, plus the same protocol for
/// the unrestored input (metric psnr_noisy).
/// enl: on each estimate, one row per evaluate.regions rectangle.
/// wasserstein: distance of evaluate.noisy / estimate to the speckle law.
///
/// Estimates come from evaluate.estimate, or from evaluate.checkpoint
/// applied to evaluate.noisy. Files are matched by name.
inline void cmd_evaluate(const RunConfig &cfg, std::ostream *log = nullptr) {
  namespace fs = std::filesystem;
  const auto root = detail::output_root(cfg);
  const LooksCount looks = looks_of(cfg);
  bool want_psnr = false, want_enl = false, want_w = false;
  for (const auto &m : detail::split(cfg.text("evaluate.metrics"), ',')) {
    if (m == "psnr")
      want_psnr = true;
    else if (m == "enl")
      want_enl = true;
    else if (m == "wasserstein")
      want_w = true;
    else
      throw ConfigError("unknown metric '" + m + "' in evaluate.metrics");
  }
  std::vector<Region> regions;
  if (want_enl) {
    if (!cfg.has("evaluate.regions"))
      throw ConfigError("metric enl needs rectangles: set 'evaluate.regions'");
    regions = cfg.regions("evaluate.regions");
  }
  const int instances = cfg.integer_in("evaluate.instances", 1, 100000);
  const double peak = cfg.real("evaluate.peak");
  if (!(peak >= 0.0))
    throw ConfigError("evaluate.peak must be >= 0");

  std::optional<Checkpoint> ck;
  if (cfg.has("evaluate.checkpoint"))
    ck = detail::load_checkpoint_for(cfg, "evaluate.checkpoint", "checkpoint");
  const bool has_estimate = cfg.has("evaluate.estimate");
  const bool has_noisy = cfg.has("evaluate.noisy");
  if (has_estimate && ck)
    throw ConfigError("set either evaluate.estimate or evaluate.checkpoint, not both");
  if (!has_estimate && !ck)
    throw ConfigError("nothing to evaluate: set evaluate.estimate or evaluate.checkpoint");
  if (want_w && !has_noisy)
    throw ConfigError("metric wasserstein needs the observations: set 'evaluate.noisy'");
  if ((want_enl || want_w) && ck && !has_noisy)
    throw ConfigError("metrics enl and wasserstein need evaluate.noisy to restore");

  // Images keyed by the name of their first source.
  struct Item {
    std::string id;
    std::optional<Image> reference, noisy, estimate;
  };
  std::vector<Item> items;
  const auto sibling = [](const fs::path &root_path, const fs::path &f, const std::string &key) {
    const fs::path p = fs::is_directory(root_path) ? root_path / f.filename() : root_path;
    if (!fs::exists(p))
      throw ConfigError("no counterpart " + p.string() + " for " + f.filename().string() + " (" +
                        key + ")");
    return p;
  };
  const std::string lead_key =
      want_psnr ? "evaluate.reference" : (has_noisy ? "evaluate.noisy" : "evaluate.estimate");
  const fs::path lead = detail::existing_path(cfg, lead_key, "evaluation input");
  for (const auto &f : detail::image_files(lead, lead_key)) {
    Item it;
    it.id = f.stem().string();
    if (want_psnr)
      it.reference = detail::load_tagged(
          sibling(detail::existing_path(cfg, "evaluate.reference", "reference"), f,
                  "evaluate.reference"),
          Domain::reflectivity, "evaluate.reference");
    if (has_noisy)
      it.noisy = detail::load_tagged(
          sibling(detail::existing_path(cfg, "evaluate.noisy", "noisy input"), f, "evaluate.noisy"),
          Domain::intensity, "evaluate.noisy");
    if (has_estimate) {
      Image e = read_image(sibling(detail::existing_path(cfg, "evaluate.estimate", "estimate"), f,
                                   "evaluate.estimate"));
      if (e.domain() == Domain::log_intensity)
        throw ConfigError("evaluate.estimate must not be a log-intensity image");
      it.estimate = std::move(e);
    }
    for (const auto *img : {&it.noisy, &it.estimate})
      if (*img && it.reference && (img->value().width() != it.reference->width() ||
                                   img->value().height() != it.reference->height()))
        throw ConfigError("size mismatch for image " + it.id);
    if (it.noisy && it.estimate &&
        (it.noisy->width() != it.estimate->width() || it.noisy->height() != it.estimate->height()))
      throw ConfigError("size mismatch for image " + it.id);
    for (const auto &r : regions) {
      const Image &target = it.estimate ? *it.estimate : it.noisy ? *it.noisy : *it.reference;
      if (!r.inside(target))
        throw ConfigError("ENL region outside image " + it.id);
      if (r.area() < kMinEnlArea)
        throw ConfigError("ENL regions need at least " + std::to_string(kMinEnlArea) + " pixels");
    }
    items.push_back(std::move(it));
  }

  std::string csv = "image,metric,value,sigma\n";
  const auto row = [&](const std::string &id, const std::string &metric, double value,
                       double sigma) {
    csv += id + "," + metric + "," + detail::format_real(value) + "," + detail::format_real(sigma) +
           "\n";
  };
  const Rng rng = Rng(cfg.seed()).derive("evaluate");
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto &it = items[i];
    if (ck && it.noisy)
      it.estimate = despeckle(ck->params, *it.noisy);
    if (want_psnr) {
      const double pk = peak > 0.0 ? peak : amplitude_peak(*it.reference);
      if (it.estimate) {
        row(it.id, "psnr", psnr_amplitude(*it.reference, *it.estimate, pk), 0.0);
      } else {
        const Rng irng = rng.derive(static_cast<std::uint64_t>(i));
        const auto restored = psnr_protocol(
            *it.reference, [&](const Image &y) { return despeckle(ck->params, y); }, looks, irng,
            instances, pk);
        row(it.id, "psnr", restored.psnr_mean, restored.psnr_sigma);
        const auto noisy = psnr_protocol(
            *it.reference, [](const Image &y) { return y; }, looks, irng, instances, pk);
        row(it.id, "psnr_noisy", noisy.psnr_mean, noisy.psnr_sigma);
      }
    }
    for (std::size_t r = 0; r < regions.size(); ++r) {
      const Image &target = it.estimate ? *it.estimate : *it.noisy;
      row(it.id, "enl_region" + std::to_string(r), enl(target, regions[r]), 0.0);
    }
    if (want_w) {
      Image xhat = it.estimate->domain() == Domain::amplitude
                       ? map_image(*it.estimate, Domain::intensity, [](double a) { return a * a; })
                       : *it.estimate;
      xhat.set_domain(Domain::intensity);
      row(it.id, "wasserstein", wasserstein_residual(*it.noisy, xhat, looks, 0).distance, 0.0);
    }
    if (log)
      *log << "evaluate: " << it.id << "\n";
  }

  OutputDir out(root, "evaluate", cfg);
  out.write_text("metrics.csv", csv);
  out.flush_manifest();
}

// -------------------------------------------------------------- efficiency

/// RMSE of the two closed-form estimators against the number of samples,
/// written to efficiency.csv.
inline void cmd_efficiency(const RunConfig &cfg, std::ostream *log = nullptr) {
  const auto root = detail::output_root(cfg);
  const LooksCount looks = looks_of(cfg, "efficiency.looks");
  const int trials = cfg.integer_in("efficiency.trials", 1000, 100000000);
  const auto counts = cfg.int_list("efficiency.sample_counts");
  for (int n : counts)
    if (n < 1)
      throw ConfigError("efficiency.sample_counts must be positive");
  const double x_true = cfg.real("efficiency.x_true");
  if (!(x_true > 0.0) || !std::isfinite(x_true))
    throw ConfigError("efficiency.x_true must be positive");

  const auto curve =
      run_efficiency_experiment(x_true, looks, counts, trials, Rng(cfg.seed()).derive("efficiency"));
  std::ostringstream csv;
  write_efficiency_csv(csv, curve);
  OutputDir out(root, "efficiency", cfg);
  out.write_text("efficiency.csv", csv.str());
  out.flush_manifest();
  if (log)
    *log << "efficiency: " << counts.size() << " sample counts, " << trials << " trials\n";
}

/// Runs the named command; unknown names are a configuration error.
inline void run_command(const std::string &name, const RunConfig &cfg, std::ostream *log = nullptr) {
  static const std::map<std::string, std::function<void(const RunConfig &, std::ostream *)>> table{
      {"simulate", cmd_simulate},
      {"train", cmd_train},
      {"despeckle", cmd_despeckle},
      {"evaluate", cmd_evaluate},
      {"efficiency", cmd_efficiency}};
  const auto it = table.find(name);
  if (it == table.end())
    throw ConfigError("unknown command '" + name + "'");
  it->second(cfg, log);
}

} // namespace sar2sar
