#pragma once

// S2SW parameter checkpoints:
//
//   magic "S2SW" (4 bytes), version u16 (1)
//   u32 metadata length, metadata as UTF-8 JSON
//   u32 tensor count
//   tensor table, per tensor: u16 name length, name, u8 ndim, u32 dims[ndim]
//   payload: every tensor's values as float32, in table order
//
// All integers and floats are little-endian. Tensor names are
// "<layer>.weight" (dims out, in, k, k) and "<layer>.bias" (dims out).
// Resumable checkpoints add the Adam moments under "adam.m/" and "adam.v/"
// and, for phases that freeze a compensation network, that network under
// "ref/". The metadata carries the network shape, phase, epoch, seed,
// provenance chain and optimizer scalars.
//
// A checkpoint's identity is the hex digest of its file bytes; children
// record their parents' identities in the provenance chain.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sar2sar/adam.hpp"
#include "sar2sar/binary_io.hpp"
#include "sar2sar/network.hpp"

namespace sar2sar {

inline constexpr char kCheckpointMagic[4] = {'S', '2', 'S', 'W'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string phase; // "A", "B", "C" or "init"
  int epoch = 0;     // epochs completed within the phase
  std::uint64_t seed = 0;
  std::string loss;
  std::string config_hash;
  std::string code_version;
  std::vector<std::string> flags;
  nlohmann::json extra = nlohmann::json::object();
};

struct Checkpoint {
  NetworkParams<float> params;
  CheckpointMeta meta;
  std::optional<AdamState<float>> adam;
  std::optional<NetworkParams<float>> reference;
  std::string digest; // filled on load and save
};

namespace detail {

inline nlohmann::json network_to_json(const NetworkConfig &c) {
  return {{"depth", c.depth},
          {"channels", c.channels},
          {"kernel_size", c.kernel_size},
          {"leaky_slope", c.leaky_slope}};
}

inline NetworkConfig network_from_json(const nlohmann::json &j) {
  NetworkConfig c;
  c.depth = j.at("depth").get<int>();
  c.channels = j.at("channels").get<std::vector<int>>();
  c.kernel_size = j.at("kernel_size").get<int>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.validate();
  return c;
}

struct TensorEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  Buffer<float> *values;
};

inline void add_entries(std::vector<TensorEntry> &out, NetworkParams<float> &p,
                        const std::string &prefix) {
  for (auto &l : p.layers()) {
    out.push_back({prefix + l.name + ".weight",
                   {static_cast<std::uint32_t>(l.out_channels),
                    static_cast<std::uint32_t>(l.in_channels), static_cast<std::uint32_t>(l.kernel),
                    static_cast<std::uint32_t>(l.kernel)},
                   &l.weight});
    out.push_back({prefix + l.name + ".bias", {static_cast<std::uint32_t>(l.out_channels)}, &l.bias});
  }
}

inline std::vector<TensorEntry> entries_of(Checkpoint &ck) {
  std::vector<TensorEntry> e;
  add_entries(e, ck.params, "");
  if (ck.adam) {
    add_entries(e, ck.adam->first_moment, "adam.m/");
    add_entries(e, ck.adam->second_moment, "adam.v/");
  }
  if (ck.reference)
    add_entries(e, *ck.reference, "ref/");
  return e;
}

} // namespace detail

inline std::vector<char> encode_checkpoint(const Checkpoint &in) {
  Checkpoint ck = in; // entries_of hands out mutable pointers
  nlohmann::json meta = {{"network", detail::network_to_json(ck.params.config())},
                         {"phase", ck.meta.phase},
                         {"epoch", ck.meta.epoch},
                         {"seed", ck.meta.seed},
                         {"loss", ck.meta.loss},
                         {"config_hash", ck.meta.config_hash},
                         {"code_version", ck.meta.code_version},
                         {"flags", ck.meta.flags},
                         {"provenance", ck.params.provenance()},
                         {"extra", ck.meta.extra},
                         {"has_reference", ck.reference.has_value()}};
  if (ck.reference)
    meta["reference_provenance"] = ck.reference->provenance();
  if (ck.adam) {
    nlohmann::json milestones = nlohmann::json::array();
    for (const auto &[after, f] : ck.adam->schedule.milestones)
      milestones.push_back({after, f});
    meta["adam"] = {{"step", ck.adam->step},
                    {"beta1", ck.adam->beta1},
                    {"beta2", ck.adam->beta2},
                    {"epsilon", ck.adam->epsilon},
                    {"lr_base", ck.adam->schedule.base},
                    {"milestones", milestones}};
  }
  const std::string meta_text = meta.dump();

  ByteWriter w;
  w.bytes({kCheckpointMagic, 4});
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(meta_text.size()));
  w.bytes(meta_text);
  const auto entries = detail::entries_of(ck);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto &e : entries) {
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name);
    w.u8(static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims)
      w.u32(d);
  }
  for (const auto &e : entries)
    for (float v : *e.values)
      w.f32(v);
  return w.take();
}

inline Checkpoint decode_checkpoint(const std::vector<char> &bytes,
                                    const std::string &what = "checkpoint") {
  ByteReader r(bytes, what);
  if (r.bytes(4) != std::string_view(kCheckpointMagic, 4))
    r.fail("bad magic (expected S2SW)");
  const auto version = r.u16();
  if (version != kCheckpointVersion)
    r.fail("unsupported version " + std::to_string(version));
  const auto meta_len = r.u32();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.bytes(meta_len));
  } catch (const nlohmann::json::exception &e) {
    r.fail(std::string("metadata is not valid JSON: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.params = NetworkParams<float>(detail::network_from_json(meta.at("network")));
    ck.meta.phase = meta.at("phase").get<std::string>();
    ck.meta.epoch = meta.at("epoch").get<int>();
    ck.meta.seed = meta.at("seed").get<std::uint64_t>();
    ck.meta.loss = meta.at("loss").get<std::string>();
    ck.meta.config_hash = meta.at("config_hash").get<std::string>();
    ck.meta.code_version = meta.at("code_version").get<std::string>();
    ck.meta.flags = meta.at("flags").get<std::vector<std::string>>();
    ck.meta.extra = meta.at("extra");
    ck.params.provenance() = meta.at("provenance").get<std::vector<std::string>>();
    if (meta.at("has_reference").get<bool>()) {
      ck.reference = ck.params.zeros_like();
      ck.reference->provenance() =
          meta.at("reference_provenance").get<std::vector<std::string>>();
    }
    if (meta.contains("adam")) {
      const auto &a = meta["adam"];
      LearningRateSchedule s;
      s.base = a.at("lr_base").get<double>();
      s.milestones.clear();
      for (const auto &m : a.at("milestones"))
        s.milestones.emplace_back(m.at(0).get<int>(), m.at(1).get<double>());
      ck.adam = AdamState<float>::for_params(ck.params, s);
      ck.adam->step = a.at("step").get<std::uint64_t>();
      ck.adam->beta1 = a.at("beta1").get<double>();
      ck.adam->beta2 = a.at("beta2").get<double>();
      ck.adam->epsilon = a.at("epsilon").get<double>();
    }
  } catch (const nlohmann::json::exception &e) {
    r.fail(std::string("metadata field missing or mistyped: ") + e.what());
  } catch (const std::invalid_argument &e) {
    r.fail(std::string("invalid network description: ") + e.what());
  }

  const auto entries = detail::entries_of(ck);
  const auto count = r.u32();
  if (count != entries.size())
    r.fail("tensor table has " + std::to_string(count) + " entries, expected " +
           std::to_string(entries.size()));
  for (const auto &e : entries) {
    const auto name = r.bytes(r.u16());
    if (name != e.name)
      r.fail("tensor '" + name + "' found where '" + e.name + "' was expected");
    const auto ndim = r.u8();
    std::vector<std::uint32_t> dims(ndim);
    for (auto &d : dims)
      d = r.u32();
    if (dims != e.dims)
      r.fail("tensor '" + name + "' has the wrong shape");
  }
  std::size_t floats = 0;
  for (const auto &e : entries)
    floats += e.values->size();
  if (r.remaining() != 4 * floats)
    r.fail("payload is " + std::to_string(r.remaining()) + " bytes, expected " +
           std::to_string(4 * floats));
  for (const auto &e : entries)
    for (auto &v : *e.values)
      v = r.f32();
  ck.digest = hex_digest(bytes);
  return ck;
}

/// Writes `ck` and records its digest in it.
inline void save_checkpoint(const std::filesystem::path &path, Checkpoint &ck) {
  const auto bytes = encode_checkpoint(ck);
  write_file(path, bytes);
  ck.digest = hex_digest(bytes);
}

inline Checkpoint load_checkpoint(const std::filesystem::path &path) {
  return decode_checkpoint(read_file(path), path.string());
}

} // namespace sar2sar
