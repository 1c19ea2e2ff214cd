#include <filesystem>

#include <gtest/gtest.h>

#include "sar2sar/checkpoint.hpp"
#include "sar2sar/image_io.hpp"
#include "sar2sar/speckle.hpp"

using namespace sar2sar;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
  const auto dir = fs::temp_directory_path() / "sar2sar_test_io";
  fs::create_directories(dir);
  return dir / name;
}

Image random_image(int w, int h, Domain d, std::uint64_t seed) {
  Rng rng(seed);
  Image img(w, h, d);
  for (auto &v : img.values())
    v = static_cast<float>(rng.uniform(0.0, 100.0));
  return img;
}

} // namespace

TEST(ImageFile, HeaderLayout) {
  const Image img(3, 2, Domain::amplitude, 1.0);
  const auto b = encode_image(img);
  ASSERT_EQ(b.size(), 16u + 4u * 6u);
  EXPECT_EQ(std::string(b.data(), 4), "S2S1");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 0);
  EXPECT_EQ(b[6], 2); // amplitude tag
  EXPECT_EQ(b[7], 0); // float32
  EXPECT_EQ(b[8], 3);
  EXPECT_EQ(b[12], 2);
  // 1.0f = 0x3f800000, little-endian
  EXPECT_EQ(static_cast<unsigned char>(b[16]), 0x00);
  EXPECT_EQ(static_cast<unsigned char>(b[19]), 0x3f);
}

TEST(ImageFile, RoundTripIsBitIdentical) {
  for (int d = 0; d < 4; ++d) {
    const Image img = random_image(17, 9, static_cast<Domain>(d), 10 + d);
    const auto path = scratch("img" + std::to_string(d) + ".s2s");
    write_image(path, img);
    const Image back = read_image(path);
    EXPECT_EQ(back, img);
    EXPECT_EQ(encode_image(back), read_file(path));
  }
}

TEST(ImageFile, RejectsMalformedFiles) {
  auto good = encode_image(Image(4, 4, Domain::intensity, 2.0));
  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(decode_image(bad), FormatError);
  bad = good;
  bad[6] = 4;
  EXPECT_THROW(decode_image(bad), FormatError);
  bad = good;
  bad[7] = 1;
  EXPECT_THROW(decode_image(bad), FormatError);
  bad = good;
  bad.pop_back();
  EXPECT_THROW(decode_image(bad), FormatError);
  bad = good;
  bad.push_back(0);
  EXPECT_THROW(decode_image(bad), FormatError);
  EXPECT_THROW(decode_image(std::vector<char>(good.begin(), good.begin() + 10)), FormatError);
  EXPECT_THROW(read_image(scratch("does_not_exist.s2s")), std::runtime_error);
}

TEST(ImageFile, PgmPreview) {
  const auto path = scratch("preview.pgm");
  write_pgm_preview(path, random_image(8, 5, Domain::intensity, 3));
  const auto bytes = read_file(path);
  const std::string header = "P5\n8 5\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 40);
  EXPECT_EQ(std::string(bytes.data(), header.size()), header);
}

namespace {

Checkpoint sample_checkpoint(bool with_adam, bool with_ref) {
  Rng rng(5);
  NetworkConfig cfg;
  cfg.depth = 1;
  cfg.channels = {3};
  Checkpoint ck;
  ck.params = NetworkParams<float>::initialized(cfg, rng);
  ck.params.layers().back().bias[0] = 0.25f;
  ck.params.provenance() = {"A:0123456789abcdef"};
  ck.meta.phase = "B";
  ck.meta.epoch = 3;
  ck.meta.seed = 77;
  ck.meta.loss = "likelihood";
  ck.meta.config_hash = "feedface00000000";
  ck.meta.code_version = "test";
  ck.meta.flags = {"no-compensation"};
  ck.meta.extra = {{"lr", 1e-4}};
  if (with_adam) {
    ck.adam = AdamState<float>::for_params(ck.params);
    auto g = ck.params.zeros_like();
    for (auto &l : g.layers())
      for (auto &v : l.weight)
        v = static_cast<float>(rng.normal());
    adam_step(*ck.adam, ck.params, g, 1);
  }
  if (with_ref) {
    ck.reference = NetworkParams<float>::initialized(cfg, rng);
    ck.reference->provenance() = {"A:0123456789abcdef", "B:aaaaaaaaaaaaaaaa"};
  }
  return ck;
}

void expect_same_params(const NetworkParams<float> &a, const NetworkParams<float> &b) {
  ASSERT_EQ(a.layers().size(), b.layers().size());
  EXPECT_EQ(a.config(), b.config());
  EXPECT_EQ(a.provenance(), b.provenance());
  for (std::size_t i = 0; i < a.layers().size(); ++i) {
    EXPECT_EQ(a.layer(i).name, b.layer(i).name);
    EXPECT_EQ(a.layer(i).weight, b.layer(i).weight);
    EXPECT_EQ(a.layer(i).bias, b.layer(i).bias);
  }
}

} // namespace

TEST(CheckpointFile, RoundTripWithAllSections) {
  for (bool adam : {false, true})
    for (bool ref : {false, true}) {
      Checkpoint ck = sample_checkpoint(adam, ref);
      const auto path = scratch("ck.s2sw");
      save_checkpoint(path, ck);
      const Checkpoint back = load_checkpoint(path);
      EXPECT_EQ(back.digest, ck.digest);
      expect_same_params(back.params, ck.params);
      EXPECT_EQ(back.meta.phase, "B");
      EXPECT_EQ(back.meta.epoch, 3);
      EXPECT_EQ(back.meta.seed, 77u);
      EXPECT_EQ(back.meta.flags, ck.meta.flags);
      EXPECT_EQ(back.meta.extra, ck.meta.extra);
      ASSERT_EQ(back.adam.has_value(), adam);
      if (adam) {
        EXPECT_EQ(back.adam->step, 1u);
        EXPECT_EQ(back.adam->schedule, ck.adam->schedule);
        expect_same_params(back.adam->first_moment, ck.adam->first_moment);
        expect_same_params(back.adam->second_moment, ck.adam->second_moment);
      }
      ASSERT_EQ(back.reference.has_value(), ref);
      if (ref)
        expect_same_params(*back.reference, *ck.reference);
      EXPECT_EQ(encode_checkpoint(back), read_file(path));
    }
}

TEST(CheckpointFile, LayoutStartsWithMagicAndVersion) {
  const auto b = encode_checkpoint(sample_checkpoint(false, false));
  EXPECT_EQ(std::string(b.data(), 4), "S2SW");
  EXPECT_EQ(b[4], 1);
  EXPECT_EQ(b[5], 0);
}

TEST(CheckpointFile, DigestChangesWithContent) {
  Checkpoint a = sample_checkpoint(false, false);
  Checkpoint b = a;
  b.params.layer(0).weight[0] += 1.0f;
  EXPECT_NE(hex_digest(encode_checkpoint(a)), hex_digest(encode_checkpoint(b)));
}

TEST(CheckpointFile, RejectsCorruption) {
  const auto good = encode_checkpoint(sample_checkpoint(true, false));
  auto bad = good;
  bad[2] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = good;
  bad.resize(bad.size() - 4);
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  bad = good;
  bad.push_back(0);
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  // Flip a byte inside a tensor name in the table.
  bad = good;
  const std::string needle = "enc0.conv0.weight";
  auto it = std::search(bad.begin(), bad.end(), needle.begin(), needle.end());
  ASSERT_NE(it, bad.end());
  *it = 'x';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
}
