// Copyright 2026 The TEFAL-Retrieval Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include "doctest.h"
#include "tefal/checkpoint.h"
#include "tefal/config.h"
#include "tefal/dataset.h"
#include "tefal/io.h"
#include "tefal/trainer.h"

using namespace tefal;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tefal_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Corpus small_synth(std::uint64_t seed) {
  SynthConfig sc;
  sc.seed = seed;
  sc.items = 40;
  sc.dim = 6;
  sc.frames = 3;
  sc.audio_tokens = 4;
  sc.missing_audio_fraction = 0.5;
  return synth_corpus(sc);
}

}  // namespace

TEST_CASE("crc32 reference values") {
  const std::string s = "123456789";
  CHECK(crc32(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())) == 0xCBF43926U);
  CHECK(crc32({}) == 0U);
}

TEST_CASE("EMB1 layout and round trip") {
  EmbeddingFile f(2, 3);
  f.append(Matrix(2, 3, 0.5));
  Matrix m(2, 3);
  for (std::size_t i = 0; i < 6; ++i) m[i] = static_cast<double>(i) - 2.25;
  CHECK(f.append(m) == 1);
  const auto bytes = encode_emb1(f);
  REQUIRE(bytes.size() == 4 + 4 * 4 + 2 * 6 * 4 + 4);
  CHECK(std::memcmp(bytes.data(), "EMB1", 4) == 0);
  CHECK(bytes[4] == 1);   // version
  CHECK(bytes[8] == 2);   // item count
  CHECK(bytes[12] == 2);  // rows per item
  CHECK(bytes[16] == 3);  // cols
  const EmbeddingFile back = decode_emb1(bytes);
  CHECK(back == f);
  CHECK(back.item(1) == m);
  CHECK(encode_emb1(back) == bytes);
  CHECK_THROWS_AS(back.item(2), std::out_of_range);
  CHECK_THROWS_AS(f.append(Matrix(3, 3)), DimensionError);
}

TEST_CASE("EMB1 corruption is always detected") {
  EmbeddingFile f(1, 4);
  std::mt19937_64 rng(60);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 5; ++i) {
    Matrix m(1, 4);
    for (std::size_t k = 0; k < 4; ++k) m[k] = nd(rng);
    f.append(m);
  }
  const auto bytes = encode_emb1(f);
  for (std::size_t at = 0; at < bytes.size(); ++at) {
    for (int bit = 0; bit < 8; ++bit) {
      auto bad = bytes;
      bad[at] ^= static_cast<std::uint8_t>(1U << bit);
      REQUIRE_THROWS_AS(decode_emb1(bad), FormatError);
    }
  }
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_emb1(truncated), FormatError);
  CHECK_THROWS_AS(decode_emb1(std::vector<std::uint8_t>{}), FormatError);
}

TEST_CASE("corpus write/read round trip") {
  const fs::path dir = scratch_dir("corpus");
  const Corpus original = small_synth(3);
  const fs::path manifest = write_corpus(dir, original);
  const Corpus loaded = load_corpus(manifest);
  const Corpus expected = round_to_f32(original);
  REQUIRE(loaded.size() == expected.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const auto& a = loaded.items[i];
    const auto& b = expected.items[i];
    REQUIRE(a.id == b.id);
    REQUIRE(a.text == b.text);
    REQUIRE(a.frames == b.frames);
    REQUIRE(a.audio == b.audio);
    REQUIRE(a.has_audio == b.has_audio);
    REQUIRE(a.audio_summary_rows == b.audio_summary_rows);
  }
  CHECK(loaded.audio_count() < loaded.size());

  const fs::path again = write_corpus(dir / "second", loaded);
  for (const char* f : {"manifest.json", "text.emb1", "video.emb1", "audio.emb1", "audio_summary.emb1"}) {
    CHECK(read_file(dir / f) == read_file(dir / "second" / f));
  }
  fs::remove_all(dir);
}

TEST_CASE("manifest edge cases") {
  const fs::path dir = scratch_dir("manifest");
  SUBCASE("empty manifest gives an empty corpus") {
    const fs::path m = write_corpus(dir, Corpus{});
    CHECK(load_corpus(m).empty());
  }
  SUBCASE("null audio becomes zero tokens") {
    Corpus c = small_synth(4);
    const fs::path m = write_corpus(dir, c);
    const Corpus loaded = load_corpus(m);
    bool saw_missing = false;
    for (const auto& it : loaded.items) {
      if (!it.has_audio) {
        saw_missing = true;
        CHECK(it.audio == Matrix(4, 6));
      }
    }
    CHECK(saw_missing);
  }
  SUBCASE("items are sorted by id") {
    Corpus c = small_synth(5);
    std::swap(c.items[0], c.items[7]);
    const Corpus loaded = load_corpus(write_corpus(dir, c));
    for (std::size_t i = 1; i < loaded.size(); ++i) CHECK(loaded.items[i - 1].id < loaded.items[i].id);
  }
  SUBCASE("index out of range") {
    Corpus c = small_synth(6);
    const fs::path m = write_corpus(dir, c);
    auto bytes = read_file(m);
    std::string text(bytes.begin(), bytes.end());
    const auto pos = text.find("\"text\": 0,");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 10, "\"text\": 999,");
    write_text_file(m, text);
    CHECK_THROWS_AS(load_corpus(m), std::out_of_range);
  }
  SUBCASE("corrupted payload") {
    const fs::path m = write_corpus(dir, small_synth(7));
    auto bytes = read_file(dir / "video.emb1");
    bytes[30] ^= 0x10;
    write_file(dir / "video.emb1", bytes);
    CHECK_THROWS_WITH_AS(load_corpus(m), doctest::Contains("CRC"), FormatError);
  }
  SUBCASE("width disagreement") {
    const fs::path m = write_corpus(dir, small_synth(8));
    EmbeddingFile wide(3, 7);
    wide.append(Matrix(3, 7));
    write_emb1(dir / "video.emb1", wide);
    CHECK_THROWS_AS(load_corpus(m), DimensionError);
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip") {
  ModelConfig cfg;
  cfg.dim = cfg.proj_dim = 6;
  for (FusionKind kind : {FusionKind::kAddition, FusionKind::kLateFusion, FusionKind::kConcatFC,
                          FusionKind::kXAttnFusion, FusionKind::kStacking}) {
    cfg.fusion = kind;
    Model m = Model::create(cfg, 21);
    m.store().step = (std::uint64_t{1} << 40) + 12345;
    const auto bytes = encode_checkpoint(m);
    CHECK(std::memcmp(bytes.data(), "TFCK", 4) == 0);
    const Model back = decode_checkpoint(bytes);
    CHECK(back.store().step == m.store().step);
    CHECK(back.config().fusion == kind);
    CHECK(encode_checkpoint(back) == bytes);
    for (const auto& name : m.store().names()) {
      const Matrix& a = m.store().value(name);
      const Matrix& b = back.store().value(name);
      for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(b[i] == static_cast<double>(static_cast<float>(a[i])));
    }
  }
  SUBCASE("corruption") {
    cfg.fusion = FusionKind::kAddition;
    const auto bytes = encode_checkpoint(Model::create(cfg, 2));
    for (std::size_t at = 0; at < bytes.size(); at += 7) {
      auto bad = bytes;
      bad[at] ^= 0x01;
      REQUIRE_THROWS_AS(decode_checkpoint(bad), FormatError);
    }
  }
  SUBCASE("file") {
    const fs::path dir = scratch_dir("ckpt");
    cfg.fusion = FusionKind::kAddition;
    const Model m = Model::create(cfg, 3);
    save_checkpoint(dir / "a.tfck", m);
    const Model back = load_checkpoint(dir / "a.tfck");
    save_checkpoint(dir / "b.tfck", back);
    CHECK(read_file(dir / "a.tfck") == read_file(dir / "b.tfck"));
    fs::remove_all(dir);
  }
}

TEST_CASE("key=value config") {
  const KeyValues kv = parse_key_values("# comment\n  dim = 16\nproj_dim=16\n\nfusion=concat_fc # trailing\nlr=3e-3\n");
  CHECK(kv.at("dim") == "16");
  CHECK(kv.at("fusion") == "concat_fc");
  TrainConfig c;
  apply_train_config(kv, c);
  CHECK(c.model.dim == 16);
  CHECK(c.model.fusion == FusionKind::kConcatFC);
  CHECK(c.optimizer.lr == 3e-3);

  TrainConfig round;
  apply_train_config(parse_key_values(format_train_config(c)), round);
  CHECK(format_train_config(round) == format_train_config(c));

  CHECK_THROWS_WITH(parse_key_values("a=1\nnonsense\n"), doctest::Contains("line 2"));
  CHECK_THROWS_WITH(parse_key_values("a=1\na=2\n"), doctest::Contains("duplicate"));
  CHECK_THROWS_WITH(apply_train_config({{"colour", "red"}}, c), doctest::Contains("unknown key"));
  CHECK_THROWS(apply_train_config({{"epochs", "-3"}}, c));
  CHECK_THROWS(apply_train_config({{"lr", "fast"}}, c));
  CHECK_THROWS(apply_train_config({{"output_ln_affine", "maybe"}}, c));
}
