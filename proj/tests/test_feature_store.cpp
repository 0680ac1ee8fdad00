#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "scr/error.hpp"
#include "scr/evaluator.hpp"
#include "scr/feature_store.hpp"

namespace fs = std::filesystem;
using namespace scr;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("scr_fs_" + std::to_string(::getpid()) + "_" + name);
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

SynthSpec small_spec() {
  SynthSpec s;
  s.num_identities = 2;
  s.instances_per_identity = 3;
  s.dim = 4;
  s.rng_seed = 7;
  return s;
}

}  // namespace

TEST(FeatureSet, RejectsBrokenInvariants) {
  EXPECT_THROW(FeatureSet(0, {}, {0}, {0}), ValidationError);
  EXPECT_THROW(FeatureSet(2, {}, {}, {}), ValidationError);
  EXPECT_THROW(FeatureSet(2, {1, 2}, {0}, {0, 1}), ValidationError);
  EXPECT_THROW(FeatureSet(2, {1, 2, 3}, {0}, {0}), ValidationError);
  EXPECT_THROW(FeatureSet(2, {1, NAN}, {0}, {0}), ValidationError);
  EXPECT_THROW(FeatureSet(1, {INFINITY}, {0}, {0}), ValidationError);
}

TEST(GenerateSynthetic, CountsAndIdentities) {
  const auto set = generate_synthetic(small_spec());
  EXPECT_EQ(set.size(), 6u);
  EXPECT_EQ(set.dim(), 4u);
  EXPECT_EQ(set.num_identities(), 2u);
}

TEST(GenerateSynthetic, RoundRobinCameras) {
  const auto set = generate_synthetic(small_spec());
  std::set<std::uint16_t> cams(set.camera_ids().begin(), set.camera_ids().end());
  EXPECT_EQ(cams, (std::set<std::uint16_t>{0, 1}));
}

TEST(GenerateSynthetic, SeededDeterminism) {
  EXPECT_EQ(generate_synthetic(small_spec()), generate_synthetic(small_spec()));
  auto other = small_spec();
  other.rng_seed = 8;
  EXPECT_NE(generate_synthetic(small_spec()), generate_synthetic(other));
}

TEST(GenerateSynthetic, ValidationNamesTheField) {
  auto expect_field = [](SynthSpec s, const std::string& field) {
    try {
      generate_synthetic(s);
      FAIL() << "expected ValidationError for " << field;
    } catch (const ValidationError& e) {
      EXPECT_EQ(e.field(), field);
    }
  };
  auto s = small_spec();
  s.cluster_stddev = 0.0;
  expect_field(s, "cluster_stddev");
  s = small_spec();
  s.identity_separation = -1.0;
  expect_field(s, "identity_separation");
  s = small_spec();
  s.num_cameras = 1;
  expect_field(s, "num_cameras");
  s = small_spec();
  s.num_identities = 0;
  expect_field(s, "num_identities");
  s = small_spec();
  s.dim = 0;
  expect_field(s, "dim");
}

TEST(GenerateSynthetic, SeparableSetHasPerfectExactRankOne) {
  SynthSpec s;
  s.num_identities = 20;
  s.instances_per_identity = 6;
  s.dim = 8;
  s.cluster_stddev = 0.1;
  s.identity_separation = 2.0;  // 20x the noise
  s.rng_seed = 11;
  const auto [q, g] = split_query_gallery(generate_synthetic(s), 0.3, 1);
  const auto query = encode_set(q, nullptr, 0);
  const auto gallery = encode_set(g, nullptr, 0);
  const auto report =
      evaluate(query, gallery, {}, DistanceKind::euclidean, RankAlgorithm::comparison);
  EXPECT_DOUBLE_EQ(report.rank(1), 1.0);
}

TEST(FeatureFile, RoundTrip) {
  const auto path = temp_file("rt.fvs");
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    auto spec = small_spec();
    spec.rng_seed = rng();
    spec.dim = 1 + rng() % 9;
    const auto set = generate_synthetic(spec);
    save_features(set, path);
    EXPECT_EQ(load_features(path), set);
  }
  fs::remove(path);
}

TEST(FeatureFile, ExactByteLayout) {
  const auto path = temp_file("one.fvs");
  save_features(FeatureSet(1, {1.5f}, {258}, {3}), path);
  const auto bytes = read_bytes(path);
  // header 20 + one label record 6 + one float 4
  ASSERT_EQ(bytes.size(), 30u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SCRF");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[8], 1);  // N
  EXPECT_EQ(bytes[16], 1);  // D
  EXPECT_EQ(bytes[20], 0x02);  // person id 258 = 0x0102
  EXPECT_EQ(bytes[21], 0x01);
  EXPECT_EQ(bytes[24], 3);  // camera id
  // 1.5f = 0x3FC00000
  EXPECT_EQ(bytes[28], 0xC0);
  EXPECT_EQ(bytes[29], 0x3F);
  fs::remove(path);
}

TEST(FeatureFile, OverwritesExistingFile) {
  const auto path = temp_file("ow.fvs");
  save_features(generate_synthetic(small_spec()), path);
  const FeatureSet tiny(1, {2.0f}, {0}, {0});
  save_features(tiny, path);
  EXPECT_EQ(load_features(path), tiny);
  fs::remove(path);
}

TEST(FeatureFile, WrongMagic) {
  const auto path = temp_file("magic.fvs");
  save_features(generate_synthetic(small_spec()), path);
  auto bytes = read_bytes(path);
  bytes[0] = 'X';
  write_bytes(path, bytes);
  try {
    load_features(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  fs::remove(path);
}

TEST(FeatureFile, DeclaredRowsMissing) {
  const auto path = temp_file("trunc.fvs");
  const FeatureSet two(2, {1, 2, 3, 4}, {0, 1}, {0, 1});
  save_features(two, path);
  auto bytes = read_bytes(path);
  bytes[8] = 3;  // claim N = 3
  write_bytes(path, bytes);
  EXPECT_THROW(load_features(path), FormatError);
  fs::remove(path);
}

TEST(FeatureFile, NonFiniteValueReportsOffset) {
  const auto path = temp_file("nan.fvs");
  save_features(FeatureSet(2, {1, 2, 3, 4}, {0, 1}, {0, 1}), path);
  auto bytes = read_bytes(path);
  // third float starts at 20 + 2*6 + 8 = 40; write a NaN (0x7FC00000)
  bytes[40] = 0x00;
  bytes[41] = 0x00;
  bytes[42] = 0xC0;
  bytes[43] = 0x7F;
  write_bytes(path, bytes);
  try {
    load_features(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 40u);
  }
  fs::remove(path);
}

TEST(FeatureFile, EmptyPathIsIoError) {
  EXPECT_THROW(save_features(FeatureSet(1, {1.0f}, {0}, {0}), ""), IoError);
  EXPECT_THROW(load_features(temp_file("does_not_exist.fvs")), IoError);
}

TEST(L2Normalize, UnitRowsAndZeroRowsKept) {
  const FeatureSet set(2, {3, 4, 0, 0}, {0, 1}, {0, 1});
  const auto n = l2_normalize(set);
  EXPECT_FLOAT_EQ(n.row(0)[0], 0.6f);
  EXPECT_FLOAT_EQ(n.row(0)[1], 0.8f);
  EXPECT_EQ(n.row(1)[0], 0.0f);
}

TEST(Split, CeilingArithmetic) {
  SynthSpec s = small_spec();
  s.instances_per_identity = 4;
  const auto [q, g] = split_query_gallery(generate_synthetic(s), 0.25, 3);
  EXPECT_EQ(q.size(), 2u);
  EXPECT_EQ(g.size(), 6u);
}

TEST(Split, FractionCappedSoGalleryKeepsOne) {
  SynthSpec s = small_spec();
  s.instances_per_identity = 2;
  const auto [q, g] = split_query_gallery(generate_synthetic(s), 0.9, 3);
  EXPECT_EQ(q.size(), 2u);
  EXPECT_EQ(g.size(), 2u);
}

TEST(Split, SingletonIdentityListed) {
  const FeatureSet set(1, {1, 2, 3}, {5, 5, 9}, {0, 1, 0});
  try {
    split_query_gallery(set, 0.5, 0);
    FAIL();
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find('9'), std::string::npos);
  }
  EXPECT_THROW(split_query_gallery(set, 1.0, 0), ArgumentError);
}

TEST(Split, DeterministicPartition) {
  SynthSpec s = small_spec();
  s.num_identities = 7;
  s.instances_per_identity = 5;
  const auto set = generate_synthetic(s);
  const auto a = split_query_gallery(set, 0.3, 42);
  const auto b = split_query_gallery(set, 0.3, 42);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);

  // query + gallery is the original multiset of rows, and every identity
  // appears on both sides.
  std::multiset<std::vector<float>> original, joined;
  for (std::size_t i = 0; i < set.size(); ++i) {
    original.emplace(set.row(i).begin(), set.row(i).end());
  }
  std::map<std::uint32_t, int> per_side_q, per_side_g;
  for (const auto* part : {&a.first, &a.second}) {
    for (std::size_t i = 0; i < part->size(); ++i) {
      joined.emplace(part->row(i).begin(), part->row(i).end());
      (part == &a.first ? per_side_q : per_side_g)[part->person_ids()[i]]++;
    }
  }
  EXPECT_EQ(original, joined);
  EXPECT_EQ(per_side_q.size(), 7u);
  EXPECT_EQ(per_side_g.size(), 7u);
}
