#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "../support/dense_oracle.hpp"
#include "mfa/error.hpp"
#include "mfa/io.hpp"

using namespace mfa;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mfa_test_io";
  fs::create_directories(dir);
  return dir / name;
}

ActivationBatch random_batch(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 3.0f);
  std::vector<float> values(n * d);
  for (auto& v : values) v = nd(rng);
  return ActivationBatch(d, std::move(values));
}

std::vector<std::uint64_t> drain_ids(ActivationSource& s, std::size_t batch, std::uint64_t seed) {
  s.rewind(seed);
  std::vector<std::uint64_t> ids;
  ActivationBatch b;
  while (s.next_batch(batch, b)) {
    for (std::size_t i = 0; i < b.size(); ++i) ids.push_back(b.id(i));
  }
  return ids;
}

}  // namespace

TEST_CASE("activation files round-trip bit-exactly") {
  const fs::path path = temp_path("roundtrip.mfaa");
  const ActivationBatch b = random_batch(37, 5, 1);
  write_activations(path, b);
  CHECK(fs::file_size(path) == kActivationHeaderBytes + 37 * 5 * 4);
  const ActivationBatch back = read_activations(path);
  REQUIRE(back.size() == 37);
  CHECK(std::memcmp(back.values().data(), b.values().data(), b.values().size() * sizeof(float)) == 0);
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(back.id(i) == i);

  const ActivationFileHeader h = read_activation_header(path);
  CHECK(h.dim == 5);
  CHECK(h.count == 37);
  CHECK(h.dtype == 0);
}

TEST_CASE("empty activation file is header only") {
  const fs::path path = temp_path("empty.mfaa");
  write_activations(path, ActivationBatch(7));
  CHECK(fs::file_size(path) == 21);
  CHECK(read_activations(path).size() == 0);
}

TEST_CASE("header layout is little-endian MFAA") {
  const fs::path path = temp_path("layout.mfaa");
  ActivationBatch b(3);
  b.append(Eigen::Vector3d(1.0, -2.0, 0.5));
  write_activations(path, b);
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  REQUIRE(bytes.size() == 33);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MFAA");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 3);
  CHECK(bytes[12] == 0);
  CHECK(bytes[13] == 1);
  // 1.0f = 0x3f800000
  CHECK(bytes[21] == 0x00);
  CHECK(bytes[24] == 0x3f);
}

TEST_CASE("malformed activation files are rejected with offsets") {
  const fs::path path = temp_path("bad.mfaa");
  write_activations(path, random_batch(4, 3, 2));

  SUBCASE("truncated payload") {
    fs::resize_file(path, fs::file_size(path) - 2);
    try {
      read_activations(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == kActivationHeaderBytes + 4 * 3 * 4 - 2);
    }
  }
  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
    f.close();
    try {
      read_activation_header(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 0);
    }
  }
  SUBCASE("unknown version") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    f.put(9);
    f.close();
    try {
      read_activation_header(path);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 4);
    }
  }
  SUBCASE("unknown dtype") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(12);
    f.put(2);
    f.close();
    CHECK_THROWS_AS(read_activation_header(path), FormatError);
  }
}

TEST_CASE("non-finite rows are rejected at write time") {
  ActivationBatch b(2);
  b.append(Eigen::Vector2d(1.0, 2.0));
  b.append(Eigen::Vector2d(NAN, 2.0));
  CHECK_THROWS_AS(write_activations(temp_path("nan.mfaa"), b), InvalidInputError);
}

TEST_CASE("streaming: order, conservation and determinism") {
  const fs::path path = temp_path("stream.mfaa");
  write_activations(path, random_batch(1000, 4, 3));

  ActivationStream plain(path, 0, 0);
  const auto in_order = drain_ids(plain, 64, 0);
  REQUIRE(in_order.size() == 1000);
  for (std::size_t i = 0; i < in_order.size(); ++i) CHECK(in_order[i] == i);

  for (std::size_t buffer : {1u, 7u, 100u, 5000u}) {
    ActivationStream s(path, buffer, 42);
    const auto a = drain_ids(s, 33, 42);
    const auto b = drain_ids(s, 33, 42);
    CHECK(a.size() == 1000);
    CHECK(std::set<std::uint64_t>(a.begin(), a.end()).size() == 1000);
    CHECK(a == b);
    ActivationStream again(path, buffer, 42);
    CHECK(drain_ids(again, 33, 42) == a);
    if (buffer > 1) CHECK(a != in_order);
  }
}

TEST_CASE("streaming rows carry their file contents") {
  const fs::path path = temp_path("content.mfaa");
  const ActivationBatch data = random_batch(200, 3, 4);
  write_activations(path, data);
  ActivationStream s(path, 50, 9);
  s.rewind(9);
  ActivationBatch b;
  while (s.next_batch(17, b)) {
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(b.row(i) == data.row(b.id(i)));
  }
}

TEST_CASE("held-out head is excluded from passes") {
  const fs::path path = temp_path("head.mfaa");
  write_activations(path, random_batch(100, 2, 5));
  ActivationStream s(path, 16, 1);
  const ActivationBatch head = s.read_head(10);
  CHECK(head.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) CHECK(head.id(i) == i);
  s.exclude_head(10);
  const auto ids = drain_ids(s, 8, 3);
  CHECK(ids.size() == 90);
  for (auto id : ids) CHECK(id >= 10);

  InMemorySource mem(read_activations(path), true);
  mem.exclude_head(10);
  const auto mem_ids = drain_ids(mem, 8, 3);
  CHECK(mem_ids.size() == 90);
  CHECK(std::set<std::uint64_t>(mem_ids.begin(), mem_ids.end()).size() == 90);
}

TEST_CASE("model files round-trip and fingerprint every byte") {
  std::mt19937_64 rng(6);
  const MfaModel m = mfa::testing::random_model(rng, 3, 5, 2);
  const fs::path path = temp_path("model.mfa");
  save_model(path, m);
  CHECK(fs::file_size(path) == kModelHeaderBytes + 8 * (3 + 5 + 3 * 5 + 3 * 5 * 2));
  const LoadedModel loaded = load_model(path);
  CHECK(serialize_model(loaded.model) == serialize_model(m));
  CHECK(loaded.fingerprint == model_fingerprint(m));
  CHECK(loaded.fingerprint.size() == 64);

  const auto bytes = serialize_model(m);
  for (std::size_t i = kModelHeaderBytes; i < bytes.size(); i += 13) {
    auto mutated = bytes;
    mutated[i] ^= 0x01;
    try {
      CHECK(model_fingerprint(deserialize_model(mutated)) != loaded.fingerprint);
    } catch (const InvalidInputError&) {
      // A flipped exponent bit can make a parameter non-finite; load rejects it.
    }
  }
}

TEST_CASE("K = 1 minimal model size") {
  std::mt19937_64 rng(7);
  const MfaModel m = mfa::testing::random_model(rng, 1, 2, 1);
  CHECK(serialize_model(m).size() == kModelHeaderBytes + 8 * (1 + 2 + 2 + 2));
}

TEST_CASE("model loader rejects bad versions and shapes") {
  std::mt19937_64 rng(8);
  auto bytes = serialize_model(mfa::testing::random_model(rng, 2, 3, 1));
  auto bad_version = bytes;
  bad_version[4] = 2;
  CHECK_THROWS_AS(deserialize_model(bad_version), FormatError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(deserialize_model(truncated), FormatError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_model(bad_magic), FormatError);
  CHECK_THROWS_AS(load_model(temp_path("does-not-exist.mfa")), IoError);
}
