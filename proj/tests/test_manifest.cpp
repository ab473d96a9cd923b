#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "omni/core/bytes.hpp"
#include "omni/data/manifest.hpp"

using namespace omni;

namespace {

struct TmpDir {
  std::filesystem::path path;
  TmpDir() {
    path = std::filesystem::temp_directory_path() /
           ("olmf_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    std::filesystem::create_directories(path);
  }
  ~TmpDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Manifest small_manifest() {
  Manifest m;
  m.split = "train:seed=7:n=3";
  m.data_seed = 7;
  RenderGeom g;
  for (uint64_t i = 0; i < 3; ++i)
    m.items.push_back(make_item(Modality::Audio, 7, "train", i, g));
  return m;
}

std::string slurp(const std::string& p) { return read_file(p); }

void corrupt_byte(const std::string& p, size_t offset) {
  std::string data = slurp(p);
  REQUIRE(offset < data.size());
  data[offset] = static_cast<char>(data[offset] ^ 0x5a);
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

}  // namespace

TEST_CASE("manifest round-trips items exactly") {
  TmpDir tmp;
  Manifest m = small_manifest();
  std::string path = tmp.file("audio.olmf");
  write_manifest(path, m);
  Manifest r = read_manifest(path);
  CHECK(r.split == m.split);
  CHECK(r.data_seed == 7);
  REQUIRE(r.items.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(r.items[i].modality == Modality::Audio);
    CHECK(r.items[i].caption == m.items[i].caption);
    CHECK(r.items[i].item_seed == m.items[i].item_seed);
    CHECK(r.items[i].signal.shape() == m.items[i].signal.shape());
    // f32 payloads are bit-preserved
    auto a = r.items[i].signal.data<float>();
    auto b = m.items[i].signal.data<float>();
    REQUIRE(a.size() == b.size());
    for (size_t j = 0; j < a.size(); ++j) REQUIRE(a[j] == b[j]);
    REQUIRE(r.items[i].qa.size() == m.items[i].qa.size());
    for (size_t q = 0; q < m.items[i].qa.size(); ++q) {
      CHECK(r.items[i].qa[q].question == m.items[i].qa[q].question);
      CHECK(r.items[i].qa[q].answer == m.items[i].qa[q].answer);
    }
  }
}

TEST_CASE("writing the same manifest twice yields identical bytes") {
  TmpDir tmp;
  Manifest m = small_manifest();
  write_manifest(tmp.file("a.olmf"), m);
  write_manifest(tmp.file("b.olmf"), m);
  CHECK(slurp(tmp.file("a.olmf")) == slurp(tmp.file("b.olmf")));
}

TEST_CASE("corrupting a payload names the damaged item") {
  TmpDir tmp;
  std::string path = tmp.file("audio.olmf");
  write_manifest(path, small_manifest());
  std::string data = slurp(path);
  // flip a byte in the middle of the second item's payload: payload section
  // sits between header and trailing hash; item payloads are equal-sized
  size_t payload_bytes = 3 * 32 * 64 * 4;
  size_t payload_base = data.size() - 8 - payload_bytes;
  corrupt_byte(path, payload_base + payload_bytes / 3 + 100);
  try {
    read_manifest(path);
    FAIL("expected a corruption error");
  } catch (const FormatError& e) {
    CHECK(e.kind == FormatError::Kind::BadHash);
    CHECK(std::string(e.what()).find("item 1") != std::string::npos);
    CHECK(std::string(e.what()).find("audio") != std::string::npos);
  }
}

TEST_CASE("header corruption is caught by the file hash") {
  TmpDir tmp;
  std::string path = tmp.file("audio.olmf");
  write_manifest(path, small_manifest());
  // flip a caption byte (inside the header records, after the fixed prefix)
  corrupt_byte(path, 40);
  try {
    read_manifest(path);
    FAIL("expected a corruption error");
  } catch (const FormatError& e) {
    // either the parse notices (malformed) or the file hash does
    CHECK((e.kind == FormatError::Kind::BadHash ||
           e.kind == FormatError::Kind::Malformed ||
           e.kind == FormatError::Kind::Truncated));
  }
}

TEST_CASE("magic, version and truncation are distinct errors") {
  TmpDir tmp;
  std::string path = tmp.file("audio.olmf");
  write_manifest(path, small_manifest());

  SECTION("bad magic") {
    corrupt_byte(path, 0);
    try {
      read_manifest(path);
      FAIL("expected bad magic");
    } catch (const FormatError& e) {
      CHECK(e.kind == FormatError::Kind::BadMagic);
    }
  }

  SECTION("unsupported version") {
    corrupt_byte(path, 4);
    try {
      read_manifest(path);
      FAIL("expected bad version");
    } catch (const FormatError& e) {
      CHECK(e.kind == FormatError::Kind::BadVersion);
    }
  }

  SECTION("truncated file") {
    std::string data = slurp(path);
    data.resize(data.size() / 2);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.close();
    try {
      read_manifest(path);
      FAIL("expected truncation");
    } catch (const FormatError& e) {
      CHECK(e.kind == FormatError::Kind::Truncated);
    }
  }

  SECTION("missing file is a precondition error, not a format error") {
    CHECK_THROWS_AS(read_manifest(tmp.file("absent.olmf")), PreconditionError);
  }
}

TEST_CASE("manifest path convention") {
  CHECK(manifest_path("/data/run1", Modality::Point) == "/data/run1/point.olmf");
  CHECK(manifest_path("d", Modality::Fmri) == "d/fmri.olmf");
}
