#include "omni/data/manifest.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

#include "omni/core/bytes.hpp"
#include "omni/core/hash.hpp"

namespace omni {

void write_file_atomic(const std::string& path, const std::string& bytes) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArgError("cannot open '" + tmp + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ArgError("short write to '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ArgError("rename '" + tmp + "' -> '" + path + "': " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("file not found: " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

std::string manifest_path(const std::string& dir, Modality m) {
  return dir + "/" + modality_name(m) + ".olmf";
}

void write_manifest(const std::string& path, const Manifest& m) {
  // payload section first so item records can carry offsets and hashes
  std::string payload;
  struct Blob {
    uint64_t offset, count, hash;
  };
  std::vector<Blob> blobs;
  for (const auto& item : m.items) {
    if (!item.signal.defined() || item.signal.dtype() != Dtype::F32)
      throw ArgError("manifest payloads must be defined f32 tensors");
    ByteWriter pw;
    for (float v : item.signal.data<float>()) pw.f32(v);
    Blob b;
    b.offset = payload.size();
    b.count = static_cast<uint64_t>(item.signal.numel());
    b.hash = fnv1a(pw.buffer().data(), pw.size());
    blobs.push_back(b);
    payload += pw.buffer();
  }

  ByteWriter w;
  w.raw("OLMF", 4);
  w.u32(kManifestVersion);
  w.u64(m.data_seed);
  w.str(m.split);
  w.u32(static_cast<uint32_t>(m.items.size()));
  for (size_t i = 0; i < m.items.size(); ++i) {
    const auto& item = m.items[i];
    w.u8(static_cast<uint8_t>(item.modality));
    const auto& shape = item.signal.shape();
    w.u8(static_cast<uint8_t>(shape.size()));
    for (int64_t d : shape) w.i64(d);
    w.str(item.caption);
    w.u32(static_cast<uint32_t>(item.qa.size()));
    for (const auto& qa : item.qa) {
      w.str(qa.question);
      w.str(qa.answer);
    }
    w.u64(item.item_seed);
    w.u64(blobs[i].offset);
    w.u64(blobs[i].count);
    w.u64(blobs[i].hash);
  }
  w.raw(payload.data(), payload.size());
  uint64_t file_hash = fnv1a(w.buffer().data(), w.size());
  w.u64(file_hash);
  write_file_atomic(path, w.buffer());
}

Manifest read_manifest(const std::string& path) {
  std::string data = read_file(path);
  if (data.size() < 4 || std::memcmp(data.data(), "OLMF", 4) != 0)
    throw FormatError(FormatError::Kind::BadMagic,
                      "'" + path + "' is not a dataset manifest (bad magic)");
  ByteReader r(data);
  char magic[4];
  r.raw(magic, 4);
  uint32_t version = r.u32();
  if (version != kManifestVersion)
    throw FormatError(FormatError::Kind::BadVersion,
                      "'" + path + "': manifest version " + std::to_string(version) +
                          " unsupported (expected " +
                          std::to_string(kManifestVersion) + ")");

  Manifest m;
  m.data_seed = r.u64();
  m.split = r.str();
  uint32_t n_items = r.u32();
  struct Blob {
    uint64_t offset, count, hash;
  };
  std::vector<Blob> blobs;
  for (uint32_t i = 0; i < n_items; ++i) {
    SceneItem item;
    uint8_t tag = r.u8();
    if (tag > static_cast<uint8_t>(Modality::Fmri))
      throw FormatError(FormatError::Kind::Malformed,
                        "'" + path + "': item " + std::to_string(i) +
                            " has invalid modality tag " + std::to_string(tag));
    item.modality = static_cast<Modality>(tag);
    uint8_t rank = r.u8();
    if (rank == 0 || rank > 4)
      throw FormatError(FormatError::Kind::Malformed,
                        "'" + path + "': item " + std::to_string(i) +
                            " has invalid rank " + std::to_string(rank));
    std::vector<int64_t> shape(rank);
    for (auto& d : shape) {
      d = r.i64();
      if (d <= 0 || d > (int64_t{1} << 32))
        throw FormatError(FormatError::Kind::Malformed,
                          "'" + path + "': item " + std::to_string(i) +
                              " has invalid dimension " + std::to_string(d));
    }
    item.caption = r.str();
    uint32_t n_qa = r.u32();
    for (uint32_t q = 0; q < n_qa; ++q) {
      QaItem qa;
      qa.question = r.str();
      qa.answer = r.str();
      item.qa.push_back(std::move(qa));
    }
    item.item_seed = r.u64();
    Blob b;
    b.offset = r.u64();
    b.count = r.u64();
    b.hash = r.u64();
    if (b.count != static_cast<uint64_t>(shape_numel(shape)))
      throw FormatError(FormatError::Kind::Malformed,
                        "'" + path + "': item " + std::to_string(i) +
                            " payload count disagrees with its shape");
    blobs.push_back(b);
    item.signal = Tensor::zeros(shape);
    m.items.push_back(std::move(item));
  }

  size_t payload_base = r.offset();
  for (uint32_t i = 0; i < n_items; ++i) {
    const Blob& b = blobs[i];
    size_t byte_off = payload_base + static_cast<size_t>(b.offset);
    size_t byte_len = static_cast<size_t>(b.count) * 4;
    if (byte_off + byte_len + 8 > data.size())
      throw FormatError(FormatError::Kind::Truncated,
                        "'" + path + "': payload of item " + std::to_string(i) +
                            " extends past end of file");
    uint64_t h = fnv1a(data.data() + byte_off, byte_len);
    if (h != b.hash)
      throw FormatError(
          FormatError::Kind::BadHash,
          "'" + path + "': payload of item " + std::to_string(i) + " (" +
              modality_name(m.items[i].modality) + ") is corrupted");
    ByteReader pr(std::string_view(data).substr(byte_off, byte_len));
    auto dst = m.items[i].signal.data<float>();
    for (uint64_t v = 0; v < b.count; ++v) dst[static_cast<size_t>(v)] = pr.f32();
  }

  if (data.size() < 8)
    throw FormatError(FormatError::Kind::Truncated, "'" + path + "': no room for file hash");
  ByteReader tail(std::string_view(data).substr(data.size() - 8));
  uint64_t stored = tail.u64();
  uint64_t computed = fnv1a(data.data(), data.size() - 8);
  if (stored != computed)
    throw FormatError(FormatError::Kind::BadHash,
                      "'" + path + "': file hash mismatch (header or trailer corrupted)");
  return m;
}

int thread_cap() {
  if (const char* env = std::getenv("ONEREPO_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw ConfigError(std::string("ONEREPO_THREADS must be a positive "
                                    "integer, got '") +
                        env + "'");
    return static_cast<int>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::vector<std::string> generate_datasets(const std::string& dir,
                                           const GenerateOptions& opt) {
  for (const auto& [m, n] : opt.counts)
    if (n <= 0)
      throw ConfigError(std::string("dataset size for ") + modality_name(m) +
                        " must be positive, got " + std::to_string(n));
  std::filesystem::create_directories(dir);

  std::vector<std::string> paths;
  for (Modality m : kAllModalities) {
    auto it = opt.counts.find(m);
    if (it == opt.counts.end()) continue;
    int64_t count = it->second;

    Manifest mf;
    mf.data_seed = opt.seed;
    mf.split = opt.split + ":seed=" + std::to_string(opt.seed) +
               ":n=" + std::to_string(count);
    mf.items.resize(static_cast<size_t>(count));

    // Each item derives its own rng from (seed, split, index), so slots can
    // be filled from any thread without changing the result.
    int workers = std::min<int64_t>(thread_cap(), count);
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int64_t i = w; i < count; i += workers)
          mf.items[static_cast<size_t>(i)] =
              make_item(m, opt.seed, opt.split, static_cast<uint64_t>(i),
                        opt.geom);
      });
    for (auto& t : pool) t.join();

    std::string path = manifest_path(dir, m);
    write_manifest(path, mf);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace omni
