#pragma once

#include <map>
#include <string>
#include <vector>

#include "omni/data/scene.hpp"

namespace omni {

// On-disk paired-dataset container ("OLMF"). One file per modality. Layout:
//
//   "OLMF" | u32 version | u64 data_seed | str split | u32 n_items
//   n_items * { u8 modality | u8 rank | i64 dims[rank] | str caption
//               | u32 n_qa | n_qa * { str q | str a } | u64 item_seed
//               | u64 payload_offset | u64 payload_count | u64 payload_fnv }
//   payload section: concatenated f32 little-endian blobs
//   u64 whole-file fnv over everything above
//
// Readers distinguish wrong magic, unsupported version, truncation, payload
// corruption (named by item) and header corruption as separate errors.

inline constexpr uint32_t kManifestVersion = 1;

struct Manifest {
  std::string split;      // provenance tag, e.g. "train:seed=1:n=256"
  uint64_t data_seed = 0;
  std::vector<SceneItem> items;
};

void write_manifest(const std::string& path, const Manifest& m);
Manifest read_manifest(const std::string& path);

// Conventional per-modality file name inside a dataset directory.
std::string manifest_path(const std::string& dir, Modality m);

// Worker-thread budget: ONEREPO_THREADS if set (positive integer, else
// ConfigError), otherwise the hardware concurrency, at least 1.
int thread_cap();

struct GenerateOptions {
  uint64_t seed = 1;
  std::string split = "train";
  std::map<Modality, int64_t> counts;  // items per modality, each > 0
  RenderGeom geom;
};

// Renders one train manifest per requested modality into `dir` and returns
// the written paths in modality order. Items are rendered in parallel across
// thread_cap() workers, but the files are a pure function of (seed, split,
// counts, geom): any worker count produces identical bytes, so re-running
// with one seed is idempotent. A non-positive count throws ConfigError.
std::vector<std::string> generate_datasets(const std::string& dir,
                                           const GenerateOptions& opt);

}  // namespace omni
