#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s2p/attributes.hpp"

namespace s2p {

struct ManifestRecord {
  std::string path;         // photo, relative to the manifest directory
  int subject_id = 0;
  AttributeVector attrs;    // ground truth; rec bit is 1 for real records
  std::string split;        // "train" | "test"
  std::string sketch_path;  // empty until the prepare step fills it in
};

// Dataset index: one row per image plus a sidecar carrying the generator
// seed and a content hash recomputable from the records alone.
struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::uint64_t seed = 0;
  std::string content_hash;
  std::string base_dir;  // directory the manifest was loaded from / saved to

  bool has_sketches() const;
  std::string resolve(const std::string& rel_path) const;

  // subject ids dense in [0, #subjects), each subject in exactly one split,
  // stored hash matching the recomputed one.
  void validate() const;
  int num_subjects() const;

  std::string compute_hash() const;

  void save(const std::string& dir) const;  // writes manifest.csv + manifest.meta
  static DatasetManifest load(const std::string& dir_or_csv);
};

extern const char* const kManifestCsvName;
extern const char* const kManifestMetaName;

}  // namespace s2p
