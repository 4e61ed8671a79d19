#pragma once

#include <memory>
#include <string>
#include <vector>

#include "s2p/tape.hpp"

namespace s2p {

// One binary blob per network: little-endian, name-indexed float records.
// Loading validates names and shapes against the constructed network.
void save_params(const std::string& path, const std::vector<std::shared_ptr<Param>>& params);
void load_params(const std::string& path, const std::vector<std::shared_ptr<Param>>& params);

struct CheckpointMeta {
  long step = 0;
  int resolution = 0;
  float alpha = 1.0f;
  int id_classes = 2;                      // identity-embedder head size
  std::string config_text;                 // effective run config, key=value lines
  std::vector<std::string> vocabulary;     // attribute order

  void save(const std::string& path) const;       // JSON
  static CheckpointMeta load(const std::string& path);
};

}  // namespace s2p
