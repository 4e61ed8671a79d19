#include "s2p/checkpoint.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

namespace s2p {

namespace {
constexpr char kWeightMagic[] = "S2PW0001";
}

void save_params(const std::string& path, const std::vector<std::shared_ptr<Param>>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(cat("cannot write weights: ", path));
  out.write(kWeightMagic, 8);
  const std::int32_t n = std::int32_t(params.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (const auto& p : params) {
    const std::int32_t len = std::int32_t(p->name.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(p->name.data(), len);
    const Shape& s = p->value.shape();
    const std::int32_t dims[4] = {s.n, s.c, s.h, s.w};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              p->value.size() * std::int64_t(sizeof(float)));
  }
  if (!out) throw IoError(cat("failed while writing weights: ", path));
}

void load_params(const std::string& path, const std::vector<std::shared_ptr<Param>>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(cat("cannot read weights: ", path));
  char magic[8];
  in.read(magic, 8);
  check_data(in && std::string(magic, 8) == kWeightMagic, "bad weight file: ", path);
  std::int32_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  check_data(bool(in), "truncated weight file: ", path);

  std::map<std::string, Tensor> blobs;
  for (std::int32_t i = 0; i < n; ++i) {
    std::int32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    check_data(in && len > 0 && len < 4096, "corrupt weight file: ", path);
    std::string name(size_t(len), '\0');
    in.read(name.data(), len);
    std::int32_t dims[4];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    check_data(bool(in), "truncated weight file: ", path);
    Tensor t(Shape(dims[0], dims[1], dims[2], dims[3]));
    in.read(reinterpret_cast<char*>(t.data()), t.size() * std::int64_t(sizeof(float)));
    check_data(bool(in), "truncated weight data in ", path);
    blobs.emplace(std::move(name), std::move(t));
  }

  check_data(blobs.size() == params.size(), "weight file ", path, " holds ", blobs.size(),
             " parameters but the network has ", params.size());
  for (const auto& p : params) {
    auto it = blobs.find(p->name);
    check_data(it != blobs.end(), "weight file ", path, " is missing parameter ", p->name);
    check_data(it->second.shape() == p->value.shape(), "shape mismatch for ", p->name,
               ": file has ", it->second.shape().str(), ", network expects ",
               p->value.shape().str());
    p->value = it->second;
  }
}

void CheckpointMeta::save(const std::string& path) const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["resolution"] = resolution;
  j["alpha"] = alpha;
  j["id_classes"] = id_classes;
  j["vocabulary"] = vocabulary;
  j["config"] = config_text;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(cat("cannot write checkpoint metadata: ", path));
  out << j.dump(2) << '\n';
}

CheckpointMeta CheckpointMeta::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(cat("cannot read checkpoint metadata: ", path));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(cat("bad checkpoint metadata ", path, ": ", e.what()));
  }
  CheckpointMeta m;
  m.step = j.at("step").get<long>();
  m.resolution = j.at("resolution").get<int>();
  m.alpha = j.at("alpha").get<float>();
  m.id_classes = j.at("id_classes").get<int>();
  m.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  m.config_text = j.at("config").get<std::string>();
  return m;
}

}  // namespace s2p
