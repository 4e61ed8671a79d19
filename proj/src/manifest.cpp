#include "s2p/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "s2p/hashing.hpp"

namespace fs = std::filesystem;

namespace s2p {

const char* const kManifestCsvName = "manifest.csv";
const char* const kManifestMetaName = "manifest.meta";

namespace {

const char* kHeaderBase = "path,subject_id,black_hair,blond_hair,brown_hair,young,rec,split";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

bool DatasetManifest::has_sketches() const {
  return !records.empty() &&
         std::all_of(records.begin(), records.end(),
                     [](const ManifestRecord& r) { return !r.sketch_path.empty(); });
}

std::string DatasetManifest::resolve(const std::string& rel_path) const {
  if (base_dir.empty()) return rel_path;
  return (fs::path(base_dir) / rel_path).string();
}

std::string DatasetManifest::compute_hash() const {
  std::string canon;
  for (const auto& r : records) {
    canon += r.path;
    canon += '|';
    canon += std::to_string(r.subject_id);
    canon += '|';
    canon += r.attrs.str();
    canon += '|';
    canon += r.split;
    if (!r.sketch_path.empty()) {
      canon += '|';
      canon += r.sketch_path;
    }
    canon += '\n';
  }
  return sha256_hex(canon);
}

int DatasetManifest::num_subjects() const {
  int mx = -1;
  for (const auto& r : records) mx = std::max(mx, r.subject_id);
  return mx + 1;
}

void DatasetManifest::validate() const {
  check_data(!records.empty(), "manifest has no records");
  const int n_subj = num_subjects();
  std::vector<char> seen(static_cast<size_t>(n_subj), 0);
  std::vector<std::string> subject_split(static_cast<size_t>(n_subj));
  for (const auto& r : records) {
    check_data(r.subject_id >= 0, "negative subject id");
    check_data(r.split == "train" || r.split == "test", "bad split value: ", r.split);
    r.attrs.validate();
    auto& sp = subject_split[size_t(r.subject_id)];
    if (sp.empty())
      sp = r.split;
    else
      check_data(sp == r.split, "subject ", r.subject_id, " appears in both splits");
    seen[size_t(r.subject_id)] = 1;
  }
  for (int s = 0; s < n_subj; ++s)
    check_data(seen[size_t(s)], "subject ids not dense: missing ", s);
  if (!content_hash.empty())
    check_data(content_hash == compute_hash(), "manifest content hash mismatch");
}

void DatasetManifest::save(const std::string& dir) const {
  fs::create_directories(dir);
  const bool with_sketch = has_sketches();
  std::ofstream csv(fs::path(dir) / kManifestCsvName, std::ios::trunc);
  if (!csv) throw IoError(cat("cannot write manifest in ", dir));
  csv << kHeaderBase;
  if (with_sketch) csv << ",sketch_path";
  csv << '\n';
  for (const auto& r : records) {
    csv << r.path << ',' << r.subject_id;
    for (int i = 0; i < kNumAttributes; ++i) csv << ',' << int(r.attrs[i]);
    csv << ',' << r.split;
    if (with_sketch) csv << ',' << r.sketch_path;
    csv << '\n';
  }
  csv.close();

  std::ofstream meta(fs::path(dir) / kManifestMetaName, std::ios::trunc);
  if (!meta) throw IoError(cat("cannot write manifest metadata in ", dir));
  meta << "seed=" << seed << '\n';
  meta << "content_hash=" << compute_hash() << '\n';
}

DatasetManifest DatasetManifest::load(const std::string& dir_or_csv) {
  fs::path csv_path(dir_or_csv);
  if (fs::is_directory(csv_path)) csv_path /= kManifestCsvName;
  std::ifstream csv(csv_path);
  if (!csv) throw IoError(cat("cannot open manifest: ", csv_path.string()));

  DatasetManifest m;
  m.base_dir = csv_path.parent_path().string();

  std::string line;
  check_data(bool(std::getline(csv, line)), "empty manifest file");
  auto header = split_csv_line(line);
  const bool with_sketch = header.size() == 9 && header[8] == "sketch_path";
  {
    std::string base;
    for (size_t i = 0; i < 8 && i < header.size(); ++i) {
      if (i) base += ',';
      base += header[i];
    }
    check_data(base == kHeaderBase && (header.size() == 8 || with_sketch),
               "unexpected manifest header: ", line);
  }
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    check_data(f.size() == (with_sketch ? 9u : 8u), "bad manifest row: ", line);
    ManifestRecord r;
    r.path = f[0];
    r.subject_id = std::stoi(f[1]);
    for (int i = 0; i < kNumAttributes; ++i)
      r.attrs[i] = std::uint8_t(std::stoi(f[size_t(2 + i)]));
    r.split = f[7];
    if (with_sketch) r.sketch_path = f[8];
    m.records.push_back(std::move(r));
  }

  fs::path meta_path = csv_path.parent_path() / kManifestMetaName;
  if (fs::exists(meta_path)) {
    std::ifstream meta(meta_path);
    std::string mline;
    while (std::getline(meta, mline)) {
      auto eq = mline.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = mline.substr(0, eq);
      const std::string value = mline.substr(eq + 1);
      if (key == "seed") m.seed = std::stoull(value);
      if (key == "content_hash") m.content_hash = value;
    }
  }
  m.validate();
  return m;
}

}  // namespace s2p
