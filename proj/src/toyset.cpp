#include "s2p/toyset.hpp"

#include <array>
#include <cmath>
#include <filesystem>

#include "s2p/image_io.hpp"
#include "s2p/rng.hpp"
#include "s2p/xdog.hpp"

namespace fs = std::filesystem;

namespace s2p {

namespace {

struct Rgb {
  float r, g, b;
};

constexpr Rgb kBackground = {0.92f, 0.92f, 0.92f};
constexpr Rgb kSkinYoung = {0.94f, 0.80f, 0.68f};
constexpr Rgb kSkinOld = {0.72f, 0.65f, 0.58f};
constexpr Rgb kEye = {0.05f, 0.05f, 0.12f};
constexpr Rgb kMouth = {0.55f, 0.18f, 0.18f};
constexpr std::array<Rgb, kNumHair> kHairColors = {{
    {0.10f, 0.10f, 0.10f},  // black
    {0.86f, 0.74f, 0.34f},  // blond
    {0.47f, 0.28f, 0.14f},  // brown
}};

// geometry lattice, coarse on purpose so identities stay well separated
constexpr std::array<float, 3> kHeadA = {0.24f, 0.28f, 0.32f};
constexpr std::array<float, 4> kAspect = {1.10f, 1.22f, 1.34f, 1.46f};
constexpr std::array<float, 4> kEyeDx = {0.30f, 0.40f, 0.50f, 0.60f};   // x head_a
constexpr std::array<float, 2> kEyeLift = {0.10f, 0.28f};               // x head_b
constexpr std::array<float, 2> kMouthW = {0.32f, 0.52f};                // x head_a
constexpr int kLatticeSize = int(kHeadA.size() * kAspect.size() * kEyeDx.size() *
                                 kEyeLift.size() * kMouthW.size());

inline float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

inline void blend(Rgb& dst, const Rgb& src, float alpha) {
  dst.r += (src.r - dst.r) * alpha;
  dst.g += (src.g - dst.g) * alpha;
  dst.b += (src.b - dst.b) * alpha;
}

// smooth coverage of the inside of an ellipse, ~1px wide edge
inline float ellipse_alpha(float x, float y, float cx, float cy, float a, float b) {
  const float dx = (x - cx) / a;
  const float dy = (y - cy) / b;
  const float e = dx * dx + dy * dy - 1.0f;
  const float grad = 2.0f * std::sqrt(dx * dx / (a * a) + dy * dy / (b * b)) + 1e-6f;
  const float dist = e / grad;  // approximate signed distance in pixels
  return clamp01(0.5f - dist / 1.2f);
}

inline float circle_alpha(float x, float y, float cx, float cy, float r) {
  const float d = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy)) - r;
  return clamp01(0.5f - d / 1.2f);
}

}  // namespace

ToyFaceGeometry subject_geometry(int subject, int height, int width, std::uint64_t seed) {
  check_arg(subject >= 0, "subject id must be non-negative");
  // shuffled enumeration of the lattice; wraps with a deterministic offset
  std::vector<int> order(static_cast<size_t>(kLatticeSize));
  for (int i = 0; i < kLatticeSize; ++i) order[size_t(i)] = i;
  Rng shuffle_rng(derive_seed(seed, 0x746f7973756266ULL));
  shuffle_rng.shuffle(order);

  const int wrap = subject / kLatticeSize;
  int combo = order[size_t(subject % kLatticeSize)];
  const int ia = combo % int(kHeadA.size());
  combo /= int(kHeadA.size());
  const int ias = combo % int(kAspect.size());
  combo /= int(kAspect.size());
  const int ie = combo % int(kEyeDx.size());
  combo /= int(kEyeDx.size());
  const int il = combo % int(kEyeLift.size());
  combo /= int(kEyeLift.size());
  const int im = combo % int(kMouthW.size());

  const float s = float(std::min(height, width));
  const float wrap_off = 0.012f * float(wrap % 3);

  ToyFaceGeometry g;
  g.cx = 0.5f * float(width);
  g.cy = 0.52f * float(height);
  g.head_a = (kHeadA[size_t(ia)] + wrap_off) * s;
  g.head_b = g.head_a * kAspect[size_t(ias)];
  g.eye_dx = kEyeDx[size_t(ie)] * g.head_a;
  g.eye_lift = kEyeLift[size_t(il)] * g.head_b;
  g.eye_r = 0.10f * g.head_a;
  g.mouth_w = kMouthW[size_t(im)] * g.head_a;
  g.mouth_h = 0.035f * s;
  g.mouth_y = 0.50f * g.head_b;
  g.brightness = 1.0f;
  return g;
}

ToyFaceGeometry jitter_geometry(const ToyFaceGeometry& base, std::uint64_t seed) {
  Rng rng(seed);
  ToyFaceGeometry g = base;
  const float s = base.head_a / 0.28f;  // roughly min(H,W)
  g.cx += float(rng.uniform(-0.02, 0.02)) * s;
  g.cy += float(rng.uniform(-0.02, 0.02)) * s;
  const float scale = 1.0f + float(rng.uniform(-0.02, 0.02));
  g.head_a *= scale;
  g.head_b *= scale;
  g.eye_dx *= scale;
  g.eye_lift *= scale;
  g.eye_r *= 1.0f + float(rng.uniform(-0.06, 0.06));
  g.mouth_w *= scale;
  g.brightness = 1.0f + float(rng.uniform(-0.02, 0.02));
  return g;
}

Tensor render_toy_face(int height, int width, const ToyFaceGeometry& g,
                       const AttributeVector& attrs) {
  attrs.validate();
  const Rgb skin = attrs[3] ? kSkinYoung : kSkinOld;
  const Rgb hair = kHairColors[size_t(attrs.hair_index())];
  const float hairline = g.cy - 0.40f * g.head_b;
  const float eye_y = g.cy - g.eye_lift;
  const float mouth_y = g.cy + g.mouth_y;

  Tensor out(Shape(1, 3, height, width));
  const std::int64_t plane = std::int64_t(height) * width;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const float fx = float(x) + 0.5f;
      const float fy = float(y) + 0.5f;
      Rgb px = kBackground;
      const float af = ellipse_alpha(fx, fy, g.cx, g.cy, g.head_a, g.head_b);
      blend(px, skin, af);
      // hair cap: the part of the head above the hairline
      const float cap = clamp01(0.5f - (fy - hairline) / 1.2f);
      blend(px, hair, af * cap);
      blend(px, kEye, circle_alpha(fx, fy, g.cx - g.eye_dx, eye_y, g.eye_r));
      blend(px, kEye, circle_alpha(fx, fy, g.cx + g.eye_dx, eye_y, g.eye_r));
      blend(px, kMouth, ellipse_alpha(fx, fy, g.cx, mouth_y, g.mouth_w, g.mouth_h));
      const std::int64_t i = std::int64_t(y) * width + x;
      out.data()[i] = 2.0f * clamp01(px.r * g.brightness) - 1.0f;
      out.data()[plane + i] = 2.0f * clamp01(px.g * g.brightness) - 1.0f;
      out.data()[2 * plane + i] = 2.0f * clamp01(px.b * g.brightness) - 1.0f;
    }
  return out;
}

DatasetManifest generate_toy_dataset(int num_subjects, int images_per_subject,
                                     int height, int width, std::uint64_t seed,
                                     const std::string& out_dir) {
  check_arg(num_subjects >= 2, "num_subjects must be >= 2, got ", num_subjects);
  check_arg(images_per_subject >= 1, "images_per_subject must be >= 1");
  check_arg(is_power_of_two(height) && is_power_of_two(width),
            "toy image size must be a power of two, got ", height, "x", width);

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  if (ec) throw IoError(cat("cannot create output directory ", out_dir, ": ", ec.message()));

  // subject-level split, ~20% test, at least one subject on each side
  std::vector<int> subj_order(static_cast<size_t>(num_subjects));
  for (int i = 0; i < num_subjects; ++i) subj_order[size_t(i)] = i;
  Rng split_rng(derive_seed(seed, 0x73706c6974ULL));
  split_rng.shuffle(subj_order);
  int n_test = int(std::lround(0.2 * num_subjects));
  n_test = std::max(1, std::min(num_subjects - 1, n_test));
  std::vector<char> is_test(static_cast<size_t>(num_subjects), 0);
  for (int i = 0; i < n_test; ++i) is_test[size_t(subj_order[size_t(i)])] = 1;

  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.base_dir = out_dir;

  for (int s = 0; s < num_subjects; ++s) {
    const ToyFaceGeometry base = subject_geometry(s, height, width, seed);
    for (int i = 0; i < images_per_subject; ++i) {
      const std::uint64_t img_seed =
          derive_seed(seed, 0x696d67ULL, std::uint64_t(s) * 100000ULL + std::uint64_t(i));
      Rng attr_rng(derive_seed(img_seed, 0x61747472ULL));
      const AttributeVector attrs = AttributeVector::make(
          attr_rng.uniform_int(0, kNumHair - 1), attr_rng.uniform_int(0, 1) != 0,
          /*rec=*/true);
      const ToyFaceGeometry geom = jitter_geometry(base, derive_seed(img_seed, 0x6a6974ULL));
      const Tensor img = render_toy_face(height, width, geom, attrs);

      char name[64];
      std::snprintf(name, sizeof(name), "images/s%03d_i%02d.png", s, i);
      save_image(img, (fs::path(out_dir) / name).string());

      ManifestRecord rec;
      rec.path = name;
      rec.subject_id = s;
      rec.attrs = attrs;
      rec.split = is_test[size_t(s)] ? "test" : "train";
      manifest.records.push_back(std::move(rec));
    }
  }
  manifest.content_hash = manifest.compute_hash();
  manifest.save(out_dir);
  manifest.validate();
  return manifest;
}

DatasetManifest prepare_sketches(const std::string& data_dir, const XdogParams& params,
                                 bool force) {
  params.validate();
  DatasetManifest m = DatasetManifest::load(data_dir);

  fs::create_directories(fs::path(m.base_dir) / "sketches");
  auto sketch_rel = [](const ManifestRecord& r) {
    return cat("sketches/", fs::path(r.path).stem().string(), ".png");
  };
  std::vector<std::string> collisions;
  for (const auto& r : m.records)
    if (!force && fs::exists(m.resolve(sketch_rel(r)))) collisions.push_back(sketch_rel(r));
  if (!collisions.empty()) {
    std::string msg = "refusing to overwrite existing sketches (use --force):";
    for (const auto& c : collisions) msg += cat("\n  ", c);
    throw DataError(msg);
  }
  for (auto& r : m.records) {
    const Tensor photo = tensor_from_raw(read_png(m.resolve(r.path)));
    save_image(xdog_sketch(photo, params), m.resolve(sketch_rel(r)));
    r.sketch_path = sketch_rel(r);
  }
  m.content_hash = m.compute_hash();
  m.save(m.base_dir);
  return m;
}

}  // namespace s2p
