#pragma once

#include "s2p/manifest.hpp"
#include "s2p/tensor.hpp"

namespace s2p {

// Face geometry in pixel units. Identity lives entirely here; attributes only
// affect colors, so identity and attributes stay statistically independent.
struct ToyFaceGeometry {
  float cx, cy;        // head center
  float head_a, head_b;  // ellipse semi-axes
  float eye_dx;        // half distance between eye centers
  float eye_lift;      // eye row above center
  float eye_r;
  float mouth_w, mouth_h, mouth_y;
  float brightness = 1.0f;
};

// Deterministic lattice assignment of geometry to a subject id.
ToyFaceGeometry subject_geometry(int subject, int height, int width, std::uint64_t seed);

// Apply per-image jitter (small seeded perturbation of one subject's geometry).
ToyFaceGeometry jitter_geometry(const ToyFaceGeometry& base, std::uint64_t seed);

// Render one face as a (1,3,H,W) tensor in [-1,1].
Tensor render_toy_face(int height, int width, const ToyFaceGeometry& geom,
                       const AttributeVector& attrs);

// Generate the full toy dataset: PNGs under <out_dir>/images plus the
// manifest. Fully reproducible from the seed.
DatasetManifest generate_toy_dataset(int num_subjects, int images_per_subject,
                                     int height, int width, std::uint64_t seed,
                                     const std::string& out_dir);

struct XdogParams;

// Run the sketch synthesis over every photo in a manifest, writing PNGs under
// <base_dir>/sketches and rewriting the manifest with a sketch_path column.
// Refuses to overwrite existing sketch files unless force is set, listing the
// collisions in the error.
DatasetManifest prepare_sketches(const std::string& data_dir, const XdogParams& params,
                                 bool force);

}  // namespace s2p
