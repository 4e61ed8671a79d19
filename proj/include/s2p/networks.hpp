#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "s2p/attributes.hpp"
#include "s2p/rng.hpp"
#include "s2p/tape.hpp"

namespace s2p {

// Progressive-growing state. alpha blends the newest resolution block in;
// alpha outside (0,1) takes a single path so the endpoints are bit-exact.
struct FadeInState {
  int resolution = 64;
  float alpha = 1.0f;
};

struct NetConfig {
  int resolution = 64;   // maximum (final stage) resolution
  int base_res = 16;     // first progressive stage
  int min_res = 8;       // encoder spatial floor
  int base_width = 32;   // channels at the maximum resolution
  int max_width = 128;
  float pixelnorm_eps = 1e-8f;
  float lrelu_slope = 0.2f;

  int width_at(int res) const;
  void validate() const;
};

struct ConvLayer {
  std::shared_ptr<Param> w, b;
  int pad = 1;

  ConvLayer() = default;
  ConvLayer(const std::string& name, int cin, int cout, int k, Rng& rng);
  int operator()(FTape& t, int x) const;
};

struct LinearLayer {
  std::shared_ptr<Param> w, b;

  LinearLayer() = default;
  LinearLayer(const std::string& name, int cin, int cout, Rng& rng);
  int operator()(FTape& t, int x) const;
};

struct GeneratorOutput {
  int image = -1;
  std::vector<int> encoder_taps;  // one per downsampling block, coarse last
};

// Mirror-symmetric encoder/decoder with pixel norm after every convolution
// and tanh-bounded output. Grows 16 -> resolution with smooth fade-in.
class Generator {
 public:
  Generator(const NetConfig& cfg, int in_ch, int out_ch, const std::string& name,
            std::uint64_t seed);

  GeneratorOutput forward(FTape& t, int x, const FadeInState& fade,
                          bool want_taps = false) const;

  const std::vector<std::shared_ptr<Param>>& params() const { return params_; }
  const NetConfig& config() const { return cfg_; }
  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }

 private:
  NetConfig cfg_;
  int in_ch_, out_ch_;
  std::map<int, ConvLayer> stem_, enc_, dec_, to_out_;
  ConvLayer bottleneck_;
  std::vector<std::shared_ptr<Param>> params_;

  friend class QualityEncoder;
};

// E_x. Own input stems (photo-side channel count differs) but the tap layers
// are the very same Param objects as the paired generator's encoder blocks.
class QualityEncoder {
 public:
  QualityEncoder(const Generator& paired, int in_ch, const std::string& name,
                 std::uint64_t seed);

  std::vector<int> forward_taps(FTape& t, int x, const FadeInState& fade) const;

  // stems only; the shared blocks belong to the paired generator
  const std::vector<std::shared_ptr<Param>>& own_params() const { return own_params_; }
  const std::map<int, ConvLayer>& shared_blocks() const { return enc_; }

 private:
  NetConfig cfg_;
  int in_ch_;
  std::map<int, ConvLayer> stem_;
  std::map<int, ConvLayer> enc_;  // aliases the generator's encoder
  std::vector<std::shared_ptr<Param>> own_params_;
};

struct DiscriminatorOutput {
  int score = -1;        // per-image realness, pre-sigmoid, (N,1,1,1)
  int attr_logits = -1;  // (N,5,1,1): 3 hair + young + rec
};

// Convolutional critic with minibatch stddev before its final block and two
// linear heads. No pixel norm here.
class Discriminator {
 public:
  Discriminator(const NetConfig& cfg, int in_ch, const std::string& name,
                std::uint64_t seed);

  DiscriminatorOutput forward(FTape& t, int image, const FadeInState& fade) const;

  const std::vector<std::shared_ptr<Param>>& params() const { return params_; }

 private:
  NetConfig cfg_;
  int in_ch_;
  std::map<int, ConvLayer> stem_, enc_;
  ConvLayer post_stddev_;
  LinearLayer head_real_, head_attr_;
  std::vector<std::shared_ptr<Param>> params_;
};

// Small frozen attribute classifier standing in for an ImageNet-scale
// feature extractor. Taps after each block feed the perceptual losses.
class PerceptualNet {
 public:
  PerceptualNet(const std::string& name, std::uint64_t seed, int input_res = 64,
                std::vector<int> widths = {16, 32, 64, 128}, int num_logits = 5);

  std::vector<int> forward_taps(FTape& t, int image3) const;
  int features(FTape& t, int image3) const;  // pooled penultimate, (N,W_last,1,1)
  int logits(FTape& t, int image3) const;

  void freeze();
  const std::vector<std::shared_ptr<Param>>& params() const { return params_; }
  std::string param_hash() const;
  int input_res() const { return input_res_; }
  int num_taps() const { return int(blocks_.size()); }

 private:
  int check_input(FTape& t, int image3) const;
  int input_res_;
  std::vector<ConvLayer> blocks_;
  LinearLayer head_;
  std::vector<std::shared_ptr<Param>> params_;
};

// Frozen identity embedder; unit-norm embeddings, classifier head used only
// during its own pretraining.
class IdentityNet {
 public:
  IdentityNet(const std::string& name, std::uint64_t seed, int input_res = 64,
              int embed_dim = 64, int num_classes = 2);

  int embed(FTape& t, int image3) const;         // L2-normalized (N,embed_dim,1,1)
  int class_logits(FTape& t, int image3) const;  // (N,num_classes,1,1)

  void freeze();
  const std::vector<std::shared_ptr<Param>>& params() const { return params_; }
  std::string param_hash() const;
  int embed_dim() const { return embed_dim_; }
  int num_classes() const { return num_classes_; }

 private:
  int backbone(FTape& t, int image3) const;
  int input_res_, embed_dim_, num_classes_;
  std::vector<ConvLayer> blocks_;
  LinearLayer fc_embed_, head_;
  std::vector<std::shared_ptr<Param>> params_;
};

struct BundleConfig {
  NetConfig net;
  int d_scales = 1;      // critics per domain; scale i sees a 2^-i downsample
  int id_embed_dim = 64;
  int id_classes = 2;    // set when the identity embedder is pretrained
  int sketch_channels = 1;
  int photo_channels = 3;

  void validate() const;
};

// The five trainable/frozen networks plus the frozen extractors.
struct NetworkBundle {
  BundleConfig cfg;
  std::shared_ptr<Generator> gx;  // sketch -> photo
  std::shared_ptr<Generator> gy;  // photo -> sketch
  std::vector<std::shared_ptr<Discriminator>> dx;  // photo critics
  std::vector<std::shared_ptr<Discriminator>> dy;  // sketch critics
  std::shared_ptr<QualityEncoder> ex;
  std::shared_ptr<PerceptualNet> perceptual;
  std::shared_ptr<IdentityNet> identity;

  static NetworkBundle create(const BundleConfig& cfg, std::uint64_t seed);

  std::vector<std::shared_ptr<Param>> generator_params() const;      // gx+gy+ex stems
  std::vector<std::shared_ptr<Param>> discriminator_params() const;  // all scales
};

std::string params_digest(const std::vector<std::shared_ptr<Param>>& params);

// Replicate a 1-channel image to 3 channels (no-op for 3-channel input).
int to_three_channels(FTape& t, int image);
// Nearest-neighbour upsample until the spatial size reaches `res`.
int upsample_to(FTape& t, int image, int res);

}  // namespace s2p
