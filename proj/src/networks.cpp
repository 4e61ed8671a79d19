#include "s2p/networks.hpp"

#include <cmath>

#include "s2p/hashing.hpp"
#include "s2p/rng.hpp"

namespace s2p {

namespace {

std::shared_ptr<Param> he_conv(const std::string& name, int cin, int cout, int k, Rng& rng) {
  Tensor w(Shape(cout, cin, k, k));
  const float std = std::sqrt(2.0f / float(cin * k * k));
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = float(rng.normal()) * std;
  return std::make_shared<Param>(name, std::move(w));
}

std::shared_ptr<Param> he_linear(const std::string& name, int cin, int cout, Rng& rng) {
  Tensor w(Shape(cout, cin, 1, 1));
  const float std = std::sqrt(2.0f / float(cin));
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = float(rng.normal()) * std;
  return std::make_shared<Param>(name, std::move(w));
}

std::shared_ptr<Param> zero_bias(const std::string& name, int cout) {
  return std::make_shared<Param>(name, Tensor(Shape(cout, 1, 1, 1)));
}

void collect(std::vector<std::shared_ptr<Param>>& dst, const ConvLayer& l) {
  dst.push_back(l.w);
  dst.push_back(l.b);
}
void collect(std::vector<std::shared_ptr<Param>>& dst, const LinearLayer& l) {
  dst.push_back(l.w);
  dst.push_back(l.b);
}

}  // namespace

int NetConfig::width_at(int res) const {
  return std::min(max_width, base_width * (resolution / res));
}

void NetConfig::validate() const {
  check_arg(is_power_of_two(resolution) && resolution >= 16 && resolution <= 256,
            "resolution must be a power of two in [16, 256], got ", resolution);
  check_arg(is_power_of_two(base_res) && base_res >= 16 && base_res <= resolution,
            "base_res must be a power of two in [16, resolution]");
  check_arg(min_res == 8, "encoder floor is fixed at 8");
  check_arg(base_width >= 1 && max_width >= base_width, "bad width configuration");
  check_arg(pixelnorm_eps > 0.0f, "pixelnorm_eps must be positive");
}

ConvLayer::ConvLayer(const std::string& name, int cin, int cout, int k, Rng& rng)
    : w(he_conv(name + ".w", cin, cout, k, rng)), b(zero_bias(name + ".b", cout)), pad(k / 2) {}

int ConvLayer::operator()(FTape& t, int x) const {
  return t.conv2d(x, t.param(w), t.param(b), pad);
}

LinearLayer::LinearLayer(const std::string& name, int cin, int cout, Rng& rng)
    : w(he_linear(name + ".w", cin, cout, rng)), b(zero_bias(name + ".b", cout)) {}

int LinearLayer::operator()(FTape& t, int x) const {
  return t.linear(x, t.param(w), t.param(b));
}

namespace {

// shared encoder walk used by the generators, the quality encoder and the
// discriminators; returns one tap per downsampling block, coarsest last
std::vector<int> encoder_forward(FTape& t, int x, const FadeInState& fade,
                                 const NetConfig& cfg,
                                 const std::map<int, ConvLayer>& stem,
                                 const std::map<int, ConvLayer>& enc, bool use_pn) {
  const int R = fade.resolution;
  const Shape& s = t.val(x).shape();
  check_arg(s.h == R && s.w == R, "input resolution ", s.h, "x", s.w,
            " does not match fade state resolution ", R);
  check_arg(stem.count(R) != 0, "network not built for resolution ", R);

  auto act = [&](int id) {
    int a = t.leaky_relu(id, cfg.lrelu_slope);
    return use_pn ? t.pixel_norm(a, cfg.pixelnorm_eps) : a;
  };
  auto enc_block = [&](int f, int r) {  // features at r -> features at r/2
    return act(enc.at(r)(t, t.avg_pool2(f)));
  };

  std::vector<int> taps;
  int f = -1;
  int next_r = R;
  const bool fading = fade.alpha < 1.0f && R > cfg.base_res;
  if (fading && fade.alpha > 0.0f) {
    const int fa = enc_block(act(stem.at(R)(t, x)), R);
    const int fb = act(stem.at(R / 2)(t, t.avg_pool2(x)));
    f = t.add(t.scale(fb, 1.0 - double(fade.alpha)), t.scale(fa, double(fade.alpha)));
    taps.push_back(f);
    next_r = R / 2;
  } else if (fading) {  // alpha == 0: previous-resolution pathway only
    f = act(stem.at(R / 2)(t, t.avg_pool2(x)));
    taps.push_back(f);
    next_r = R / 2;
  } else {
    f = act(stem.at(R)(t, x));
  }
  for (int r = next_r; r >= cfg.base_res; r /= 2) {
    f = enc_block(f, r);
    taps.push_back(f);
  }
  return taps;
}

}  // namespace

Generator::Generator(const NetConfig& cfg, int in_ch, int out_ch, const std::string& name,
                     std::uint64_t seed)
    : cfg_(cfg), in_ch_(in_ch), out_ch_(out_ch) {
  cfg_.validate();
  Rng rng(seed);
  for (int r = cfg_.base_res; r <= cfg_.resolution; r *= 2) {
    stem_[r] = ConvLayer(cat(name, ".stem", r), in_ch, cfg_.width_at(r), 3, rng);
    enc_[r] = ConvLayer(cat(name, ".enc", r), cfg_.width_at(r), cfg_.width_at(r / 2), 3, rng);
    dec_[r] = ConvLayer(cat(name, ".dec", r), cfg_.width_at(r / 2), cfg_.width_at(r), 3, rng);
    to_out_[r] = ConvLayer(cat(name, ".out", r), cfg_.width_at(r), out_ch, 3, rng);
  }
  const int w8 = cfg_.width_at(cfg_.min_res);
  bottleneck_ = ConvLayer(cat(name, ".mid"), w8, w8, 3, rng);
  for (auto& [r, l] : stem_) collect(params_, l);
  for (auto& [r, l] : enc_) collect(params_, l);
  collect(params_, bottleneck_);
  for (auto& [r, l] : dec_) collect(params_, l);
  for (auto& [r, l] : to_out_) collect(params_, l);
}

GeneratorOutput Generator::forward(FTape& t, int x, const FadeInState& fade,
                                   bool want_taps) const {
  check_arg(t.val(x).shape().c == in_ch_, "generator expects ", in_ch_,
            " input channels, got ", t.val(x).shape().c);
  auto act = [&](int id) {
    return t.pixel_norm(t.leaky_relu(id, cfg_.lrelu_slope), cfg_.pixelnorm_eps);
  };

  GeneratorOutput out;
  std::vector<int> taps = encoder_forward(t, x, fade, cfg_, stem_, enc_, /*use_pn=*/true);
  if (want_taps) out.encoder_taps = taps;

  int g = act(bottleneck_(t, taps.back()));
  const int R = fade.resolution;
  const bool fading = fade.alpha < 1.0f && R > cfg_.base_res;
  const int top = fading ? R / 2 : R;
  for (int r = cfg_.min_res * 2; r <= top; r *= 2)
    g = t.upsample2(act(dec_.at(r)(t, g)));

  if (!fading) {
    out.image = t.tanh_op(to_out_.at(R)(t, g));
    return out;
  }
  if (fade.alpha <= 0.0f) {  // previous-resolution pathway, upsampled
    out.image = t.upsample2(t.tanh_op(to_out_.at(R / 2)(t, g)));
    return out;
  }
  const int img_b = t.upsample2(t.tanh_op(to_out_.at(R / 2)(t, g)));
  const int ga = t.upsample2(act(dec_.at(R)(t, g)));
  const int img_a = t.tanh_op(to_out_.at(R)(t, ga));
  out.image = t.add(t.scale(img_b, 1.0 - double(fade.alpha)),
                    t.scale(img_a, double(fade.alpha)));
  return out;
}

QualityEncoder::QualityEncoder(const Generator& paired, int in_ch, const std::string& name,
                               std::uint64_t seed)
    : cfg_(paired.cfg_), in_ch_(in_ch), enc_(paired.enc_) {
  Rng rng(seed);
  for (int r = cfg_.base_res; r <= cfg_.resolution; r *= 2) {
    stem_[r] = ConvLayer(cat(name, ".stem", r), in_ch, cfg_.width_at(r), 3, rng);
    collect(own_params_, stem_[r]);
  }
}

std::vector<int> QualityEncoder::forward_taps(FTape& t, int x, const FadeInState& fade) const {
  check_arg(t.val(x).shape().c == in_ch_, "quality encoder expects ", in_ch_,
            " input channels, got ", t.val(x).shape().c);
  return encoder_forward(t, x, fade, cfg_, stem_, enc_, /*use_pn=*/true);
}

Discriminator::Discriminator(const NetConfig& cfg, int in_ch, const std::string& name,
                             std::uint64_t seed)
    : cfg_(cfg), in_ch_(in_ch) {
  cfg_.validate();
  Rng rng(seed);
  for (int r = cfg_.base_res; r <= cfg_.resolution; r *= 2) {
    stem_[r] = ConvLayer(cat(name, ".stem", r), in_ch, cfg_.width_at(r), 3, rng);
    enc_[r] = ConvLayer(cat(name, ".enc", r), cfg_.width_at(r), cfg_.width_at(r / 2), 3, rng);
  }
  const int w8 = cfg_.width_at(cfg_.min_res);
  post_stddev_ = ConvLayer(cat(name, ".post"), w8 + 1, w8, 3, rng);
  const int flat = w8 * cfg_.min_res * cfg_.min_res;
  head_real_ = LinearLayer(cat(name, ".real"), flat, 1, rng);
  head_attr_ = LinearLayer(cat(name, ".attr"), flat, kNumAttributes, rng);
  for (auto& [r, l] : stem_) collect(params_, l);
  for (auto& [r, l] : enc_) collect(params_, l);
  collect(params_, post_stddev_);
  collect(params_, head_real_);
  collect(params_, head_attr_);
}

DiscriminatorOutput Discriminator::forward(FTape& t, int image, const FadeInState& fade) const {
  const Shape& s = t.val(image).shape();
  check_arg(s.n >= 2, "discriminator needs batch size >= 2 (minibatch stddev), got ", s.n);
  check_arg(s.c == in_ch_, "discriminator expects ", in_ch_, " channels, got ", s.c);
  std::vector<int> taps = encoder_forward(t, image, fade, cfg_, stem_, enc_, /*use_pn=*/false);
  int f = t.minibatch_stddev(taps.back());
  f = t.leaky_relu(post_stddev_(t, f), cfg_.lrelu_slope);
  const int flat = t.flatten(f);
  DiscriminatorOutput out;
  out.score = head_real_(t, flat);
  out.attr_logits = head_attr_(t, flat);
  return out;
}

PerceptualNet::PerceptualNet(const std::string& name, std::uint64_t seed, int input_res,
                             std::vector<int> widths, int num_logits)
    : input_res_(input_res) {
  check_arg(!widths.empty(), "perceptual net needs at least one block");
  check_arg(input_res >= (1 << int(widths.size())), "input too small for block count");
  Rng rng(seed);
  int cin = 3;
  for (size_t i = 0; i < widths.size(); ++i) {
    blocks_.emplace_back(cat(name, ".b", i), cin, widths[i], 3, rng);
    cin = widths[i];
  }
  head_ = LinearLayer(cat(name, ".head"), widths.back(), num_logits, rng);
  for (const auto& l : blocks_) collect(params_, l);
  collect(params_, head_);
}

int PerceptualNet::check_input(FTape& t, int image3) const {
  const Shape& s = t.val(image3).shape();
  check_arg(s.c == 3, "perceptual net expects 3-channel input, got ", s.c);
  check_arg(s.h == input_res_ && s.w == input_res_, "perceptual net expects ",
            input_res_, "x", input_res_, " input, got ", s.h, "x", s.w);
  return image3;
}

std::vector<int> PerceptualNet::forward_taps(FTape& t, int image3) const {
  check_input(t, image3);
  std::vector<int> taps;
  int f = image3;
  for (size_t i = 0; i < blocks_.size(); ++i) {
    if (i > 0) f = t.avg_pool2(f);
    f = t.leaky_relu(blocks_[i](t, f), 0.2);
    taps.push_back(f);
  }
  return taps;
}

int PerceptualNet::features(FTape& t, int image3) const {
  return t.global_avg_pool(forward_taps(t, image3).back());
}

int PerceptualNet::logits(FTape& t, int image3) const {
  return head_(t, features(t, image3));
}

void PerceptualNet::freeze() {
  for (auto& p : params_) p->trainable = false;
}

std::string PerceptualNet::param_hash() const { return params_digest(params_); }

IdentityNet::IdentityNet(const std::string& name, std::uint64_t seed, int input_res,
                         int embed_dim, int num_classes)
    : input_res_(input_res), embed_dim_(embed_dim), num_classes_(num_classes) {
  check_arg(embed_dim >= 2 && num_classes >= 2, "bad identity net configuration");
  Rng rng(seed);
  const std::vector<int> widths = {16, 32, 64, 64};
  int cin = 3;
  for (size_t i = 0; i < widths.size(); ++i) {
    blocks_.emplace_back(cat(name, ".b", i), cin, widths[i], 3, rng);
    cin = widths[i];
  }
  fc_embed_ = LinearLayer(cat(name, ".embed"), widths.back(), embed_dim, rng);
  head_ = LinearLayer(cat(name, ".head"), embed_dim, num_classes, rng);
  for (const auto& l : blocks_) collect(params_, l);
  collect(params_, fc_embed_);
  collect(params_, head_);
}

int IdentityNet::backbone(FTape& t, int image3) const {
  const Shape& s = t.val(image3).shape();
  check_arg(s.c == 3, "identity embedder expects a 3-channel photo, got ", s.c,
            " channels");
  check_arg(s.h == input_res_ && s.w == input_res_, "identity embedder expects ",
            input_res_, "x", input_res_, " input, got ", s.h, "x", s.w);
  int f = image3;
  for (size_t i = 0; i < blocks_.size(); ++i) {
    if (i > 0) f = t.avg_pool2(f);
    f = t.leaky_relu(blocks_[i](t, f), 0.2);
  }
  return fc_embed_(t, t.global_avg_pool(f));
}

int IdentityNet::embed(FTape& t, int image3) const {
  return t.l2norm_rows(backbone(t, image3));
}

int IdentityNet::class_logits(FTape& t, int image3) const {
  return head_(t, backbone(t, image3));
}

void IdentityNet::freeze() {
  for (auto& p : params_) p->trainable = false;
}

std::string IdentityNet::param_hash() const { return params_digest(params_); }

void BundleConfig::validate() const {
  net.validate();
  check_arg(d_scales >= 1, "d_scales must be >= 1");
  // each extra scale halves the input; it must stay at or above base_res
  check_arg(net.resolution >> (d_scales - 1) >= net.base_res,
            "too many discriminator scales for the resolution");
  check_arg(sketch_channels == 1 && photo_channels == 3,
            "domain channel counts are fixed at 1 (sketch) and 3 (photo)");
}

NetworkBundle NetworkBundle::create(const BundleConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  NetworkBundle b;
  b.cfg = cfg;
  const int cond = kNumAttributes;
  b.gx = std::make_shared<Generator>(cfg.net, cfg.sketch_channels + cond, cfg.photo_channels,
                                     "gx", derive_seed(seed, 1));
  b.gy = std::make_shared<Generator>(cfg.net, cfg.photo_channels + cond, cfg.sketch_channels,
                                     "gy", derive_seed(seed, 2));
  for (int i = 0; i < cfg.d_scales; ++i) {
    NetConfig dc = cfg.net;
    dc.resolution = cfg.net.resolution >> i;
    dc.base_res = std::min(dc.base_res, dc.resolution);
    b.dx.push_back(std::make_shared<Discriminator>(dc, cfg.photo_channels, cat("dx", i),
                                                   derive_seed(seed, 3, std::uint64_t(i))));
    b.dy.push_back(std::make_shared<Discriminator>(dc, cfg.sketch_channels, cat("dy", i),
                                                   derive_seed(seed, 4, std::uint64_t(i))));
  }
  b.ex = std::make_shared<QualityEncoder>(*b.gx, cfg.photo_channels + cond, "ex",
                                          derive_seed(seed, 5));
  b.perceptual = std::make_shared<PerceptualNet>("perc", derive_seed(seed, 6),
                                                 cfg.net.resolution);
  b.identity = std::make_shared<IdentityNet>("id", derive_seed(seed, 7), cfg.net.resolution,
                                             cfg.id_embed_dim, cfg.id_classes);
  return b;
}

std::vector<std::shared_ptr<Param>> NetworkBundle::generator_params() const {
  std::vector<std::shared_ptr<Param>> out = gx->params();
  for (const auto& p : gy->params()) out.push_back(p);
  for (const auto& p : ex->own_params()) out.push_back(p);
  return out;
}

std::vector<std::shared_ptr<Param>> NetworkBundle::discriminator_params() const {
  std::vector<std::shared_ptr<Param>> out;
  for (const auto& d : dx)
    for (const auto& p : d->params()) out.push_back(p);
  for (const auto& d : dy)
    for (const auto& p : d->params()) out.push_back(p);
  return out;
}

std::string params_digest(const std::vector<std::shared_ptr<Param>>& params) {
  std::string acc;
  for (const auto& p : params) {
    acc += p->name;
    acc += ':';
    acc += tensor_digest(p->value);
    acc += '\n';
  }
  return sha256_hex(acc);
}

int to_three_channels(FTape& t, int image) {
  const int c = t.val(image).shape().c;
  if (c == 3) return image;
  check_arg(c == 1, "to_three_channels: expects 1 or 3 channels, got ", c);
  return t.concat_c(t.concat_c(image, image), image);
}

int upsample_to(FTape& t, int image, int res) {
  int cur = t.val(image).shape().h;
  int id = image;
  while (cur < res) {
    id = t.upsample2(id);
    cur *= 2;
  }
  check_arg(cur == res, "upsample_to: cannot reach ", res, " from ",
            t.val(image).shape().h);
  return id;
}

}  // namespace s2p
