// s2p: attribute-conditioned sketch-to-photo GAN, operator surface.
//
// Subcommands: toygen (procedural dataset), prepare (XDoG sketches),
// train (min-max loop), synth (attribute spectrum from one sketch),
// eval (metrics report). Exit codes: 0 ok, 2 usage, 3 data/io, 4 numeric.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "s2p/evaluate.hpp"
#include "s2p/image_io.hpp"
#include "s2p/toyset.hpp"
#include "s2p/trainer.hpp"
#include "s2p/xdog.hpp"

namespace fs = std::filesystem;
using namespace s2p;

namespace {

AttributeVector parse_attr_spec(const std::string& spec) {
  AttributeVector v;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    check_arg(eq != std::string::npos, "attribute spec entries must be name=0|1, got: ", item);
    const std::string name = item.substr(0, eq);
    const std::string val = item.substr(eq + 1);
    check_arg(val == "0" || val == "1", "attribute value must be 0 or 1 in: ", item);
    int idx = -1;
    for (int i = 0; i < kNumAttributes; ++i)
      if (kAttributeNames[size_t(i)] == name) idx = i;
    check_arg(idx >= 0, "unknown attribute name: ", name);
    v[idx] = std::uint8_t(val == "1");
  }
  v.validate();
  return v;
}

int cmd_toygen(int subjects, int per_subject, int size, std::uint64_t seed,
               const std::string& out) {
  DatasetManifest m = generate_toy_dataset(subjects, per_subject, size, size, seed, out);
  std::printf("wrote %zu images under %s\n", m.records.size(), out.c_str());
  std::printf("content_hash=%s\n", m.content_hash.c_str());
  return 0;
}

int cmd_prepare(const std::string& data_dir, const XdogParams& params, bool force) {
  DatasetManifest m = prepare_sketches(data_dir, params, force);
  std::printf("wrote %zu sketches under %s\n", m.records.size(),
              (fs::path(m.base_dir) / "sketches").string().c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg, bool resume, long run_until) {
  DatasetManifest m = DatasetManifest::load(cfg.data_dir);
  FitResult r = fit(m, cfg, resume, run_until);
  std::printf("trained %ld step(s), checkpoint at %s\n", r.steps_done,
              r.checkpoint_dir.c_str());
  return 0;
}

int cmd_synth(const std::string& checkpoint, const std::string& sketch_path,
              const std::vector<std::string>& attr_specs, const std::string& out_dir) {
  check_arg(!attr_specs.empty(), "synth needs at least one --attrs spec");
  LoadedRun run = load_run(checkpoint);
  const int res = run.fade.resolution;
  Tensor sketch = load_image(sketch_path, res, res);
  check_data(sketch.shape().c == 1, "synth expects a single-channel sketch input");

  fs::create_directories(out_dir);
  const std::string stem = fs::path(sketch_path).stem().string();
  for (const auto& spec : attr_specs) {
    const AttributeVector attrs = parse_attr_spec(spec);
    FTape t;
    const int cond = concat_condition_node(t, t.leaf(sketch), {attrs});
    const int img = run.bundle.gx->forward(t, cond, run.fade).image;
    const std::string name = cat(stem, "_attrs-", attrs.str(), ".png");
    save_image(t.val(img), (fs::path(out_dir) / name).string());
    std::printf("wrote %s\n", (fs::path(out_dir) / name).string().c_str());
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& out_dir, std::uint64_t seed) {
  DatasetManifest m = DatasetManifest::load(data_dir);
  EvalReport rep = evaluate_checkpoint(checkpoint, m, out_dir, seed);
  std::printf("step=%ld ssim=%.4f toy-fid=%.4f toy-is=%.4f cycle_l1=%.4f "
              "attr_acc=%.4f target_rate=%.4f cmc1=%.4f\n",
              rep.step, rep.ssim_mean, rep.fid_value, rep.inception, rep.cycle_l1_mean,
              rep.attr_accuracy, rep.target_attr_rate,
              rep.cmc.empty() ? 0.0 : rep.cmc[0]);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attribute-conditioned sketch-to-photo GAN"};
  app.require_subcommand(1);

  // toygen
  auto* toygen = app.add_subcommand("toygen", "generate the procedural toy dataset");
  int tg_subjects = 50, tg_per = 4, tg_size = 64;
  std::uint64_t tg_seed = 7;
  std::string tg_out = "data";
  toygen->add_option("--subjects", tg_subjects, "number of identities (>= 2)")
      ->capture_default_str();
  toygen->add_option("--per-subject", tg_per, "images per identity")->capture_default_str();
  toygen->add_option("--size", tg_size, "image side length (power of two)")
      ->capture_default_str();
  toygen->add_option("--seed", tg_seed, "generator seed")->capture_default_str();
  toygen->add_option("--out", tg_out, "output directory")->capture_default_str();

  // prepare
  auto* prepare = app.add_subcommand("prepare", "synthesize XDoG sketches for a dataset");
  std::string pr_data = "data";
  XdogParams pr_params;
  bool pr_force = false;
  prepare->add_option("--data", pr_data, "dataset directory (with manifest.csv)")
      ->capture_default_str();
  prepare->add_option("--sigma", pr_params.sigma, "Gaussian blur scale, pixels")
      ->capture_default_str();
  prepare->add_option("--k", pr_params.k, "scale ratio between the Gaussians (> 1)")
      ->capture_default_str();
  prepare->add_option("--tau", pr_params.tau, "DoG sharpening weight")
      ->capture_default_str();
  prepare->add_option("--epsilon", pr_params.epsilon_t, "soft-threshold level")
      ->capture_default_str();
  prepare->add_option("--phi", pr_params.phi, "threshold steepness (>= 0)")
      ->capture_default_str();
  prepare->add_flag("--force", pr_force, "overwrite existing sketches");

  // train
  auto* train = app.add_subcommand("train", "run the min-max training loop");
  std::string tr_config;
  bool tr_resume = false;
  long tr_until = 0;
  RunConfig tr_cfg;
  train->add_option("--config", tr_config, "config file (key=value lines)");
  train->add_option("--data", tr_cfg.data_dir, "dataset directory")->capture_default_str();
  train->add_option("--out", tr_cfg.out_dir, "checkpoint/output directory")
      ->capture_default_str();
  train->add_flag("--resume", tr_resume, "resume from the checkpoint in --out");
  train->add_option("--until-step", tr_until,
                    "stop after this global step (0 = run to completion)")
      ->capture_default_str();
  std::uint64_t tr_seed = 0;
  auto* tr_seed_opt = train->add_option("--seed", tr_seed, "override the config seed");
  std::vector<std::string> tr_set;
  train->add_option("--set", tr_set, "override any config key (key=value, repeatable)");

  // synth
  auto* synth = app.add_subcommand("synth", "translate one sketch under chosen attributes");
  std::string sy_ckpt, sy_sketch, sy_out = "synth_out";
  std::vector<std::string> sy_attrs;
  synth->add_option("--checkpoint", sy_ckpt, "checkpoint directory")->required();
  synth->add_option("--sketch", sy_sketch, "input sketch PNG")->required();
  synth->add_option("--attrs", sy_attrs,
                    "attribute spec like black_hair=1,young=1 (repeatable)");
  synth->add_option("--out", sy_out, "output directory")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  std::string ev_ckpt, ev_data = "data", ev_out = "eval_out";
  std::uint64_t ev_seed = 7;
  eval->add_option("--checkpoint", ev_ckpt, "checkpoint directory")->required();
  eval->add_option("--data", ev_data, "dataset directory")->capture_default_str();
  eval->add_option("--out", ev_out, "report output directory")->capture_default_str();
  eval->add_option("--seed", ev_seed, "target-attribute sampling seed")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (toygen->parsed()) return cmd_toygen(tg_subjects, tg_per, tg_size, tg_seed, tg_out);
    if (prepare->parsed()) return cmd_prepare(pr_data, pr_params, pr_force);
    if (train->parsed()) {
      RunConfig cfg = tr_cfg;
      if (!tr_config.empty()) {
        cfg = RunConfig::load(tr_config);
        // flags override config-file values
        if (!tr_cfg.data_dir.empty()) cfg.data_dir = tr_cfg.data_dir;
        if (!tr_cfg.out_dir.empty()) cfg.out_dir = tr_cfg.out_dir;
      }
      std::string extra;
      for (const auto& kv : tr_set) {
        check_arg(kv.find('=') != std::string::npos, "--set expects key=value, got: ", kv);
        extra += kv + "\n";
      }
      if (!extra.empty()) cfg = RunConfig::parse_text(cfg.serialize() + extra);
      if (tr_seed_opt->count() > 0) cfg.seed = tr_seed;
      check_arg(!cfg.data_dir.empty(), "train: --data (or data_dir in the config) is required");
      check_arg(!cfg.out_dir.empty(), "train: --out (or out_dir in the config) is required");
      return cmd_train(cfg, tr_resume, tr_until);
    }
    if (synth->parsed()) return cmd_synth(sy_ckpt, sy_sketch, sy_attrs, sy_out);
    if (eval->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_out, ev_seed);
  } catch (const ArgumentError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 2;
}
