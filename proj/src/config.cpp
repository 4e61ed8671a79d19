#include "s2p/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace s2p {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_ints(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    check_arg(!item.empty(), "empty entry in integer list: ", s);
    out.push_back(std::stoi(item));
  }
  return out;
}

// field table shared by serialize and parse so the two cannot drift
struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
  bool training_relevant;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    auto add = [&v](std::string key, auto getter, auto setter, bool rel = true) {
      v.push_back({std::move(key), getter, setter, rel});
    };
    add("seed", [](const RunConfig& c) { return std::to_string(c.seed); },
        [](RunConfig& c, const std::string& s) { c.seed = std::stoull(s); });
    add("batch_size", [](const RunConfig& c) { return std::to_string(c.batch_size); },
        [](RunConfig& c, const std::string& s) { c.batch_size = std::stoi(s); });
    add("epochs_flat", [](const RunConfig& c) { return std::to_string(c.epochs_flat); },
        [](RunConfig& c, const std::string& s) { c.epochs_flat = std::stoi(s); });
    add("epochs_decay", [](const RunConfig& c) { return std::to_string(c.epochs_decay); },
        [](RunConfig& c, const std::string& s) { c.epochs_decay = std::stoi(s); });
    add("base_lr", [](const RunConfig& c) { return fmt_double(c.base_lr); },
        [](RunConfig& c, const std::string& s) { c.base_lr = std::stod(s); });
    add("adam_beta1", [](const RunConfig& c) { return fmt_double(c.adam_beta1); },
        [](RunConfig& c, const std::string& s) { c.adam_beta1 = std::stod(s); });
    add("adam_beta2", [](const RunConfig& c) { return fmt_double(c.adam_beta2); },
        [](RunConfig& c, const std::string& s) { c.adam_beta2 = std::stod(s); });
    add("clip_norm", [](const RunConfig& c) { return fmt_double(c.clip_norm); },
        [](RunConfig& c, const std::string& s) { c.clip_norm = std::stod(s); });
    add("clip_enabled", [](const RunConfig& c) { return c.clip_enabled ? "true" : "false"; },
        [](RunConfig& c, const std::string& s) {
          check_arg(s == "true" || s == "false", "clip_enabled must be true or false");
          c.clip_enabled = s == "true";
        });
    add("d_steps_per_g", [](const RunConfig& c) { return std::to_string(c.d_steps_per_g); },
        [](RunConfig& c, const std::string& s) { c.d_steps_per_g = std::stoi(s); });
    add("lambda1", [](const RunConfig& c) { return fmt_double(c.weights.lambda1); },
        [](RunConfig& c, const std::string& s) { c.weights.lambda1 = std::stod(s); });
    add("lambda2", [](const RunConfig& c) { return fmt_double(c.weights.lambda2); },
        [](RunConfig& c, const std::string& s) { c.weights.lambda2 = std::stod(s); });
    add("lambda3", [](const RunConfig& c) { return fmt_double(c.weights.lambda3); },
        [](RunConfig& c, const std::string& s) { c.weights.lambda3 = std::stod(s); });
    add("lambda4", [](const RunConfig& c) { return fmt_double(c.weights.lambda4); },
        [](RunConfig& c, const std::string& s) { c.weights.lambda4 = std::stod(s); });
    add("lambda5", [](const RunConfig& c) { return fmt_double(c.weights.lambda5); },
        [](RunConfig& c, const std::string& s) { c.weights.lambda5 = std::stod(s); });
    add("lambda6", [](const RunConfig& c) { return fmt_double(c.weights.lambda6); },
        [](RunConfig& c, const std::string& s) { c.weights.lambda6 = std::stod(s); });
    add("margin", [](const RunConfig& c) { return fmt_double(c.weights.margin_m); },
        [](RunConfig& c, const std::string& s) { c.weights.margin_m = std::stod(s); });
    add("pixelnorm_eps", [](const RunConfig& c) { return fmt_double(c.weights.pixelnorm_eps); },
        [](RunConfig& c, const std::string& s) { c.weights.pixelnorm_eps = std::stod(s); });
    add("resolution", [](const RunConfig& c) { return std::to_string(c.resolution); },
        [](RunConfig& c, const std::string& s) { c.resolution = std::stoi(s); });
    add("base_res", [](const RunConfig& c) { return std::to_string(c.base_res); },
        [](RunConfig& c, const std::string& s) { c.base_res = std::stoi(s); });
    add("base_width", [](const RunConfig& c) { return std::to_string(c.base_width); },
        [](RunConfig& c, const std::string& s) { c.base_width = std::stoi(s); });
    add("max_width", [](const RunConfig& c) { return std::to_string(c.max_width); },
        [](RunConfig& c, const std::string& s) { c.max_width = std::stoi(s); });
    add("d_scales", [](const RunConfig& c) { return std::to_string(c.d_scales); },
        [](RunConfig& c, const std::string& s) { c.d_scales = std::stoi(s); });
    add("id_embed_dim", [](const RunConfig& c) { return std::to_string(c.id_embed_dim); },
        [](RunConfig& c, const std::string& s) { c.id_embed_dim = std::stoi(s); });
    add("fade_schedule", [](const RunConfig& c) { return c.fade_schedule; },
        [](RunConfig& c, const std::string& s) { c.fade_schedule = s; });
    add("fade_fraction", [](const RunConfig& c) { return fmt_double(c.fade_fraction); },
        [](RunConfig& c, const std::string& s) { c.fade_fraction = std::stod(s); });
    add("rec_taps", [](const RunConfig& c) { return fmt_ints(c.rec_taps); },
        [](RunConfig& c, const std::string& s) { c.rec_taps = parse_ints(s); });
    add("content_taps", [](const RunConfig& c) { return fmt_ints(c.content_taps); },
        [](RunConfig& c, const std::string& s) { c.content_taps = parse_ints(s); });
    add("style_taps", [](const RunConfig& c) { return fmt_ints(c.style_taps); },
        [](RunConfig& c, const std::string& s) { c.style_taps = parse_ints(s); });
    add("pretrain_steps", [](const RunConfig& c) { return std::to_string(c.pretrain_steps); },
        [](RunConfig& c, const std::string& s) { c.pretrain_steps = std::stoi(s); });
    add("pretrain_batch", [](const RunConfig& c) { return std::to_string(c.pretrain_batch); },
        [](RunConfig& c, const std::string& s) { c.pretrain_batch = std::stoi(s); });
    add("pretrain_lr", [](const RunConfig& c) { return fmt_double(c.pretrain_lr); },
        [](RunConfig& c, const std::string& s) { c.pretrain_lr = std::stod(s); });
    add("checkpoint_interval",
        [](const RunConfig& c) { return std::to_string(c.checkpoint_interval); },
        [](RunConfig& c, const std::string& s) { c.checkpoint_interval = std::stoi(s); },
        /*rel=*/false);
    add("xdog_sigma", [](const RunConfig& c) { return fmt_double(c.xdog.sigma); },
        [](RunConfig& c, const std::string& s) { c.xdog.sigma = std::stod(s); });
    add("xdog_k", [](const RunConfig& c) { return fmt_double(c.xdog.k); },
        [](RunConfig& c, const std::string& s) { c.xdog.k = std::stod(s); });
    add("xdog_tau", [](const RunConfig& c) { return fmt_double(c.xdog.tau); },
        [](RunConfig& c, const std::string& s) { c.xdog.tau = std::stod(s); });
    add("xdog_epsilon", [](const RunConfig& c) { return fmt_double(c.xdog.epsilon_t); },
        [](RunConfig& c, const std::string& s) { c.xdog.epsilon_t = std::stod(s); });
    add("xdog_phi", [](const RunConfig& c) { return fmt_double(c.xdog.phi); },
        [](RunConfig& c, const std::string& s) { c.xdog.phi = std::stod(s); });
    add("data_dir", [](const RunConfig& c) { return c.data_dir; },
        [](RunConfig& c, const std::string& s) { c.data_dir = s; }, /*rel=*/false);
    add("out_dir", [](const RunConfig& c) { return c.out_dir; },
        [](RunConfig& c, const std::string& s) { c.out_dir = s; }, /*rel=*/false);
    return v;
  }();
  return f;
}

}  // namespace

void RunConfig::validate() const {
  check_arg(batch_size >= 2, "batch_size must be >= 2 (minibatch stddev), got ", batch_size);
  check_arg(epochs_flat >= 0 && epochs_decay >= 0, "epoch counts must be non-negative");
  check_arg(base_lr >= 0, "base_lr must be non-negative");
  check_arg(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1,
            "Adam betas must lie in [0, 1)");
  check_arg(d_steps_per_g >= 1, "d_steps_per_g must be >= 1");
  check_arg(fade_fraction > 0 && fade_fraction <= 1, "fade_fraction must be in (0, 1]");
  check_arg(pretrain_steps >= 1 && pretrain_batch >= 2, "bad pretraining configuration");
  check_arg(checkpoint_interval >= 1, "checkpoint_interval must be >= 1");
  check_arg(!rec_taps.empty() && !content_taps.empty() && !style_taps.empty(),
            "tap lists must be non-empty");
  weights.validate();
  xdog.validate();
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += '=';
    out += f.get(*this);
    out += '\n';
  }
  return out;
}

RunConfig RunConfig::parse_text(const std::string& text) {
  std::map<std::string, const Field*> by_key;
  for (const auto& f : fields()) by_key[f.key] = &f;
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // strip comments and whitespace-only lines
    if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto eq = line.find('=');
    check_arg(eq != std::string::npos, "config line ", lineno, " is not key=value: ", line);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    auto it = by_key.find(key);
    check_arg(it != by_key.end(), "unknown config key '", key, "' on line ", lineno);
    try {
      it->second->set(cfg, value);
    } catch (const ArgumentError&) {
      throw;
    } catch (const std::exception&) {
      throw ArgumentError(cat("bad value for config key '", key, "': ", value));
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(cat("cannot open config file: ", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(cat("cannot write config file: ", path));
  out << serialize();
}

void RunConfig::check_resume_compatible(const RunConfig& other) const {
  for (const auto& f : fields()) {
    if (!f.training_relevant) continue;
    const std::string a = f.get(*this), b = f.get(other);
    if (a != b)
      throw DataError(cat("resume config mismatch in field '", f.key, "': checkpoint has ",
                          b, ", requested ", a));
  }
}

double lr_schedule(int epoch, const RunConfig& cfg) {
  check_arg(epoch >= 0, "epoch must be non-negative");
  if (epoch < cfg.epochs_flat) return cfg.base_lr;
  const int into_decay = epoch - cfg.epochs_flat;
  if (into_decay >= cfg.epochs_decay) return 0.0;
  return cfg.base_lr * (1.0 - double(into_decay) / double(cfg.epochs_decay));
}

}  // namespace s2p
