#include "vld/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "vld/errors.hpp"

namespace vld {

namespace {

struct Entry {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <class T>
Entry uint_entry(std::string key, T RunConfig::*outer) {
  return {key, [key, outer](RunConfig& c, const std::string& v) { c.*outer = static_cast<T>(parse_uint(key, v)); },
          [outer](const RunConfig& c) { return std::to_string(c.*outer); }};
}

template <class F>
Entry size_entry(std::string key, F field) {
  return {key, [key, field](RunConfig& c, const std::string& v) { field(c) = static_cast<std::size_t>(parse_uint(key, v)); },
          [field](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); }};
}

template <class F>
Entry double_entry(std::string key, F field) {
  return {key, [key, field](RunConfig& c, const std::string& v) { field(c) = parse_double(key, v); },
          [field](const RunConfig& c) { return fmt_double(field(const_cast<RunConfig&>(c))); }};
}

template <class F>
Entry bool_entry(std::string key, F field) {
  return {key, [key, field](RunConfig& c, const std::string& v) { field(c) = parse_bool(key, v); },
          [field](const RunConfig& c) { return std::string(field(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(uint_entry("seed", &RunConfig::seed));
    t.push_back({"output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; },
                 [](const RunConfig& c) { return c.output_dir; }});
    t.push_back({"data.root", [](RunConfig& c, const std::string& v) { c.data_root = v; },
                 [](const RunConfig& c) { return c.data_root; }});
    t.push_back(uint_entry("data.seed", &RunConfig::data_seed));
    t.push_back(size_entry("data.identities", [](RunConfig& c) -> auto& { return c.data.identities; }));
    t.push_back(size_entry("data.train_identities", [](RunConfig& c) -> auto& { return c.data.train_identities; }));
    t.push_back(size_entry("data.tracklets_per_identity",
                           [](RunConfig& c) -> auto& { return c.data.tracklets_per_identity; }));
    t.push_back({"data.frames",
                 [](RunConfig& c, const std::string& v) {
                   c.data.frames = c.model.frames = static_cast<std::size_t>(parse_uint("data.frames", v));
                 },
                 [](const RunConfig& c) { return std::to_string(c.data.frames); }});
    t.push_back({"data.height",
                 [](RunConfig& c, const std::string& v) {
                   c.data.height = c.model.encoder.image_height = static_cast<std::size_t>(parse_uint("data.height", v));
                 },
                 [](const RunConfig& c) { return std::to_string(c.data.height); }});
    t.push_back({"data.width",
                 [](RunConfig& c, const std::string& v) {
                   c.data.width = c.model.encoder.image_width = static_cast<std::size_t>(parse_uint("data.width", v));
                 },
                 [](const RunConfig& c) { return std::to_string(c.data.width); }});
    t.push_back(size_entry("data.cameras_per_modality",
                           [](RunConfig& c) -> auto& { return c.data.cameras_per_modality; }));
    t.push_back(double_entry("data.visible_noise", [](RunConfig& c) -> auto& { return c.data.visible_noise; }));
    t.push_back(double_entry("data.infrared_noise", [](RunConfig& c) -> auto& { return c.data.infrared_noise; }));
    t.push_back(double_entry("data.infrared_bias", [](RunConfig& c) -> auto& { return c.data.infrared_bias; }));
    t.push_back(double_entry("data.twin_share", [](RunConfig& c) -> auto& { return c.data.twin_share; }));
    t.push_back(double_entry("data.stripe_gain", [](RunConfig& c) -> auto& { return c.data.stripe_gain; }));

    t.push_back(size_entry("encoder.patch_size", [](RunConfig& c) -> auto& { return c.model.encoder.patch_size; }));
    t.push_back(size_entry("encoder.depth", [](RunConfig& c) -> auto& { return c.model.encoder.depth; }));
    t.push_back(size_entry("encoder.dim", [](RunConfig& c) -> auto& { return c.model.encoder.dim; }));
    t.push_back(size_entry("encoder.heads", [](RunConfig& c) -> auto& { return c.model.encoder.heads; }));
    t.push_back(size_entry("encoder.mlp_ratio", [](RunConfig& c) -> auto& { return c.model.encoder.mlp_ratio; }));

    t.push_back(bool_entry("stp.enabled", [](RunConfig& c) -> auto& { return c.model.stp; }));
    t.push_back(size_entry("stp.insertion_layer", [](RunConfig& c) -> auto& { return c.model.insertion_layer; }));
    t.push_back({"stp.retrieval_feature",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "cls") c.model.retrieval = RetrievalFeature::kCls;
                   else if (v == "cls+hub") c.model.retrieval = RetrievalFeature::kClsAndHub;
                   else throw ConfigError("stp.retrieval_feature: expected cls or cls+hub, got '" + v + "'");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.model.retrieval == RetrievalFeature::kCls ? "cls" : "cls+hub");
                 }});

    t.push_back(bool_entry("imlp.enabled", [](RunConfig& c) -> auto& { return c.model.imlp; }));
    t.push_back(size_entry("imlp.slots", [](RunConfig& c) -> auto& { return c.model.prompt_slots; }));
    t.push_back({"imlp.template",
                 [](RunConfig& c, const std::string& v) {
                   c.model.prompt_template = static_cast<int>(parse_uint("imlp.template", v));
                   prompt_template(c.model.prompt_template);
                 },
                 [](const RunConfig& c) { return std::to_string(c.model.prompt_template); }});
    t.push_back(size_entry("imlp.text_heads", [](RunConfig& c) -> auto& { return c.model.text_heads; }));
    t.push_back(size_entry("imlp.text_layers", [](RunConfig& c) -> auto& { return c.model.text_layers; }));
    t.push_back(double_entry("imlp.logit_scale", [](RunConfig& c) -> auto& { return c.model.initial_logit_scale; }));

    t.push_back(double_entry("loss.lambda_v2t", [](RunConfig& c) -> auto& { return c.model.weights.v2t; }));
    t.push_back(double_entry("loss.lambda_id_hub", [](RunConfig& c) -> auto& { return c.model.weights.id_hub; }));
    t.push_back(double_entry("loss.lambda_wrt_hub", [](RunConfig& c) -> auto& { return c.model.weights.wrt_hub; }));

    t.push_back(size_entry("train.epochs", [](RunConfig& c) -> auto& { return c.train.epochs; }));
    t.push_back(double_entry("train.lr", [](RunConfig& c) -> auto& { return c.train.base_lr; }));
    t.push_back(double_entry("train.prompt_lr_multiplier",
                             [](RunConfig& c) -> auto& { return c.train.adam.prompt_lr_multiplier; }));
    t.push_back(double_entry("train.beta1", [](RunConfig& c) -> auto& { return c.train.adam.beta1; }));
    t.push_back(double_entry("train.beta2", [](RunConfig& c) -> auto& { return c.train.adam.beta2; }));
    t.push_back(double_entry("train.eps", [](RunConfig& c) -> auto& { return c.train.adam.eps; }));
    t.push_back(size_entry("train.identities_per_batch", [](RunConfig& c) -> auto& { return c.train.batch.identities; }));
    t.push_back(size_entry("train.tracklets_per_identity", [](RunConfig& c) -> auto& { return c.train.batch.tracklets; }));
    t.push_back(size_entry("train.eval_every", [](RunConfig& c) -> auto& { return c.train.eval_every; }));

    t.push_back(bool_entry("augment.enabled", [](RunConfig& c) -> auto& { return c.train.augment.enabled; }));
    t.push_back(double_entry("augment.flip", [](RunConfig& c) -> auto& { return c.train.augment.flip_prob; }));
    t.push_back(size_entry("augment.pad", [](RunConfig& c) -> auto& { return c.train.augment.pad; }));
    t.push_back(double_entry("augment.erase", [](RunConfig& c) -> auto& { return c.train.augment.erase_prob; }));
    t.push_back(double_entry("augment.swap", [](RunConfig& c) -> auto& { return c.train.augment.swap_prob; }));
    return t;
  }();
  return table;
}

const Entry* find_entry(const std::string& key) {
  for (const auto& e : entries())
    if (e.key == key) return &e;
  return nullptr;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::validate() const {
  data.validate();
  model.encoder.validate();
  if (model.frames != data.frames) throw ConfigError("model frames differ from data.frames");
  if (model.encoder.image_height != data.height || model.encoder.image_width != data.width) {
    throw ConfigError("encoder image size differs from data.height x data.width");
  }
  if (model.stp && model.insertion_layer >= model.encoder.depth) {
    throw ConfigError("stp.insertion_layer " + std::to_string(model.insertion_layer) + " must be below encoder.depth " +
                      std::to_string(model.encoder.depth));
  }
  if (model.weights.v2t < 0 || model.weights.id_hub < 0 || model.weights.wrt_hub < 0) {
    throw ConfigError("loss weights must be nonnegative");
  }
  if (train.epochs == 0) throw ConfigError("train.epochs must be positive");
  if (!(train.base_lr > 0)) throw ConfigError("train.lr must be positive");
  if (train.batch.identities < 2 || train.batch.tracklets < 1) {
    throw ConfigError("batch needs at least 2 identities and 1 tracklet per identity");
  }
  if (train.eval_every == 0) throw ConfigError("train.eval_every must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  const Entry* e = find_entry(key);
  if (!e) throw ConfigError("unknown config key '" + key + "'");
  e->set(config, value);
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto where = origin + ":" + std::to_string(line_no) + ": ";
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& err) {
      throw ConfigError(where + err.what());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& e : entries()) out += e.key + " = " + e.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.push_back(e.key);
  return keys;
}

void apply_env_overrides(RunConfig& config) {
  if (const char* seed = std::getenv("VLD_SEED"); seed && *seed) {
    config.seed = parse_uint("VLD_SEED", seed);
  }
}

}  // namespace vld
