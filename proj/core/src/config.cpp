#include "alrgan/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "alrgan/errors.hpp"

namespace alrgan {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("config: '" + std::string(key) + "' expects a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("config: '" + std::string(key) + "' expects a real number, got '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: '" + std::string(key) + "' expects true/false, got '" + std::string(v) + "'");
}

std::string format_real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
  bool architecture = false;
};

template <typename T>
Field size_field(T GanConfig::*m, bool arch) {
  return {[m](RunConfig& c, std::string_view k, std::string_view v) { c.gan.*m = static_cast<T>(parse_uint(k, v)); },
          [m](const RunConfig& c) { return std::to_string(c.gan.*m); }, arch};
}

Field real_field(double GanConfig::*m, bool arch) {
  return {[m](RunConfig& c, std::string_view k, std::string_view v) { c.gan.*m = parse_real(k, v); },
          [m](const RunConfig& c) { return format_real(c.gan.*m); }, arch};
}

Field bool_field(bool GanConfig::*m) {
  return {[m](RunConfig& c, std::string_view k, std::string_view v) { c.gan.*m = parse_bool(k, v); },
          [m](const RunConfig& c) { return std::string(c.gan.*m ? "true" : "false"); }, true};
}

template <typename T>
Field run_uint_field(T RunConfig::*m) {
  return {[m](RunConfig& c, std::string_view k, std::string_view v) { c.*m = static_cast<T>(parse_uint(k, v)); },
          [m](const RunConfig& c) { return std::to_string(c.*m); }, false};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"stages", size_field(&GanConfig::stages, true)},
      {"base", size_field(&GanConfig::base, true)},
      {"d", size_field(&GanConfig::d, true)},
      {"d_s", size_field(&GanConfig::d_s, true)},
      {"d_z", size_field(&GanConfig::d_z, true)},
      {"t", size_field(&GanConfig::t, true)},
      {"batch", size_field(&GanConfig::batch, true)},
      {"steps", size_field(&GanConfig::steps, false)},
      {"gamma", real_field(&GanConfig::gamma, true)},
      {"eta1", real_field(&GanConfig::eta1, true)},
      {"eta2", real_field(&GanConfig::eta2, true)},
      {"lambda1", real_field(&GanConfig::lambda1, true)},
      {"lambda2", real_field(&GanConfig::lambda2, true)},
      {"kl_weight", real_field(&GanConfig::kl_weight, true)},
      {"tau", real_field(&GanConfig::tau, true)},
      {"attn_sharpness", real_field(&GanConfig::attn_sharpness, true)},
      {"lr_g", real_field(&GanConfig::lr_g, false)},
      {"lr_d", real_field(&GanConfig::lr_d, false)},
      {"beta1", real_field(&GanConfig::beta1, false)},
      {"beta2", real_field(&GanConfig::beta2, false)},
      {"d_grad_clip", real_field(&GanConfig::d_grad_clip, false)},
      {"alr", bool_field(&GanConfig::alr)},
      {"pr", bool_field(&GanConfig::pr)},
      {"sr", bool_field(&GanConfig::sr)},
      {"rec", bool_field(&GanConfig::rec)},
      {"adaptive_weights", bool_field(&GanConfig::adaptive_weights)},
      {"kl", bool_field(&GanConfig::kl)},
      {"stop_grad_star", bool_field(&GanConfig::stop_grad_star)},
      {"seed", size_field(&GanConfig::seed, false)},
      {"dataset_size", run_uint_field(&RunConfig::dataset_size)},
      {"eval_size", run_uint_field(&RunConfig::eval_size)},
      {"eval_seed_offset", run_uint_field(&RunConfig::eval_seed_offset)},
      {"eval_every", run_uint_field(&RunConfig::eval_every)},
      {"checkpoint_every", run_uint_field(&RunConfig::checkpoint_every)},
      {"output_dir",
       {[](RunConfig& c, std::string_view, std::string_view v) { c.output_dir = std::string(v); },
        [](const RunConfig& c) { return c.output_dir; }, false}},
  };
  return table;
}

const Field& field(std::string_view key) {
  for (const auto& [name, f] : fields())
    if (name == key) return f;
  throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

}  // namespace

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  field(key).set(config, key, value);
}

std::string get_config_value(const RunConfig& config, std::string_view key) { return field(key).get(config); }

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [name, f] : fields()) out.push_back(name);
  return out;
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate(config.gan);
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize(const RunConfig& config) {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(config) + "\n";
  return out;
}

void validate(const GanConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
  if (c.stages < 1) fail("stages must be at least 1");
  if (c.base < 4 || c.base % 4 != 0) fail("base resolution must be a positive multiple of 4");
  if (c.d == 0 || c.d_s == 0 || c.d_z == 0 || c.t == 0) fail("widths must be positive");
  if (c.d < c.t) fail("d must be at least t");
  if (c.batch < 2) fail("batch must be at least 2 for the matching loss");
  if (!(c.gamma >= 0 && c.gamma <= 1)) fail("gamma must lie in [0, 1]");
  if (c.eta1 < 0 || c.eta2 < 0 || c.lambda1 < 0 || c.lambda2 < 0 || c.kl_weight < 0) fail("loss weights must be non-negative");
  if (!(c.tau > 0) || !(c.attn_sharpness > 0)) fail("tau and attn_sharpness must be positive");
  if (!(c.lr_g >= 0) || !(c.lr_d >= 0)) fail("learning rates must be non-negative");
  if (!(c.beta1 >= 0 && c.beta1 < 1) || !(c.beta2 >= 0 && c.beta2 < 1)) fail("Adam betas must lie in [0, 1)");
  if (!(c.d_grad_clip > 0)) fail("d_grad_clip must be positive");
}

std::uint64_t architecture_hash(const GanConfig& config) {
  RunConfig rc;
  rc.gan = config;
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [name, f] : fields()) {
    if (!f.architecture) continue;
    for (char ch : name + "=" + f.get(rc) + ";") {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace alrgan
