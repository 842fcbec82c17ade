#include "io/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <vector>

namespace flowseed::io {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw std::runtime_error("config: bad numeric value for '" + key + "': " + v);
  }
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const long d = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(d);
  } catch (...) {
    throw std::runtime_error("config: bad integer value for '" + key + "': " + v);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const unsigned long long d = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw std::runtime_error("config: bad seed value for '" + key + "': " + v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::runtime_error("config: bad boolean value for '" + key + "': " + v);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"sigma", [](RunConfig& c, const std::string& k, const std::string& v) { c.sigma = parse_double(k, v); }},
      {"eps_flow", [](RunConfig& c, const std::string& k, const std::string& v) { c.eps_flow = parse_double(k, v); }},
      {"cos_floor", [](RunConfig& c, const std::string& k, const std::string& v) { c.cos_floor = parse_double(k, v); }},
      {"neighborhood_radius", [](RunConfig& c, const std::string& k, const std::string& v) { c.neighborhood_radius = parse_int(k, v); }},
      {"anchors_per_image", [](RunConfig& c, const std::string& k, const std::string& v) { c.anchors_per_image = parse_int(k, v); }},
      {"embedding_dim", [](RunConfig& c, const std::string& k, const std::string& v) { c.embedding_dim = parse_int(k, v); }},
      {"levels", [](RunConfig& c, const std::string& k, const std::string& v) { c.levels = parse_int(k, v); }},
      {"base_channels", [](RunConfig& c, const std::string& k, const std::string& v) { c.base_channels = parse_int(k, v); }},
      {"pretrain_epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.pretrain_epochs = parse_int(k, v); }},
      {"finetune_epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.finetune_epochs = parse_int(k, v); }},
      {"learning_rate", [](RunConfig& c, const std::string& k, const std::string& v) { c.learning_rate = parse_double(k, v); }},
      {"batch_size", [](RunConfig& c, const std::string& k, const std::string& v) { c.batch_size = parse_int(k, v); }},
      {"labeled_count", [](RunConfig& c, const std::string& k, const std::string& v) { c.labeled_count = parse_int(k, v); }},
      {"master_seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.master_seed = parse_u64(k, v); }},
      {"eval_every", [](RunConfig& c, const std::string& k, const std::string& v) { c.eval_every = parse_int(k, v); }},
      {"freeze_backbone", [](RunConfig& c, const std::string& k, const std::string& v) { c.freeze_backbone = parse_bool(k, v); }},
      {"test_fraction", [](RunConfig& c, const std::string& k, const std::string& v) { c.test_fraction = parse_double(k, v); }},
      {"hflip_prob", [](RunConfig& c, const std::string& k, const std::string& v) { c.hflip_prob = parse_double(k, v); }},
      {"rotation_deg", [](RunConfig& c, const std::string& k, const std::string& v) { c.rotation_deg = parse_double(k, v); }},
      {"scale_min", [](RunConfig& c, const std::string& k, const std::string& v) { c.scale_min = parse_double(k, v); }},
      {"scale_max", [](RunConfig& c, const std::string& k, const std::string& v) { c.scale_max = parse_double(k, v); }},
      {"shear_deg", [](RunConfig& c, const std::string& k, const std::string& v) { c.shear_deg = parse_double(k, v); }},
      {"occlusion_tol", [](RunConfig& c, const std::string& k, const std::string& v) { c.occlusion_tol = parse_double(k, v); }},
      {"shift_dx", [](RunConfig& c, const std::string& k, const std::string& v) { c.shift_dx = parse_int(k, v); }},
      {"shift_dy", [](RunConfig& c, const std::string& k, const std::string& v) { c.shift_dy = parse_int(k, v); }},
      {"data_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.data_dir = v; }},
      {"out_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
  };
  return table;
}

void validate(const RunConfig& c) {
  auto fail = [](const std::string& msg) { throw std::runtime_error("config: " + msg); };
  if (c.sigma <= 0.0) fail("sigma must be positive");
  if (c.eps_flow <= 0.0) fail("eps_flow must be positive");
  if (c.cos_floor <= 0.0 || c.cos_floor >= 1.0) fail("cos_floor must be in (0, 1)");
  if (c.neighborhood_radius < 1) fail("neighborhood_radius must be at least 1");
  if (c.anchors_per_image < 1) fail("anchors_per_image must be positive");
  if (c.embedding_dim < 1) fail("embedding_dim must be positive");
  if (c.levels < 1) fail("levels must be positive");
  if (c.base_channels < 1) fail("base_channels must be positive");
  if (c.pretrain_epochs < 1) fail("pretrain_epochs must be at least 1");
  if (c.finetune_epochs < 1) fail("finetune_epochs must be at least 1");
  if (c.learning_rate <= 0.0) fail("learning_rate must be positive");
  if (c.batch_size < 1) fail("batch_size must be positive");
  if (c.labeled_count < 1) fail("labeled_count must be at least 1");
  if (c.eval_every < 1) fail("eval_every must be at least 1");
  if (c.test_fraction < 0.0 || c.test_fraction >= 1.0) fail("test_fraction must be in [0, 1)");
  if (c.scale_min <= 0.0 || c.scale_max < c.scale_min) fail("bad scale range");
  if (c.hflip_prob < 0.0 || c.hflip_prob > 1.0) fail("hflip_prob must be in [0, 1]");
  if (c.occlusion_tol <= 0.0) fail("occlusion_tol must be positive");
}

}  // namespace

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: could not open " + path);
  RunConfig cfg;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(lineno) +
                               " is not 'key = value': " + stripped);
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end())
      throw std::runtime_error("config: unknown key '" + key + "' at line " +
                               std::to_string(lineno));
    it->second(cfg, key, value);
    seen.insert(key);
  }
  validate(cfg);
  return cfg;
}

void log_config(const RunConfig& c, std::ostream& os) {
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  const std::vector<std::pair<std::string, std::string>> rows = {
      {"sigma", num(c.sigma)},
      {"eps_flow", num(c.eps_flow)},
      {"cos_floor", num(c.cos_floor)},
      {"neighborhood_radius", std::to_string(c.neighborhood_radius)},
      {"anchors_per_image", std::to_string(c.anchors_per_image)},
      {"embedding_dim", std::to_string(c.embedding_dim)},
      {"levels", std::to_string(c.levels)},
      {"base_channels", std::to_string(c.base_channels)},
      {"pretrain_epochs", std::to_string(c.pretrain_epochs)},
      {"finetune_epochs", std::to_string(c.finetune_epochs)},
      {"learning_rate", num(c.learning_rate)},
      {"batch_size", std::to_string(c.batch_size)},
      {"labeled_count", std::to_string(c.labeled_count)},
      {"master_seed", std::to_string(c.master_seed)},
      {"eval_every", std::to_string(c.eval_every)},
      {"freeze_backbone", c.freeze_backbone ? "true" : "false"},
      {"test_fraction", num(c.test_fraction)},
      {"hflip_prob", num(c.hflip_prob)},
      {"rotation_deg", num(c.rotation_deg)},
      {"scale_min", num(c.scale_min)},
      {"scale_max", num(c.scale_max)},
      {"shear_deg", num(c.shear_deg)},
      {"occlusion_tol", num(c.occlusion_tol)},
      {"shift_dx", std::to_string(c.shift_dx)},
      {"shift_dy", std::to_string(c.shift_dy)},
      {"data_dir", c.data_dir},
      {"out_dir", c.out_dir},
  };
  os << "resolved configuration:\n";
  for (const auto& [k, v] : rows) os << "  " << k << " = " << v << "\n";
}

}  // namespace flowseed::io
