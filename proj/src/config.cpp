#include "lucid/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace lucid {

namespace {

std::string strip(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ParseError("config: bad number for " + key + ": '" + v + "'");
  }
}

int parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    int i = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ParseError("config: bad integer for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<int> parse_offsets(const std::string& v) {
  std::vector<int> out;
  std::string token;
  std::istringstream in(v);
  while (std::getline(in, token, ',')) {
    token = strip(token);
    if (token.empty()) continue;
    out.push_back(parse_int(token, "J"));
  }
  if (out.empty()) throw ParseError("config: J must list at least one offset");
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void Config::apply(const Config& higher) {
  auto take = [](auto& dst, const auto& src) {
    if (src) dst = src;
  };
  take(preset, higher.preset);
  take(class_index, higher.class_index);
  take(seed, higher.seed);
  take(alpha, higher.alpha);
  take(beta, higher.beta);
  take(gamma, higher.gamma);
  take(delta, higher.delta);
  take(offsets, higher.offsets);
  take(k_base, higher.k_base);
  take(k_over, higher.k_over);
  take(lr, higher.lr);
  take(shot_threshold, higher.shot_threshold);
  take(disagree_scale, higher.disagree_scale);
  take(disagree_offset, higher.disagree_offset);
  take(boundary_scale, higher.boundary_scale);
  take(boundary_offset, higher.boundary_offset);
  take(trail_masked, higher.trail_masked);
  take(net_spec, higher.net_spec);
  take(weights, higher.weights);
  take(frames, higher.frames);
  take(flows, higher.flows);
  take(out, higher.out);
  take(image, higher.image);
}

Config Config::from_text(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = strip(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (key == "preset") c.preset = value;
    else if (key == "class") c.class_index = parse_int(value, key);
    else if (key == "seed") c.seed = std::uint64_t(std::stoull(value));
    else if (key == "alpha") c.alpha = parse_double(value, key);
    else if (key == "beta") c.beta = parse_double(value, key);
    else if (key == "gamma") c.gamma = parse_double(value, key);
    else if (key == "delta") c.delta = parse_double(value, key);
    else if (key == "J") c.offsets = parse_offsets(value);
    else if (key == "k_base") c.k_base = parse_int(value, key);
    else if (key == "k_over") c.k_over = parse_int(value, key);
    else if (key == "lr") c.lr = parse_double(value, key);
    else if (key == "shot_threshold") c.shot_threshold = parse_double(value, key);
    else if (key == "disagree_scale") c.disagree_scale = parse_double(value, key);
    else if (key == "disagree_offset") c.disagree_offset = parse_double(value, key);
    else if (key == "boundary_scale") c.boundary_scale = parse_double(value, key);
    else if (key == "boundary_offset") c.boundary_offset = parse_double(value, key);
    else if (key == "trail_masked") c.trail_masked = parse_bool(value, key);
    else if (key == "net_spec") c.net_spec = value;
    else if (key == "weights") c.weights = value;
    else if (key == "frames") c.frames = value;
    else if (key == "flows") c.flows = value;
    else if (key == "out") c.out = value;
    else if (key == "image") c.image = value;
    else throw ParseError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return c;
}

Config Config::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("config file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

DreamOptions resolve_options(const Config& config) {
  DreamOptions opt;
  opt.preset = resolve_preset(config.preset.value_or("per_frame"));
  if (config.alpha) opt.preset.weights.alpha = *config.alpha;
  if (config.beta) opt.preset.weights.beta = *config.beta;
  if (config.gamma) opt.preset.weights.gamma = *config.gamma;
  if (config.delta) opt.preset.weights.delta = *config.delta;
  opt.preset.weights.validate();
  if (config.offsets) {
    auto J = *config.offsets;
    for (std::size_t i = 0; i < J.size(); ++i) {
      if (J[i] <= 0) throw ContractError("J offsets must be positive");
      if (i > 0 && J[i] <= J[i - 1])
        throw ContractError("J offsets must be strictly increasing");
    }
    opt.preset.offsets = std::move(J);
  }
  if (config.k_base) opt.preset.k_base = *config.k_base;
  if (config.k_over) opt.preset.k_over = *config.k_over;
  if (opt.preset.k_base < 0 || opt.preset.k_over < 0)
    throw ContractError("iteration counts must be nonnegative");
  if (opt.preset.k_base > opt.preset.k_over)
    throw ContractError("k_base must not exceed k_over");
  opt.class_index = config.class_index.value_or(0);
  opt.seed = config.seed.value_or(0);
  if (config.lr) opt.lr = float(*config.lr);
  if (config.shot_threshold) opt.shot_threshold = *config.shot_threshold;
  if (config.disagree_scale) opt.consistency.disagree_scale = float(*config.disagree_scale);
  if (config.disagree_offset) opt.consistency.disagree_offset = float(*config.disagree_offset);
  if (config.boundary_scale) opt.consistency.boundary_scale = float(*config.boundary_scale);
  if (config.boundary_offset) opt.consistency.boundary_offset = float(*config.boundary_offset);
  if (config.trail_masked) opt.trail_masked = *config.trail_masked;
  return opt;
}

std::vector<std::pair<std::string, std::string>> config_echo(const DreamOptions& opt) {
  std::vector<std::pair<std::string, std::string>> cfg;
  cfg.emplace_back("preset", opt.preset.name);
  cfg.emplace_back("class", std::to_string(opt.class_index));
  cfg.emplace_back("seed", std::to_string(opt.seed));
  cfg.emplace_back("alpha", fmt_double(opt.preset.weights.alpha));
  cfg.emplace_back("beta", fmt_double(opt.preset.weights.beta));
  cfg.emplace_back("gamma", fmt_double(opt.preset.weights.gamma));
  cfg.emplace_back("delta", fmt_double(opt.preset.weights.delta));
  std::string jstr;
  for (int j : opt.preset.offsets) jstr += (jstr.empty() ? "" : ",") + std::to_string(j);
  cfg.emplace_back("J", jstr);
  cfg.emplace_back("k_base", std::to_string(opt.preset.k_base));
  cfg.emplace_back("k_over", std::to_string(opt.preset.k_over));
  cfg.emplace_back("lr", fmt_double(double(opt.lr)));
  cfg.emplace_back("shot_threshold", fmt_double(opt.shot_threshold));
  cfg.emplace_back("disagree_scale", fmt_double(double(opt.consistency.disagree_scale)));
  cfg.emplace_back("disagree_offset", fmt_double(double(opt.consistency.disagree_offset)));
  cfg.emplace_back("boundary_scale", fmt_double(double(opt.consistency.boundary_scale)));
  cfg.emplace_back("boundary_offset", fmt_double(double(opt.consistency.boundary_offset)));
  cfg.emplace_back("trail_masked", opt.trail_masked ? "1" : "0");
  return cfg;
}

}  // namespace lucid
