#include "vgamba/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "vgamba/errors.hpp"
#include "vgamba/io_util.hpp"

namespace vgamba {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& value, const char* expected) {
  throw ConfigError("bad value \"" + value + "\" for " + section + "." + key + " (expected " +
                    expected + ")");
}

bool parse_bool(const std::string& section, const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(section, key, v, "true/false/1/0");
}

int64_t parse_i64(const std::string& section, const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long long r = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    bad_value(section, key, v, "integer");
  return static_cast<int64_t>(r);
}

int parse_int(const std::string& section, const std::string& key, const std::string& v) {
  return static_cast<int>(parse_i64(section, key, v));
}

uint64_t parse_u64(const std::string& section, const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long r = std::strtoull(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    bad_value(section, key, v, "unsigned integer");
  return static_cast<uint64_t>(r);
}

double parse_f64(const std::string& section, const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double r = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE)
    bad_value(section, key, v, "number");
  return r;
}

std::vector<int64_t> parse_i64_list(const std::string& section, const std::string& key,
                                    const std::string& v) {
  std::vector<int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_i64(section, key, trim(item)));
  if (out.empty()) bad_value(section, key, v, "comma-separated integers");
  return out;
}

std::string join_i64(const std::vector<int64_t>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

void config_assign(RunConfig& cfg, const std::string& section, const std::string& key,
                   const std::string& value) {
  if (section == "model") {
    if (key == "variant") cfg.variant = value;
    else if (key == "mixer") {
      if (value != "gamba" && value != "conv" && value != "attention")
        bad_value(section, key, value, "gamba/conv/attention");
      cfg.mixer = value;
    } else if (key == "use_rpe") cfg.use_rpe = parse_bool(section, key, value);
    else if (key == "use_asc") cfg.use_asc = parse_bool(section, key, value);
    else if (key == "num_classes") cfg.num_classes = parse_int(section, key, value);
    else if (key == "input_extent") cfg.input_extent = parse_int(section, key, value);
    else if (key == "state_size") cfg.state_size = parse_int(section, key, value);
    else if (key == "seed") cfg.seed = parse_u64(section, key, value);
    else throw ConfigError("unknown key \"" + key + "\" in section [" + section + "]");
  } else if (section == "train") {
    if (key == "lr") cfg.lr = parse_f64(section, key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_f64(section, key, value);
    else if (key == "epochs") cfg.epochs = parse_int(section, key, value);
    else if (key == "batch") cfg.batch = parse_int(section, key, value);
    else if (key == "samples") cfg.samples = parse_int(section, key, value);
    else if (key == "canvas") cfg.canvas = parse_int(section, key, value);
    else throw ConfigError("unknown key \"" + key + "\" in section [" + section + "]");
  } else if (section == "bench") {
    if (key == "m_list") cfg.m_list = parse_i64_list(section, key, value);
    else if (key == "width") cfg.bench_width = parse_int(section, key, value);
    else if (key == "state") cfg.bench_state = parse_int(section, key, value);
    else if (key == "heads") cfg.bench_heads = parse_int(section, key, value);
    else if (key == "min_seconds") cfg.bench_min_seconds = parse_f64(section, key, value);
    else throw ConfigError("unknown key \"" + key + "\" in section [" + section + "]");
  } else if (section == "erf") {
    if (key == "extent") cfg.erf_extent = parse_int(section, key, value);
    else if (key == "samples") cfg.erf_samples = parse_int(section, key, value);
    else if (key == "checkpoint") cfg.erf_checkpoint = value;
    else if (key == "fresh_init") cfg.erf_fresh_init = parse_bool(section, key, value);
    else throw ConfigError("unknown key \"" + key + "\" in section [" + section + "]");
  } else if (section == "gradcheck") {
    if (key == "rounds") cfg.gradcheck_rounds = parse_int(section, key, value);
    else throw ConfigError("unknown key \"" + key + "\" in section [" + section + "]");
  } else if (section == "io") {
    if (key == "out_dir") cfg.out_dir = value;
    else if (key == "precision") {
      if (value != "f32" && value != "f64") bad_value(section, key, value, "f32/f64");
      cfg.precision = value;
    } else throw ConfigError("unknown key \"" + key + "\" in section [" + section + "]");
  } else {
    throw ConfigError("unknown section [" + section + "]");
  }
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file \"" + path + "\"");
  RunConfig cfg;
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value, got \"" + t +
                        "\"");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (section.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": key \"" + key +
                        "\" appears before any section header");
    try {
      config_assign(cfg, section, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

std::string render_config(const RunConfig& cfg) {
  std::string s;
  s += "[model]\n";
  s += "variant = " + cfg.variant + "\n";
  s += "mixer = " + cfg.mixer + "\n";
  s += std::string("use_rpe = ") + (cfg.use_rpe ? "true" : "false") + "\n";
  s += std::string("use_asc = ") + (cfg.use_asc ? "true" : "false") + "\n";
  s += "num_classes = " + std::to_string(cfg.num_classes) + "\n";
  s += "input_extent = " + std::to_string(cfg.input_extent) + "\n";
  s += "state_size = " + std::to_string(cfg.state_size) + "\n";
  s += "seed = " + std::to_string(cfg.seed) + "\n";
  s += "\n[train]\n";
  s += "lr = " + format_double(cfg.lr) + "\n";
  s += "weight_decay = " + format_double(cfg.weight_decay) + "\n";
  s += "epochs = " + std::to_string(cfg.epochs) + "\n";
  s += "batch = " + std::to_string(cfg.batch) + "\n";
  s += "samples = " + std::to_string(cfg.samples) + "\n";
  s += "canvas = " + std::to_string(cfg.canvas) + "\n";
  s += "\n[bench]\n";
  s += "m_list = " + join_i64(cfg.m_list) + "\n";
  s += "width = " + std::to_string(cfg.bench_width) + "\n";
  s += "state = " + std::to_string(cfg.bench_state) + "\n";
  s += "heads = " + std::to_string(cfg.bench_heads) + "\n";
  s += "min_seconds = " + format_double(cfg.bench_min_seconds) + "\n";
  s += "\n[erf]\n";
  s += "extent = " + std::to_string(cfg.erf_extent) + "\n";
  s += "samples = " + std::to_string(cfg.erf_samples) + "\n";
  s += "checkpoint = " + cfg.erf_checkpoint + "\n";
  s += std::string("fresh_init = ") + (cfg.erf_fresh_init ? "true" : "false") + "\n";
  s += "\n[gradcheck]\n";
  s += "rounds = " + std::to_string(cfg.gradcheck_rounds) + "\n";
  s += "\n[io]\n";
  s += "out_dir = " + cfg.out_dir + "\n";
  s += "precision = " + cfg.precision + "\n";
  return s;
}

}  // namespace vgamba
