#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vgamba {

// Everything the command-line tool can be told. Loaded from an INI-style file
// (sections in brackets, key=value pairs, '#' or ';' comments, lists comma
// separated); flags override file values. Unknown sections and keys are
// rejected so a typo cannot silently fall back to a default.
struct RunConfig {
  // [model]
  std::string variant = "tiny";
  std::string mixer = "gamba";
  bool use_rpe = true;
  bool use_asc = true;
  int num_classes = -1;   // negative keeps the variant default
  int input_extent = -1;  // ditto
  int state_size = 16;
  uint64_t seed = 1;

  // [train] -- the shape-transport benchmark
  double lr = 3e-3;
  double weight_decay = 0.01;
  int epochs = 30;
  int batch = 4;
  int samples = 200;
  int canvas = 64;

  // [bench] -- sequence-length scaling measurement
  std::vector<int64_t> m_list = {256, 512, 1024, 2048, 4096};
  int bench_width = 32;
  int bench_state = 16;
  int bench_heads = 4;
  double bench_min_seconds = 0.02;

  // [erf] -- effective receptive field maps
  int erf_extent = 64;
  int erf_samples = 32;
  std::string erf_checkpoint;  // loaded when nonempty; mixer must match
  bool erf_fresh_init = true;  // allow measuring freshly initialized weights

  // [gradcheck]
  int gradcheck_rounds = 3;

  // [io]
  std::string out_dir = "out";
  std::string precision = "f64";  // f32 | f64
};

// Strict parse. Throws ConfigError naming the offending line, section or key;
// IoError when the file cannot be read.
RunConfig parse_config_file(const std::string& path);

// One section/key/value assignment, shared by the file parser and the flag
// overrides so both validate identically.
void config_assign(RunConfig& cfg, const std::string& section, const std::string& key,
                   const std::string& value);

// Renders a config back to INI text that parses to the same values. Every
// command writes this next to its outputs as a record of what actually ran.
std::string render_config(const RunConfig& cfg);

}  // namespace vgamba
