#pragma once

#include <string>
#include <vector>

#include "vgamba/tensor.hpp"

namespace vgamba {

// Numeric rendering used in all text outputs: shortest form that still
// round-trips a double, so reruns produce byte-identical files.
std::string format_double(double v);

void ensure_dir(const std::string& path);

// CSV with a mandatory header row. Column names containing "nondeterministic"
// mark wall-clock measurements that vary between reruns.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Binary 8-bit PGM (P5); values clamped to [0,1] and scaled to 0..255.
void write_pgm(const std::string& path, const Tensor<double>& image);

void write_text(const std::string& path, const std::string& content);

}  // namespace vgamba
