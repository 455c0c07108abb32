#include "vgamba/io_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "vgamba/errors.hpp"

namespace vgamba {

std::string format_double(double v) {
  if (!std::isfinite(v)) return std::signbit(v) ? "-inf" : (std::isnan(v) ? "nan" : "inf");
  char buf[64];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  if (header.empty()) throw IoError("csv needs a header row: " + path);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw IoError("csv row width " + std::to_string(row.size()) + " does not match header in " +
                    path);
    for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  if (!out.good()) throw IoError("short write to " + path);
}

void write_pgm(const std::string& path, const Tensor<double>& image) {
  if (image.dim() != 2) throw ShapeError("pgm image must be [H,W], got " + shape_str(image.shape()));
  const int64_t h = image.shape()[0], w = image.shape()[1];
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path);
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> bytes(static_cast<size_t>(h * w));
  for (int64_t i = 0; i < h * w; ++i) {
    const double v = std::clamp(image[i], 0.0, 1.0);
    bytes[static_cast<size_t>(i)] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out.good()) throw IoError("short write to " + path);
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  out << content;
  if (!out.good()) throw IoError("short write to " + path);
}

}  // namespace vgamba
