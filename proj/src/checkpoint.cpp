#include "vgamba/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace vgamba {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; byte swapping is not implemented");

struct Entry {
  Shape shape;
  int64_t offset;
};

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> all_tensors(Module<T>& model) {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  for (auto& [name, p] : model.named_parameters())
    out.emplace_back(name, &const_cast<Var<T>&>(p).value_mut());
  for (auto& [name, b] : model.named_buffers()) out.emplace_back(name, b);
  return out;
}

}  // namespace

template <typename T>
void save_checkpoint(const Module<T>& model, const std::string& stem) {
  auto tensors = all_tensors(const_cast<Module<T>&>(model));
  std::ofstream manifest(stem + ".manifest");
  std::ofstream blob(stem + ".blob", std::ios::binary);
  if (!manifest || !blob) throw IoError("cannot open checkpoint files at " + stem);
  manifest << kCheckpointMagic << "\n";
  int64_t offset = 0;
  for (auto& [name, t] : tensors) {
    manifest << name << " " << t->dim();
    for (int64_t d : t->shape()) manifest << " " << d;
    manifest << " " << offset << "\n";
    for (int64_t i = 0; i < t->numel(); ++i) {
      const double v = static_cast<double>((*t)[i]);
      blob.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
    offset += t->numel();
  }
  if (!manifest.good() || !blob.good()) throw IoError("short write while saving checkpoint " + stem);
}

template <typename T>
void load_checkpoint(Module<T>& model, const std::string& stem) {
  std::ifstream manifest(stem + ".manifest");
  if (!manifest) throw IoError("missing checkpoint manifest " + stem + ".manifest");
  std::string magic;
  std::getline(manifest, magic);
  if (magic != kCheckpointMagic)
    throw IoError("bad checkpoint magic in " + stem + ".manifest: got \"" + magic + "\"");

  std::map<std::string, Entry> entries;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string name;
    int64_t ndim;
    if (!(is >> name >> ndim) || ndim < 0) throw IoError("corrupt manifest line: " + line);
    Entry e;
    e.shape.resize(static_cast<size_t>(ndim));
    for (auto& d : e.shape)
      if (!(is >> d)) throw IoError("corrupt manifest line: " + line);
    if (!(is >> e.offset)) throw IoError("corrupt manifest line: " + line);
    if (!entries.emplace(name, std::move(e)).second) throw IoError("duplicate manifest entry " + name);
  }

  std::ifstream blob(stem + ".blob", std::ios::binary);
  if (!blob) throw IoError("missing checkpoint blob " + stem + ".blob");

  auto tensors = all_tensors(model);
  if (tensors.size() != entries.size())
    throw ShapeError("checkpoint has " + std::to_string(entries.size()) + " tensors, model has " +
                     std::to_string(tensors.size()));
  for (auto& [name, t] : tensors) {
    auto it = entries.find(name);
    if (it == entries.end()) throw ShapeError("checkpoint missing tensor " + name);
    if (it->second.shape != t->shape())
      throw ShapeError("checkpoint shape " + shape_str(it->second.shape) + " for " + name +
                       " does not match model shape " + shape_str(t->shape()));
    blob.seekg(it->second.offset * static_cast<int64_t>(sizeof(double)));
    for (int64_t i = 0; i < t->numel(); ++i) {
      double v;
      blob.read(reinterpret_cast<char*>(&v), sizeof(double));
      if (!blob) throw IoError("checkpoint blob truncated while reading " + name);
      (*t)[i] = static_cast<T>(v);
    }
  }
}

template void save_checkpoint(const Module<float>&, const std::string&);
template void save_checkpoint(const Module<double>&, const std::string&);
template void load_checkpoint(Module<float>&, const std::string&);
template void load_checkpoint(Module<double>&, const std::string&);

}  // namespace vgamba
