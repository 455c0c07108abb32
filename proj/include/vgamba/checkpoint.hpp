#pragma once

#include <string>

#include "vgamba/module.hpp"

namespace vgamba {

// Checkpoint = <stem>.manifest + <stem>.blob.
//   manifest: first line the magic "VGAMBA-CKPT-1", then one line per tensor:
//     <name> <ndim> <d0> ... <dk> <offset>
//   with <offset> in elements into the blob.
//   blob: all tensors (parameters, then buffers) concatenated as
//     little-endian IEEE-754 doubles, in manifest order.
inline constexpr const char* kCheckpointMagic = "VGAMBA-CKPT-1";

template <typename T>
void save_checkpoint(const Module<T>& model, const std::string& stem);

// Strict: every manifest entry must match a model tensor of the same shape and
// vice versa. Throws IoError (missing/corrupt file, bad magic) or ShapeError.
template <typename T>
void load_checkpoint(Module<T>& model, const std::string& stem);

extern template void save_checkpoint(const Module<float>&, const std::string&);
extern template void save_checkpoint(const Module<double>&, const std::string&);
extern template void load_checkpoint(Module<float>&, const std::string&);
extern template void load_checkpoint(Module<double>&, const std::string&);

}  // namespace vgamba
