#pragma once
// Binary tensor files.
//
// Checkpoint ("AVTT"): magic, u32 version, then per-parameter records of
//   [u32 name length][UTF-8 name][u64 rank][u64 extents...][f64 payload]
// all little-endian, records until EOF.
//
// Frame tensor file ("AVTF"): magic, u32 version, u64 rank, u64 extents,
// f32 little-endian payload.

#include <string>
#include <vector>

#include "avt/tensor.hpp"

namespace avt {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kFrameFileVersion = 1;

void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor>& params);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

// float32 payload; values are converted to/from the float64 Tensor
void save_f32_tensor(const std::string& path, const Tensor& t);
Tensor load_f32_tensor(const std::string& path);

}  // namespace avt
