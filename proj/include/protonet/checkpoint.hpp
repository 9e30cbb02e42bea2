#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "protonet/tensor.hpp"

namespace protonet {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// "PNCK" checkpoint, little-endian:
//   magic "PNCK", version u32 (=1), count u32, then per tensor
//   name_len u32, UTF-8 name, rank u32, dims u32 x rank, f64 x numel row-major.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& is, const std::string& source = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace protonet
