#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "protonet/tensor.hpp"

namespace protonet {

// "PFT1" tensor file, little-endian:
//   magic "PFT1", version u32 (=1), rank u32, dims u32 x rank,
//   f64 x numel row-major.
inline constexpr std::uint32_t kTensorFileVersion = 1;

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is, const std::string& source = "tensor");

void save_tensor_file(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor_file(const std::filesystem::path& path);

}  // namespace protonet
