#include "protonet/tensor_io.hpp"

#include <fstream>

#include "binary_io.hpp"
#include "protonet/error.hpp"

namespace protonet {

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write("PFT1", 4);
  binary::write_u32(os, kTensorFileVersion);
  binary::write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) binary::write_u32(os, static_cast<std::uint32_t>(d));
  for (double v : t.data()) binary::write_f64(os, v);
}

Tensor read_tensor(std::istream& is, const std::string& source) {
  binary::expect_magic(is, "PFT1", source);
  const auto version = binary::read_u32(is, source);
  if (version != kTensorFileVersion) throw LoadError(source + ": unsupported version " + std::to_string(version));
  const auto rank = binary::read_u32(is, source);
  if (rank == 0) throw LoadError(source + ": rank 0 tensor");
  Shape shape(rank);
  for (auto& d : shape) {
    d = binary::read_u32(is, source);
    if (d == 0) throw LoadError(source + ": zero-length dimension");
  }
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = binary::read_f64(is, source);
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor_file(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
  if (!os) throw Error("failed writing " + path.string());
}

Tensor load_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open tensor file " + path.string());
  return read_tensor(is, path.string());
}

}  // namespace protonet
