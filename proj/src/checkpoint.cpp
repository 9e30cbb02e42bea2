#include "protonet/checkpoint.hpp"

#include <fstream>

#include "binary_io.hpp"
#include "protonet/error.hpp"

namespace protonet {

void write_checkpoint(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  os.write("PNCK", 4);
  binary::write_u32(os, kCheckpointVersion);
  binary::write_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    binary::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    binary::write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) binary::write_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) binary::write_f64(os, v);
  }
}

std::vector<NamedTensor> read_checkpoint(std::istream& is, const std::string& source) {
  binary::expect_magic(is, "PNCK", source);
  const auto version = binary::read_u32(is, source);
  if (version != kCheckpointVersion) throw LoadError(source + ": unsupported version " + std::to_string(version));
  const auto count = binary::read_u32(is, source);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = binary::read_u32(is, source);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw LoadError(source + ": truncated name");
    const auto rank = binary::read_u32(is, source);
    Shape shape(rank);
    for (auto& d : shape) d = binary::read_u32(is, source);
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = binary::read_f64(is, source + " (" + name + ")");
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_checkpoint(os, tensors);
  if (!os) throw Error("failed writing " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open checkpoint " + path.string());
  return read_checkpoint(is, path.string());
}

}  // namespace protonet
