#include "egovideo/nn/tensor_io.hpp"

#include <fstream>

#include "egovideo/common/binary_io.hpp"

namespace egovideo::nn {

void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  io::write_magic(out, "EGVK");
  io::write_pod<uint32_t>(out, kTensorContainerVersion);
  io::write_pod<uint32_t>(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    io::write_string(out, name);
    io::write_pod<uint32_t>(out, static_cast<uint32_t>(m.rows()));
    io::write_pod<uint32_t>(out, static_cast<uint32_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw InvalidArgument("failed writing " + path.string());
}

NamedTensors load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingDependency("cannot open " + path.string());
  io::expect_magic(in, "EGVK");
  const auto version = io::read_pod<uint32_t>(in);
  if (version != kTensorContainerVersion) {
    throw InvalidArgument("unsupported tensor container version " + std::to_string(version));
  }
  const auto count = io::read_pod<uint32_t>(in);
  NamedTensors tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = io::read_string(in);
    const auto rows = io::read_pod<uint32_t>(in);
    const auto cols = io::read_pod<uint32_t>(in);
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw InvalidArgument("truncated tensor " + name + " in " + path.string());
    tensors.emplace_back(std::move(name), std::move(m));
  }
  return tensors;
}

}  // namespace egovideo::nn
