#include "kpat/checkpoint.hpp"

#include <limits>

#include "kpat/binary_io.hpp"

namespace kpat::nn {

std::vector<std::uint8_t> encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  ByteWriter w;
  w.text("PATW");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) fail(ErrorKind::kParameter, "checkpoint: name too long");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.text(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto dim : t.shape()) w.u32(static_cast<std::uint32_t>(dim));
    for (float v : t.data()) w.f32(v);
  }
  return w.release();
}

std::vector<NamedTensor> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, "checkpoint");
  if (r.text(4) != "PATW") fail(ErrorKind::kFormat, "checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion) fail(ErrorKind::kFormat, "checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.u32();
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = r.text(r.u16());
    const auto rank = r.u8();
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u32();
      n *= d;
    }
    if (n * 4 > r.remaining()) fail(ErrorKind::kFormat, "checkpoint: tensor " + nt.name + " truncated");
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32();
    nt.tensor = Tensor<float>(std::move(shape), std::move(data));
    out.push_back(std::move(nt));
  }
  if (r.remaining() != 0) fail(ErrorKind::kFormat, "checkpoint: trailing bytes");
  return out;
}

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  write_file_bytes(path, encode_checkpoint(tensors));
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace kpat::nn
