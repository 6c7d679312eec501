#include "dic/latent.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dic/error.hpp"

namespace dic {

namespace {

constexpr std::uint8_t kVersion = 0x01;

void require_latent_rank(const Tensor& t) {
  if (t.rank() < 2) {
    throw DimensionError("latent needs rank >= 2 to form frames, got " + shape_string(t.shape()));
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t pos, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
  return v;
}

}  // namespace

Tensor to_frames(const Tensor& latent) {
  require_latent_rank(latent);
  const std::size_t frames = latent.shape().back();
  const std::size_t width = latent.size() / frames;
  Tensor out({frames, width});
  for (std::size_t w = 0; w < width; ++w)
    for (std::size_t f = 0; f < frames; ++f) out.at(f, w) = latent[w * frames + f];
  return out;
}

Tensor from_frames(const Tensor& frames, const Shape& latent_shape) {
  if (frames.rank() != 2 || latent_shape.size() < 2 || frames.rows() != latent_shape.back() ||
      frames.size() != shape_size(latent_shape)) {
    throw DimensionError("from_frames: " + shape_string(frames.shape()) + " does not fold into " +
                         shape_string(latent_shape));
  }
  Tensor out(latent_shape);
  const std::size_t nf = frames.rows();
  for (std::size_t w = 0; w < frames.cols(); ++w)
    for (std::size_t f = 0; f < nf; ++f) out[w * nf + f] = frames.at(f, w);
  return out;
}

Tensor apply_frame_mask(const Tensor& latent, std::span<const double> mask) {
  require_latent_rank(latent);
  const std::size_t frames = latent.shape().back();
  if (mask.size() != frames) {
    throw DimensionError("frame mask of length " + std::to_string(mask.size()) + " vs latent " +
                         shape_string(latent.shape()));
  }
  Tensor out = latent;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i % frames];
  return out;
}

std::vector<std::uint8_t> encode_dicl(const Tensor& latent) {
  if (latent.rank() == 0 || latent.rank() > 255) throw DimensionError("DICL rank must be in 1..255");
  std::vector<std::uint8_t> out = {'D', 'I', 'C', 'L', kVersion, static_cast<std::uint8_t>(latent.rank())};
  for (auto e : latent.shape()) {
    if (e > 0xFFFFFFFFull) throw DimensionError("DICL extent exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(e));
  }
  out.reserve(out.size() + 8 * latent.size());
  for (double v : latent.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Tensor decode_dicl(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 6 || std::memcmp(bytes.data(), "DICL", 4) != 0) throw IoError("not a DICL file (bad magic)");
  if (bytes[4] != kVersion) throw IoError("unsupported DICL version " + std::to_string(bytes[4]));
  const std::size_t rank = bytes[5];
  if (rank == 0) throw IoError("DICL rank must be >= 1");
  if (bytes.size() < 6 + 4 * rank) throw IoError("truncated DICL header");
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    shape[i] = static_cast<std::size_t>(get_le(bytes, 6 + 4 * i, 4));
    if (shape[i] == 0) throw IoError("DICL extent must be positive");
  }
  const std::size_t offset = 6 + 4 * rank;
  const std::size_t n = shape_size(shape);
  if (bytes.size() != offset + 8 * n) {
    throw IoError("DICL payload length mismatch for shape " + shape_string(shape));
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(get_le(bytes, offset + 8 * i, 8));
  Tensor out(std::move(shape), std::move(data));
  if (!all_finite(out)) throw NumericError("DICL payload contains non-finite values");
  return out;
}

void write_dicl(const std::filesystem::path& path, const Tensor& latent) {
  const auto bytes = encode_dicl(latent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_dicl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_dicl(bytes);
}

}  // namespace dic
