#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dic/tensor.hpp"

namespace dic {

// Toy latent layout: [channels x freq x frames], time on the last axis.
struct LatentGeometry {
  std::size_t channels = 1;
  std::size_t freq = 16;
  std::size_t frames = 64;

  Shape shape() const { return {channels, freq, frames}; }
  std::size_t frame_width() const { return channels * freq; }
};

// Views a latent as a sequence of frame vectors: the last axis indexes frames
// and all leading axes flatten into the frame width. Result is [frames x width].
Tensor to_frames(const Tensor& latent);
Tensor from_frames(const Tensor& frames, const Shape& latent_shape);

// Multiplies every element of frame f by mask[f].
Tensor apply_frame_mask(const Tensor& latent, std::span<const double> mask);

// DICL latent files: "DICL", version 0x01, u8 rank, rank x u32 LE extents,
// then the row-major payload as LE f64.
std::vector<std::uint8_t> encode_dicl(const Tensor& latent);
Tensor decode_dicl(std::span<const std::uint8_t> bytes);
void write_dicl(const std::filesystem::path& path, const Tensor& latent);
Tensor read_dicl(const std::filesystem::path& path);

}  // namespace dic
