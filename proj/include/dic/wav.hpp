#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "dic/latent.hpp"
#include "dic/tensor.hpp"

namespace dic {

struct WavData {
  int sample_rate = 0;
  std::vector<double> samples;  // mono, in [-1, 1)
};

// 16-bit PCM RIFF/WAVE, mono only.
WavData decode_wav(std::span<const std::uint8_t> bytes);
WavData read_wav(const std::filesystem::path& path);

struct MelFrontend {
  int sample_rate = 16000;
  std::size_t window = 1024;
  std::size_t hop = 160;
  std::size_t mel_bands = 64;
};

// Log-mel spectrogram [mel_bands x frames] from a Hann-windowed STFT.
Tensor log_mel(std::span<const double> samples, const MelFrontend& fe = {});

// Log-mel folded onto the latent grid: adjacent mel bands averaged down to
// geometry.freq rows, frames cropped or tiled to geometry.frames, then
// standardized to zero mean and unit variance.
Tensor wav_to_latent(const WavData& wav, const LatentGeometry& geometry = {}, const MelFrontend& fe = {});

}  // namespace dic
