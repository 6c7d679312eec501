#include "dic/wav.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <mutex>
#include <numbers>
#include <string>

#include <fftw3.h>

#include "dic/error.hpp"

namespace dic {

namespace {

std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t p) {
  return static_cast<std::uint32_t>(b[p]) | (static_cast<std::uint32_t>(b[p + 1]) << 8) |
         (static_cast<std::uint32_t>(b[p + 2]) << 16) | (static_cast<std::uint32_t>(b[p + 3]) << 24);
}

std::uint16_t le16(std::span<const std::uint8_t> b, std::size_t p) {
  return static_cast<std::uint16_t>(b[p] | (b[p + 1] << 8));
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t p, const char* tag) {
  return std::equal(tag, tag + 4, b.begin() + static_cast<std::ptrdiff_t>(p));
}

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

WavData decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
    throw IoError("not a RIFF/WAVE file");
  }
  WavData out;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = le32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw IoError("truncated WAV chunk");
    if (tag_is(bytes, pos, "fmt ")) {
      if (size < 16) throw IoError("WAV fmt chunk too short");
      const auto format = le16(bytes, body);
      const auto channels = le16(bytes, body + 2);
      out.sample_rate = static_cast<int>(le32(bytes, body + 4));
      const auto bits = le16(bytes, body + 14);
      if (format != 1 || bits != 16) throw IoError("only 16-bit PCM WAV is supported");
      if (channels != 1) throw IoError("only mono WAV is supported, got " + std::to_string(channels) + " channels");
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      if (!have_fmt) throw IoError("WAV data chunk precedes fmt chunk");
      out.samples.reserve(size / 2);
      for (std::size_t i = 0; i + 1 < size; i += 2) {
        out.samples.push_back(static_cast<std::int16_t>(le16(bytes, body + i)) / 32768.0);
      }
      return out;
    }
    pos = body + size + (size & 1u);
  }
  throw IoError("WAV file has no data chunk");
}

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Tensor log_mel(std::span<const double> samples, const MelFrontend& fe) {
  const std::size_t n = fe.window;
  const std::size_t bins = n / 2 + 1;
  const std::size_t frames = samples.size() <= n ? 1 : 1 + (samples.size() - n) / fe.hop;

  // Periodic Hann window.
  std::vector<double> window(n);
  for (std::size_t i = 0; i < n; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);

  // Triangular filters, equally spaced on the HTK mel scale from 0 to Nyquist.
  const double nyquist = fe.sample_rate / 2.0;
  const double mel_max = hz_to_mel(nyquist);
  std::vector<double> edges(fe.mel_bands + 2);
  for (std::size_t m = 0; m < edges.size(); ++m) edges[m] = mel_to_hz(mel_max * m / (fe.mel_bands + 1));
  Tensor filters({fe.mel_bands, bins});
  for (std::size_t m = 0; m < fe.mel_bands; ++m) {
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * fe.sample_rate / n;
      const double up = (f - edges[m]) / (edges[m + 1] - edges[m]);
      const double down = (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1]);
      filters.at(m, k) = std::max(0.0, std::min(up, down));
    }
  }

  double* in = fftw_alloc_real(n);
  fftw_complex* spec = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, spec, FFTW_ESTIMATE);
  }

  Tensor out({fe.mel_bands, frames});
  std::vector<double> power(bins);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t s = f * fe.hop + i;
      in[i] = s < samples.size() ? samples[s] * window[i] : 0.0;
    }
    fftw_execute(plan);
    for (std::size_t k = 0; k < bins; ++k) power[k] = spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
    for (std::size_t m = 0; m < fe.mel_bands; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < bins; ++k) e += filters.at(m, k) * power[k];
      out.at(m, f) = std::log(e + 1e-10);
    }
  }

  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(spec);
  return out;
}

Tensor wav_to_latent(const WavData& wav, const LatentGeometry& geometry, const MelFrontend& fe) {
  if (wav.sample_rate != fe.sample_rate) {
    throw IoError("expected " + std::to_string(fe.sample_rate) + " Hz audio, got " + std::to_string(wav.sample_rate));
  }
  if (wav.samples.empty()) throw IoError("WAV file holds no samples");
  const std::size_t rows = geometry.channels * geometry.freq;
  if (rows == 0 || fe.mel_bands % rows != 0) {
    throw DimensionError(std::to_string(fe.mel_bands) + " mel bands do not fold onto " + std::to_string(rows) +
                         " latent rows");
  }
  const Tensor mel = log_mel(wav.samples, fe);
  const std::size_t group = fe.mel_bands / rows;
  const std::size_t frames = geometry.frames;

  Tensor z(geometry.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t f = 0; f < frames; ++f) {
      const std::size_t src = f % mel.cols();
      double acc = 0.0;
      for (std::size_t g = 0; g < group; ++g) acc += mel.at(r * group + g, src);
      z[r * frames + f] = acc / static_cast<double>(group);
    }
  }
  double mean = 0.0;
  for (double v : z.data()) mean += v;
  mean /= static_cast<double>(z.size());
  double var = 0.0;
  for (double v : z.data()) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(z.size()));
  for (auto& v : z.data()) v = sd > 0.0 ? (v - mean) / sd : 0.0;
  return z;
}

}  // namespace dic
