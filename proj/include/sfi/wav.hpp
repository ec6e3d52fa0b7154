#pragma once

// Mono WAV reader/writer (PCM16 and IEEE float32).

#include <filesystem>
#include <span>
#include <vector>

namespace sfi {

enum class WavFormat { pcm16, float32 };

struct WavData {
  std::vector<double> samples;
  int fs = 0;
  WavFormat format = WavFormat::float32;
};

// PCM16 samples map to [-1, 1) by /32768. Throws FormatError naming the
// offending header field, std::runtime_error on I/O failure.
WavData load_wav(const std::filesystem::path& path);

// PCM16 writes clamp(round(x * 32768)) to [-32768, 32767].
void save_wav(const std::filesystem::path& path, std::span<const double> samples, int fs,
              WavFormat format = WavFormat::float32);

}  // namespace sfi
