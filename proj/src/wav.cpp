#include "sfi/wav.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "sfi/errors.hpp"

namespace sfi {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void write_le(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

[[noreturn]] void bad(const std::filesystem::path& path, const std::string& field, const std::string& what) {
  throw FormatError(path.string() + ": " + field + ": " + what);
}

}  // namespace

WavData load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12) bad(path, "RIFF", "file too short");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0) bad(path, "RIFF", "missing RIFF tag");
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) bad(path, "WAVE", "missing WAVE tag");

  bool have_fmt = false;
  std::uint16_t format_tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t fs = 0;
  std::uint16_t bits = 0;
  std::uint16_t block_align = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const auto size = read_le<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    if (size > bytes.size() - body) bad(path, std::string(reinterpret_cast<const char*>(chunk), 4), "chunk overruns file");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) bad(path, "fmt", "chunk shorter than 16 bytes");
      const unsigned char* f = bytes.data() + body;
      format_tag = read_le<std::uint16_t>(f);
      channels = read_le<std::uint16_t>(f + 2);
      fs = read_le<std::uint32_t>(f + 4);
      block_align = read_le<std::uint16_t>(f + 12);
      bits = read_le<std::uint16_t>(f + 14);
      if (format_tag == kFormatExtensible) {
        if (size < 40) bad(path, "fmt.extensible", "chunk shorter than 40 bytes");
        // The first two bytes of the subformat GUID carry the codec tag.
        format_tag = read_le<std::uint16_t>(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) bad(path, "fmt", "missing chunk");
  if (!data) bad(path, "data", "missing chunk");
  if (channels != 1) bad(path, "channels", "expected 1, got " + std::to_string(channels));
  if (fs == 0 || fs > static_cast<std::uint32_t>(INT32_MAX)) bad(path, "sample_rate", "invalid value");

  WavData out;
  out.fs = static_cast<int>(fs);
  if (format_tag == kFormatPcm && bits == 16) {
    if (block_align != 2) bad(path, "block_align", "expected 2 for mono PCM16");
    out.format = WavFormat::pcm16;
    out.samples.resize(data_size / 2);
    for (std::size_t i = 0; i < out.samples.size(); ++i)
      out.samples[i] = static_cast<double>(read_le<std::int16_t>(data + 2 * i)) / 32768.0;
  } else if (format_tag == kFormatFloat && bits == 32) {
    if (block_align != 4) bad(path, "block_align", "expected 4 for mono float32");
    out.format = WavFormat::float32;
    out.samples.resize(data_size / 4);
    for (std::size_t i = 0; i < out.samples.size(); ++i)
      out.samples[i] = static_cast<double>(read_le<float>(data + 4 * i));
  } else {
    bad(path, "format_tag",
        "unsupported codec " + std::to_string(format_tag) + " with " + std::to_string(bits) + " bits per sample");
  }
  return out;
}

void save_wav(const std::filesystem::path& path, std::span<const double> samples, int fs, WavFormat format) {
  if (fs <= 0) throw std::invalid_argument("save_wav: fs must be positive");
  const std::uint16_t bytes_per_sample = format == WavFormat::pcm16 ? 2 : 4;
  const auto data_size = static_cast<std::uint32_t>(samples.size() * bytes_per_sample);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("RIFF", 4);
  write_le<std::uint32_t>(out, 36 + data_size);
  out.write("WAVEfmt ", 8);
  write_le<std::uint32_t>(out, 16);
  write_le<std::uint16_t>(out, format == WavFormat::pcm16 ? kFormatPcm : kFormatFloat);
  write_le<std::uint16_t>(out, 1);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(fs));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(fs) * bytes_per_sample);
  write_le<std::uint16_t>(out, bytes_per_sample);
  write_le<std::uint16_t>(out, static_cast<std::uint16_t>(8 * bytes_per_sample));
  out.write("data", 4);
  write_le<std::uint32_t>(out, data_size);
  for (double x : samples) {
    if (format == WavFormat::pcm16) {
      const double q = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
      write_le<std::int16_t>(out, static_cast<std::int16_t>(q));
    } else {
      write_le<float>(out, static_cast<float>(x));
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace sfi
