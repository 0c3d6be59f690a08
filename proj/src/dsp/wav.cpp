#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "avt/dsp.hpp"

namespace avt::dsp {

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw IoError("truncated WAV: " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t get_u16(std::istream& is, const std::string& path) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2))
    throw IoError("truncated WAV: " + path);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

}  // namespace

void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  auto n = static_cast<std::uint32_t>(w.samples.size());
  auto rate = static_cast<std::uint32_t>(w.sample_rate);
  os.write("RIFF", 4);
  put_u32(os, 36 + n * 2);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put_u32(os, 16);
  put_u16(os, 1);  // PCM
  put_u16(os, 1);  // mono
  put_u32(os, rate);
  put_u32(os, rate * 2);  // byte rate
  put_u16(os, 2);         // block align
  put_u16(os, 16);        // bits per sample
  os.write("data", 4);
  put_u32(os, n * 2);
  for (double v : w.samples) {
    double c = std::clamp(v, -1.0, 1.0);
    long q = std::lround(c * 32768.0);
    q = std::clamp(q, -32768L, 32767L);
    put_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (!os) throw IoError("write failed: " + path);
}

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char tag[4];
  if (!is.read(tag, 4) || std::memcmp(tag, "RIFF", 4) != 0)
    throw IoError("not a RIFF file: " + path);
  get_u32(is, path);
  if (!is.read(tag, 4) || std::memcmp(tag, "WAVE", 4) != 0)
    throw IoError("not a WAVE file: " + path);

  Waveform w;
  bool got_fmt = false;
  while (is.read(tag, 4)) {
    std::uint32_t chunk_size = get_u32(is, path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      std::uint16_t fmt = get_u16(is, path);
      std::uint16_t channels = get_u16(is, path);
      std::uint32_t rate = get_u32(is, path);
      get_u32(is, path);
      get_u16(is, path);
      std::uint16_t bits = get_u16(is, path);
      if (fmt != 1 || channels != 1 || bits != 16)
        throw IoError("expected PCM16 mono WAV: " + path);
      w.sample_rate = rate;
      if (chunk_size > 16)
        is.seekg(chunk_size - 16, std::ios::cur);
      got_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!got_fmt) throw IoError("WAV data before fmt chunk: " + path);
      std::size_t n = chunk_size / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        auto s = static_cast<std::int16_t>(get_u16(is, path));
        w.samples[i] = static_cast<double>(s) / 32768.0;
      }
      return w;
    } else {
      is.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
  }
  throw IoError("WAV without data chunk: " + path);
}

}  // namespace avt::dsp
