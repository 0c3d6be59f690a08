#include "avt/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace avt {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}

void put_f32(std::ostream& os, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return true;
}

bool get_u64(std::istream& is, std::uint64_t& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return true;
}

double get_f64_or_throw(std::istream& is, const std::string& path) {
  std::uint64_t v;
  if (!get_u64(is, v)) throw IoError("truncated tensor payload in " + path);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

float get_f32_or_throw(std::istream& is, const std::string& path) {
  std::uint32_t v;
  if (!get_u32(is, v)) throw IoError("truncated tensor payload in " + path);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

void check_magic(std::istream& is, const char* magic, const std::string& path) {
  char buf[4];
  if (!is.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
    throw IoError(strcat_msg("bad magic in ", path, " (expected ", magic, ")"));
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<NamedTensor>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write("AVTT", 4);
  put_u32(os, kCheckpointVersion);
  for (const NamedTensor& p : params) {
    put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u64(os, p.tensor.rank());
    for (std::size_t d : p.tensor.shape()) put_u64(os, d);
    for (std::size_t i = 0; i < p.tensor.size(); ++i)
      put_f64(os, p.tensor[i]);
  }
  if (!os) throw IoError("write failed: " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  check_magic(is, "AVTT", path);
  std::uint32_t version;
  if (!get_u32(is, version) || version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version in " + path);
  std::vector<NamedTensor> out;
  std::uint32_t name_len;
  while (get_u32(is, name_len)) {
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw IoError("truncated record name in " + path);
    std::uint64_t rank;
    if (!get_u64(is, rank)) throw IoError("truncated record in " + path);
    Shape shape(rank);
    for (auto& d : shape) {
      std::uint64_t e;
      if (!get_u64(is, e)) throw IoError("truncated extents in " + path);
      d = static_cast<std::size_t>(e);
    }
    std::vector<double> data(numel(shape));
    for (auto& v : data) v = get_f64_or_throw(is, path);
    out.push_back(NamedTensor{std::move(name), Tensor(shape, std::move(data))});
  }
  return out;
}

void save_f32_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open tensor file for writing: " + path);
  os.write("AVTF", 4);
  put_u32(os, kFrameFileVersion);
  put_u64(os, t.rank());
  for (std::size_t d : t.shape()) put_u64(os, d);
  for (std::size_t i = 0; i < t.size(); ++i)
    put_f32(os, static_cast<float>(t[i]));
  if (!os) throw IoError("write failed: " + path);
}

Tensor load_f32_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open tensor file: " + path);
  check_magic(is, "AVTF", path);
  std::uint32_t version;
  if (!get_u32(is, version) || version != kFrameFileVersion)
    throw IoError("unsupported tensor file version in " + path);
  std::uint64_t rank;
  if (!get_u64(is, rank)) throw IoError("truncated tensor file " + path);
  Shape shape(rank);
  for (auto& d : shape) {
    std::uint64_t e;
    if (!get_u64(is, e)) throw IoError("truncated extents in " + path);
    d = static_cast<std::size_t>(e);
  }
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = static_cast<double>(get_f32_or_throw(is, path));
  return Tensor(shape, std::move(data));
}

}  // namespace avt
