#include "edgetune/weight_io.hpp"

#include <cstdio>
#include <limits>

namespace edgetune {

namespace {

constexpr std::array<u8, 4> kMagic = {'E', 'T', 'W', '1'};

void put_u16(std::vector<u8>& out, u16 v) {
  out.push_back(static_cast<u8>(v));
  out.push_back(static_cast<u8>(v >> 8));
}

void put_u32(std::vector<u8>& out, u32 v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<u8>(v >> (8 * i)));
}

void put_u64(std::vector<u8>& out, u64 v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<u8>(v >> (8 * i)));
}

struct Reader {
  std::span<const u8> bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw IoError("ETW1: truncated file");
  }
  u8 get_u8() {
    need(1);
    return bytes[pos++];
  }
  u16 get_u16() {
    need(2);
    u16 v = static_cast<u16>(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return v;
  }
  u32 get_u32() {
    need(4);
    u32 v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<u32>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  u64 get_u64() {
    need(8);
    u64 v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<u64>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
};

}  // namespace

std::vector<u8> encode_etw1(const std::vector<RawTensor>& tensors) {
  std::vector<u8> out;
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u32(out, kEtw1Version);
  put_u32(out, static_cast<u32>(tensors.size()));
  for (const RawTensor& t : tensors) {
    if (t.name.size() > std::numeric_limits<u16>::max())
      throw IoError("ETW1: tensor name too long");
    if (t.dims.size() > 255) throw IoError("ETW1: tensor rank too large");
    if (t.dtype != Dtype::f32 && t.dtype != Dtype::f64)
      throw IoError("ETW1: dtype tag must be 0 (f32) or 1 (f64)");
    if (t.bytes.size() != t.numel() * dtype_size(t.dtype))
      throw IoError("ETW1: tensor '" + t.name + "' payload does not match dims");
    put_u16(out, static_cast<u16>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    out.push_back(static_cast<u8>(t.dims.size()));
    for (u64 d : t.dims) put_u64(out, d);
    out.push_back(static_cast<u8>(t.dtype));
    out.insert(out.end(), t.bytes.begin(), t.bytes.end());
  }
  return out;
}

std::vector<RawTensor> decode_etw1(std::span<const u8> bytes) {
  Reader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), kMagic.data(), 4) != 0) throw IoError("ETW1: bad magic");
  r.pos = 4;
  const u32 version = r.get_u32();
  if (version != kEtw1Version)
    throw IoError("ETW1: unsupported version " + std::to_string(version));
  const u32 count = r.get_u32();
  std::vector<RawTensor> tensors;
  tensors.reserve(count);
  for (u32 i = 0; i < count; ++i) {
    RawTensor t;
    const u16 name_len = r.get_u16();
    r.need(name_len);
    t.name.assign(reinterpret_cast<const char*>(bytes.data() + r.pos), name_len);
    r.pos += name_len;
    const u8 rank = r.get_u8();
    t.dims.resize(rank);
    u64 numel = 1;
    for (u8 j = 0; j < rank; ++j) {
      t.dims[j] = r.get_u64();
      if (t.dims[j] != 0 && numel > std::numeric_limits<u64>::max() / t.dims[j])
        throw IoError("ETW1: dims overflow in tensor '" + t.name + "'");
      numel *= t.dims[j];
    }
    const u8 dt = r.get_u8();
    if (dt > 1) throw IoError("ETW1: bad dtype tag in tensor '" + t.name + "'");
    t.dtype = static_cast<Dtype>(dt);
    const u64 payload = numel * dtype_size(t.dtype);
    r.need(static_cast<std::size_t>(payload));
    t.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                   bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + payload));
    r.pos += static_cast<std::size_t>(payload);
    tensors.push_back(std::move(t));
  }
  if (r.pos != bytes.size()) throw IoError("ETW1: trailing bytes after last tensor");
  return tensors;
}

std::vector<u8> read_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::fseek(f, 0, SEEK_END);
  const long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<u8> bytes(static_cast<std::size_t>(size < 0 ? 0 : size));
  const std::size_t got = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (got != bytes.size()) throw IoError("short read on '" + path + "'");
  return bytes;
}

void write_file(const std::string& path, std::span<const u8> bytes) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  const std::size_t put = bytes.empty() ? 0 : std::fwrite(bytes.data(), 1, bytes.size(), f);
  const int rc = std::fclose(f);
  if (put != bytes.size() || rc != 0) throw IoError("short write on '" + path + "'");
}

void write_etw1(const std::string& path, const std::vector<RawTensor>& tensors) {
  write_file(path, encode_etw1(tensors));
}

std::vector<RawTensor> read_etw1(const std::string& path) {
  return decode_etw1(read_file(path));
}

}  // namespace edgetune
