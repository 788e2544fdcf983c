#include "edgetune/frame.hpp"

#include <cstring>
#include <limits>

#include "edgetune/crc32.hpp"

namespace edgetune {

namespace {

constexpr std::size_t kFixedHeaderBytes = 4 + 2 + 1 + 32 + 1 + 2 + 2 + 1 + 1;

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
    if (pos + n > bytes.size())
      throw FrameError(FrameErrorKind::truncated,
                       "frame truncated: need " + std::to_string(n) + " bytes at offset " +
                           std::to_string(pos) + ", have " + std::to_string(bytes.size() - pos));
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

u64 FeatureFrame::expected_payload_bytes() const {
  u64 n = 1;
  for (u64 d : dims) {
    if (d != 0 && n > std::numeric_limits<u64>::max() / d)
      throw FrameError(FrameErrorKind::malformed, "frame dims overflow");
    n *= d;
  }
  u64 s = static_cast<u64>(dtype_size(dtype));
  if (n > std::numeric_limits<u64>::max() / s)
    throw FrameError(FrameErrorKind::malformed, "frame payload size overflow");
  return n * s;
}

FeatureFrame FeatureFrame::make_error(const Digest256& input_id, ErrorCode code,
                                      const std::string& message) {
  FeatureFrame f;
  f.frame_type = FrameType::error;
  f.input_id = input_id;
  f.dtype = Dtype::u8tag;
  f.payload.reserve(2 + message.size());
  f.payload.push_back(static_cast<u8>(static_cast<u16>(code)));
  f.payload.push_back(static_cast<u8>(static_cast<u16>(code) >> 8));
  f.payload.insert(f.payload.end(), message.begin(), message.end());
  f.dims = {static_cast<u64>(f.payload.size())};
  return f;
}

ErrorCode FeatureFrame::error_code() const {
  if (frame_type != FrameType::error || payload.size() < 2) return ErrorCode::none;
  return static_cast<ErrorCode>(static_cast<u16>(payload[0] | (payload[1] << 8)));
}

std::string FeatureFrame::error_message() const {
  if (frame_type != FrameType::error || payload.size() < 2) return {};
  return std::string(payload.begin() + 2, payload.end());
}

std::vector<u8> encode_frame(const FeatureFrame& f) {
  if (f.dims.size() > kFrameMaxRank)
    throw FrameError(FrameErrorKind::malformed,
                     "frame rank " + std::to_string(f.dims.size()) + " exceeds max");
  const u64 want = f.expected_payload_bytes();
  if (want != f.payload.size())
    throw FrameError(FrameErrorKind::malformed,
                     "payload length " + std::to_string(f.payload.size()) +
                         " does not match dims (" + std::to_string(want) + " bytes)");
  std::vector<u8> out;
  out.reserve(kFixedHeaderBytes + 8 * f.dims.size() + f.payload.size() + 4);
  out.insert(out.end(), kFrameMagic.begin(), kFrameMagic.end());
  put_u16(out, f.version);
  out.push_back(static_cast<u8>(f.frame_type));
  out.insert(out.end(), f.input_id.begin(), f.input_id.end());
  out.push_back(static_cast<u8>(f.mode));
  put_u16(out, f.k);
  put_u16(out, f.g);
  out.push_back(static_cast<u8>(f.dtype));
  out.push_back(static_cast<u8>(f.dims.size()));
  for (u64 d : f.dims) put_u64(out, d);
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  put_u32(out, crc32(f.payload));
  return out;
}

FeatureFrame decode_frame(std::span<const u8> bytes) {
  Reader r{bytes};
  r.need(4);
  if (std::memcmp(bytes.data(), kFrameMagic.data(), 4) != 0)
    throw FrameError(FrameErrorKind::bad_magic, "bad frame magic");
  r.pos = 4;
  FeatureFrame f;
  f.version = r.get_u16();
  if (f.version != kFrameVersion)
    throw FrameError(FrameErrorKind::bad_version,
                     "unsupported frame version " + std::to_string(f.version));
  u8 ft = r.get_u8();
  if (ft > 2) throw FrameError(FrameErrorKind::malformed, "bad frame type " + std::to_string(ft));
  f.frame_type = static_cast<FrameType>(ft);
  r.need(32);
  std::memcpy(f.input_id.data(), bytes.data() + r.pos, 32);
  r.pos += 32;
  u8 mode = r.get_u8();
  if (mode > 4) throw FrameError(FrameErrorKind::malformed, "bad gather mode " + std::to_string(mode));
  f.mode = static_cast<GatherMode>(mode);
  f.k = r.get_u16();
  f.g = r.get_u16();
  u8 dt = r.get_u8();
  if (dt > 2) throw FrameError(FrameErrorKind::malformed, "bad dtype tag " + std::to_string(dt));
  f.dtype = static_cast<Dtype>(dt);
  u8 rank = r.get_u8();
  if (rank > kFrameMaxRank)
    throw FrameError(FrameErrorKind::malformed, "frame rank " + std::to_string(rank) + " exceeds max");
  f.dims.resize(rank);
  for (u8 i = 0; i < rank; ++i) f.dims[i] = r.get_u64();
  const u64 payload_bytes = f.expected_payload_bytes();
  if (payload_bytes > bytes.size())  // cheap guard before allocating
    throw FrameError(FrameErrorKind::truncated, "frame truncated: payload exceeds buffer");
  r.need(static_cast<std::size_t>(payload_bytes));
  f.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                   bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + payload_bytes));
  r.pos += static_cast<std::size_t>(payload_bytes);
  const u32 stored = r.get_u32();
  const u32 actual = crc32(f.payload);
  if (stored != actual)
    throw FrameError(FrameErrorKind::crc_mismatch, "payload crc mismatch");
  if (r.pos != bytes.size())
    throw FrameError(FrameErrorKind::malformed,
                     "trailing bytes after frame: " + std::to_string(bytes.size() - r.pos));
  return f;
}

}  // namespace edgetune
