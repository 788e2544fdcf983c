#pragma once

#include <array>
#include <vector>

#include "edgetune/common.hpp"
#include "edgetune/gather.hpp"

namespace edgetune {

// Framed binary protocol for gathered features. Little-endian throughout,
// bit-exact round trip. Layout:
//
//   magic "MIET" | version u16 | frame_type u8 | input_id[32] | mode u8 |
//   k u16 | g u16 | dtype u8 | rank u8 | dims u64[rank] | payload | crc32 u32
//
// The crc covers the payload only. Payload length is product(dims) times the
// dtype size; there is no separate length field.

constexpr std::array<u8, 4> kFrameMagic = {'M', 'I', 'E', 'T'};
constexpr u16 kFrameVersion = 1;
constexpr u8 kFrameMaxRank = 8;

enum class FrameType : u8 { request = 0, feature = 1, error = 2 };

enum class FrameErrorKind : u8 {
  bad_magic,
  bad_version,
  truncated,
  crc_mismatch,
  malformed,  // bad enum value, rank overflow, trailing bytes, size overflow
};

struct FrameError : Error {
  FrameErrorKind kind;
  FrameError(FrameErrorKind k, const std::string& msg) : Error(msg), kind(k) {}
};

// Error-frame payload reason codes (u16 prefix of the payload).
enum class ErrorCode : u16 {
  none = 0,
  bad_request = 1,
  bad_image = 2,
  k_out_of_range = 3,
  g_out_of_range = 4,
  unsupported = 5,
  internal = 6,
};

struct FeatureFrame {
  u16 version = kFrameVersion;
  FrameType frame_type = FrameType::request;
  Digest256 input_id{};
  GatherMode mode = GatherMode::sum;
  u16 k = 0;
  u16 g = 1;
  Dtype dtype = Dtype::f32;
  std::vector<u64> dims;
  std::vector<u8> payload;

  u64 expected_payload_bytes() const;

  // error-frame helpers: payload = code u16 | utf-8 message
  static FeatureFrame make_error(const Digest256& input_id, ErrorCode code,
                                 const std::string& message);
  ErrorCode error_code() const;
  std::string error_message() const;
};

std::vector<u8> encode_frame(const FeatureFrame& f);
FeatureFrame decode_frame(std::span<const u8> bytes);

// Reinterpret a feature frame's payload as a typed tensor.
template <typename S>
Tensor<S> frame_payload_tensor(const FeatureFrame& f) {
  if (f.dtype != dtype_of<S>())
    throw FrameError(FrameErrorKind::malformed,
                     "frame dtype tag " + std::to_string(static_cast<int>(f.dtype)) +
                         " does not match the requested scalar type");
  std::vector<i64> shape(f.dims.begin(), f.dims.end());
  Tensor<S> t(std::move(shape));
  std::copy(f.payload.begin(), f.payload.end(),
            reinterpret_cast<u8*>(t.mutable_data().data()));
  return t;
}

}  // namespace edgetune
