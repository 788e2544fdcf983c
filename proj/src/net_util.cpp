#include "net_util.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "edgetune/frame.hpp"

namespace edgetune::net {

bool send_all(int fd, std::span<const u8> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && (errno == EINTR)) continue;
      return false;
    }
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

int recv_exact(int fd, u8* dst, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, dst + got, n - got, 0);
    if (r == 0) return got == 0 ? 0 : -1;
    if (r < 0) {
      if (errno == EINTR) continue;
      return -1;
    }
    got += static_cast<std::size_t>(r);
  }
  return 1;
}

bool read_frame_bytes(int fd, std::vector<u8>& out, std::string& err) {
  // fixed part: magic(4) version(2) type(1) input_id(32) mode(1) k(2) g(2)
  // dtype(1) rank(1)
  constexpr std::size_t kFixed = 46;
  out.resize(kFixed);
  const int rc = recv_exact(fd, out.data(), kFixed);
  if (rc == 0) return false;
  if (rc < 0) {
    err = "stream ended mid-frame";
    return false;
  }
  if (std::memcmp(out.data(), kFrameMagic.data(), 4) != 0) {
    err = "bad frame magic on stream";
    return false;
  }
  const u8 dtype_tag = out[44];
  const u8 rank = out[45];
  if (dtype_tag > 2 || rank > kFrameMaxRank) {
    err = "malformed frame header on stream";
    return false;
  }
  const std::size_t dims_bytes = 8 * static_cast<std::size_t>(rank);
  out.resize(kFixed + dims_bytes);
  if (recv_exact(fd, out.data() + kFixed, dims_bytes) != 1) {
    err = "stream ended in frame dims";
    return false;
  }
  u64 numel = 1;
  for (u8 i = 0; i < rank; ++i) {
    u64 d = 0;
    for (int b = 0; b < 8; ++b)
      d |= static_cast<u64>(out[kFixed + 8 * static_cast<std::size_t>(i) +
                                static_cast<std::size_t>(b)])
           << (8 * b);
    if (d != 0 && numel > kMaxFramePayload / d) {
      err = "frame payload exceeds the stream guard";
      return false;
    }
    numel *= d;
  }
  const u64 payload = numel * dtype_size(static_cast<Dtype>(dtype_tag));
  if (payload > kMaxFramePayload) {
    err = "frame payload exceeds the stream guard";
    return false;
  }
  const std::size_t tail = static_cast<std::size_t>(payload) + 4;  // payload + crc
  const std::size_t head = out.size();
  out.resize(head + tail);
  if (recv_exact(fd, out.data() + head, tail) != 1) {
    err = "stream ended in frame payload";
    return false;
  }
  return true;
}

}  // namespace edgetune::net
