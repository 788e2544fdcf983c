#pragma once

// Internal socket helpers shared by the server and the client.

#include <span>
#include <string>
#include <vector>

#include "edgetune/common.hpp"

namespace edgetune::net {

// Send the whole buffer; false on any failure.
bool send_all(int fd, std::span<const u8> bytes);

// Read exactly n bytes. Returns 1 on success, 0 on clean EOF before the first
// byte, -1 on error or mid-buffer EOF.
int recv_exact(int fd, u8* dst, std::size_t n);

// Read one complete MIET frame from a stream into `out` (header first, then
// the dims-derived payload). Returns false on clean EOF between frames;
// throws TransportError-compatible Error text via `err` on stream corruption.
bool read_frame_bytes(int fd, std::vector<u8>& out, std::string& err);

constexpr u64 kMaxFramePayload = 1ull << 31;  // 2 GiB guard

}  // namespace edgetune::net
