#include "edgetune/client.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

#include "net_util.hpp"

namespace edgetune {

namespace {

std::vector<u8> build_request(std::span<const u8> image_bytes, const GatherSpec& spec) {
  FeatureFrame f;
  f.frame_type = FrameType::request;
  f.input_id = Sha256::digest(image_bytes);
  f.mode = spec.mode;
  f.k = static_cast<u16>(spec.k);
  f.g = static_cast<u16>(spec.g);
  f.dtype = Dtype::u8tag;
  f.dims = {static_cast<u64>(image_bytes.size())};
  f.payload.assign(image_bytes.begin(), image_bytes.end());
  return encode_frame(f);
}

Tensor<float> parse_reply(std::span<const u8> reply_bytes, const GatherSpec& spec,
                          u64 request_bytes, TransferRecord* record) {
  FeatureFrame reply;
  try {
    reply = decode_frame(reply_bytes);
  } catch (const FrameError& e) {
    throw TransportError(TransportError::Kind::decode, e.what());
  }
  if (reply.frame_type == FrameType::error) {
    TransportError err(TransportError::Kind::server_error,
                       "server error frame: " + reply.error_message());
    err.server_code = reply.error_code();
    throw err;
  }
  if (reply.frame_type != FrameType::feature)
    throw TransportError(TransportError::Kind::decode, "unexpected reply frame type");
  if (record) {
    record->mode = spec.mode;
    record->request_bytes = request_bytes;
    record->response_bytes = reply_bytes.size();
    record->payload_bytes = reply.payload.size();
  }
  return frame_payload_tensor<float>(reply);
}

}  // namespace

Tensor<float> LoopbackSource::fetch(std::span<const u8> image_bytes, const GatherSpec& spec,
                                    TransferRecord* record) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<u8> request = build_request(image_bytes, spec);
  const std::vector<u8> reply = service_->handle(request);
  Tensor<float> out = parse_reply(reply, spec, request.size(), record);
  if (record)
    record->wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

SocketClient::~SocketClient() { disconnect(); }

void SocketClient::disconnect() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void SocketClient::ensure_connected() {
  if (fd_ >= 0) return;
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw TransportError(TransportError::Kind::connect_failed, "socket() failed");
  timeval tv{};
  tv.tv_sec = timeout_ms_ / 1000;
  tv.tv_usec = (timeout_ms_ % 1000) * 1000;
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port_);
  if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
    hostent* he = ::gethostbyname(host_.c_str());
    if (!he || he->h_addrtype != AF_INET) {
      disconnect();
      throw TransportError(TransportError::Kind::connect_failed, "cannot resolve " + host_);
    }
    std::memcpy(&addr.sin_addr, he->h_addr_list[0], sizeof(addr.sin_addr));
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    disconnect();
    throw TransportError(TransportError::Kind::connect_failed,
                         "cannot connect to " + host_ + ":" + std::to_string(port_));
  }
}

Tensor<float> SocketClient::fetch(std::span<const u8> image_bytes, const GatherSpec& spec,
                                  TransferRecord* record) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<u8> request = build_request(image_bytes, spec);
  std::vector<u8> reply;
  std::string err;
  for (int attempt = 0; attempt < 2; ++attempt) {
    ensure_connected();
    err.clear();
    if (net::send_all(fd_, request) && net::read_frame_bytes(fd_, reply, err) && err.empty())
      break;
    // requests are idempotent; drop the connection and retry once
    disconnect();
    if (attempt == 1) {
      if (errno == EAGAIN || errno == EWOULDBLOCK)
        throw TransportError(TransportError::Kind::timeout, "request timed out");
      throw TransportError(TransportError::Kind::io,
                           err.empty() ? "connection lost mid-request" : err);
    }
  }
  Tensor<float> out = parse_reply(reply, spec, request.size(), record);
  if (record)
    record->wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<OverheadRow> overhead_report(std::span<const TransferRecord> log) {
  if (log.empty()) throw ContractError("overhead_report: empty transfer log");
  std::map<GatherMode, std::pair<u64, u64>> per_mode;  // mode -> (images, bytes)
  for (const TransferRecord& r : log) {
    auto& [images, bytes] = per_mode[r.mode];
    ++images;
    bytes += r.payload_bytes;
  }
  std::vector<OverheadRow> rows;
  for (const auto& [mode, acc] : per_mode) {
    OverheadRow row;
    row.mode = mode;
    row.images = acc.first;
    row.mb_per_image =
        bytes_to_mb(acc.second) / static_cast<double>(acc.first);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace edgetune
