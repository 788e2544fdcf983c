#include "edgetune/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

#include "net_util.hpp"

namespace edgetune {

u16 FeatureServer::start(const std::string& bind_addr, u16 port) {
  if (running_) throw ContractError("server already running");
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError(TransportError::Kind::connect_failed, "socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, bind_addr.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw TransportError(TransportError::Kind::connect_failed, "bad bind address " + bind_addr);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw TransportError(TransportError::Kind::connect_failed,
                         "cannot bind/listen on " + bind_addr + ":" + std::to_string(port));
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
  return port_;
}

void FeatureServer::stop() {
  if (!running_) return;
  running_ = false;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  listen_fd_ = -1;
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> conns;
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (int fd : connection_fds_) ::shutdown(fd, SHUT_RDWR);
    conns.swap(connections_);
  }
  for (auto& t : conns)
    if (t.joinable()) t.join();
}

void FeatureServer::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (running_ && (errno == EINTR || errno == ECONNABORTED)) continue;
      break;
    }
    std::lock_guard<std::mutex> lock(mu_);
    connection_fds_.push_back(fd);
    connections_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void FeatureServer::serve_connection(int fd) {
  std::vector<u8> frame;
  std::string err;
  while (running_) {
    err.clear();
    if (!net::read_frame_bytes(fd, frame, err)) {
      if (!err.empty()) {
        // unrecoverable stream state: answer once, then drop the connection
        auto reply =
            encode_frame(FeatureFrame::make_error(Digest256{}, ErrorCode::bad_request, err));
        net::send_all(fd, reply);
      }
      break;
    }
    const std::vector<u8> reply = service_->handle(frame);
    if (!net::send_all(fd, reply)) break;
  }
  ::close(fd);
}

}  // namespace edgetune
