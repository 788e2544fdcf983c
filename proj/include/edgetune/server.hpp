#pragma once

#include <memory>
#include <thread>

#include "edgetune/feature_service.hpp"

namespace edgetune {

struct TransportError : Error {
  enum class Kind { connect_failed, io, timeout, decode, server_error };
  Kind kind;
  ErrorCode server_code = ErrorCode::none;
  TransportError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

// Blocking TCP server over the MIET frame protocol: one request frame in, one
// reply frame out, many concurrent connections, one thread per connection.
class FeatureServer {
 public:
  explicit FeatureServer(std::shared_ptr<FeatureService> service)
      : service_(std::move(service)) {}
  ~FeatureServer() { stop(); }

  // Binds and starts accepting; port 0 picks an ephemeral port. Returns the
  // bound port.
  u16 start(const std::string& bind_addr = "127.0.0.1", u16 port = 0);
  void stop();

  u16 port() const { return port_; }
  const FeatureService& service() const { return *service_; }

 private:
  void accept_loop();
  void serve_connection(int fd);

  std::shared_ptr<FeatureService> service_;
  int listen_fd_ = -1;
  u16 port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::vector<std::thread> connections_;
  std::vector<int> connection_fds_;
};

}  // namespace edgetune
