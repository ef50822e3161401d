#pragma once

// HTTP + WebSocket front end. Handler threads never touch simulation state:
// every request is posted to the kernel's command queue and answered from
// the kernel thread at a tick boundary.

#include <atomic>
#include <memory>
#include <string>

#include "iotarch/api.hpp"

namespace iotarch {

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 0;  // 0 picks an ephemeral port
  unsigned tick_ms = 100;   // wall-clock pacing of the kernel thread
};

class Server {
 public:
  Server(Platform& platform, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds, then starts the kernel, acceptor and connection threads.
  void start();
  /// Idempotent. Joins every thread.
  void stop();
  /// Blocks until stop() is called from another thread or a signal.
  void wait();
  unsigned short port() const noexcept;

  /// Runs `request` on the kernel thread and waits for the answer.
  ApiResponse call(ApiRequest request);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocking entry point for the CLI; stops on SIGINT/SIGTERM.
int serve(Platform& platform, unsigned short port, unsigned tick_ms);

}  // namespace iotarch
