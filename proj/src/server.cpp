#include "iotarch/server.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <future>
#include <iostream>
#include <list>
#include <mutex>
#include <thread>

#include "iotarch/error.hpp"

namespace iotarch {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

// One live-event subscriber: the kernel thread pushes, the session thread
// drains and writes.
struct EventSink {
  std::string prefix;
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<std::string> queue;
  bool closed = false;

  void push(std::string message) {
    {
      std::lock_guard lock(mutex);
      if (closed) return;
      queue.push_back(std::move(message));
    }
    ready.notify_one();
  }
  void close() {
    {
      std::lock_guard lock(mutex);
      closed = true;
    }
    ready.notify_all();
  }
};

// Live-event fan-out. Shared with the broker tap so the tap stays valid if the
// platform outlives the server.
struct EventHub {
  std::mutex mutex;
  std::list<std::shared_ptr<EventSink>> sinks;

  void publish(const Envelope& e) {
    std::lock_guard lock(mutex);
    if (sinks.empty()) return;
    std::string text;
    for (auto& sink : sinks) {
      if (e.topic.compare(0, sink->prefix.size(), sink->prefix) != 0) continue;
      if (text.empty()) text = e.to_json().dump();
      sink->push(text);
    }
  }
};

}  // namespace

struct Server::Impl {
  Platform& platform;
  ServerOptions options;
  ApiRouter router;
  asio::io_context io;
  tcp::acceptor acceptor{io};
  unsigned short bound_port = 0;

  std::atomic<bool> stopping{false};
  std::atomic<bool> kernel_exited{false};
  std::thread kernel_thread;
  std::thread accept_thread;

  std::mutex connections_mutex;
  std::list<std::shared_ptr<tcp::socket>> sockets;
  std::list<std::thread> connection_threads;

  std::shared_ptr<EventHub> hub = std::make_shared<EventHub>();

  std::mutex stop_mutex;
  std::condition_variable stopped;
  bool started = false;
  bool done = false;

  Impl(Platform& p, ServerOptions o) : platform(p), options(std::move(o)), router(p) {}

  void drain_commands() {
    for (auto& command : platform.kernel().commands().take_all()) command();
  }

  // Advances one tick per tick_ms until the horizon, then keeps answering
  // requests against the final state. Requests are served between ticks.
  void kernel_loop() {
    using clock = std::chrono::steady_clock;
    const Tick horizon = platform.horizon();
    Tick next = platform.started() ? platform.now() + 1 : 0;
    auto deadline = clock::now();
    while (!stopping.load()) {
      if (next < horizon && clock::now() >= deadline) {
        platform.advance(next);
        ++next;
        if (next == horizon) platform.finish();
        deadline += std::chrono::milliseconds(options.tick_ms);
      }
      if (platform.started()) drain_commands();
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    drain_commands();
    kernel_exited.store(true);
  }

  ApiResponse call(ApiRequest request) {
    if (stopping.load()) return ApiResponse{503, Json{{"code", "Unavailable"}, {"message", "server is stopping"}}};
    auto promise = std::make_shared<std::promise<ApiResponse>>();
    auto future = promise->get_future();
    platform.kernel().commands().post([this, promise, request = std::move(request)] {
      try {
        promise->set_value(router.handle(request));
      } catch (const std::exception& e) {
        promise->set_value(ApiResponse{500, Json{{"code", "Internal"}, {"message", e.what()}}});
      }
    });
    while (future.wait_for(std::chrono::milliseconds(50)) != std::future_status::ready) {
      if (kernel_exited.load()) return ApiResponse{503, Json{{"code", "Unavailable"}, {"message", "server stopped"}}};
    }
    return future.get();
  }

  // The stream borrows the shared socket so stop() can shut it down and
  // unblock a pending write or close handshake.
  void serve_events(tcp::socket& socket, http::request<http::string_body> req, const std::string& prefix) {
    websocket::stream<tcp::socket&> ws(socket);
    beast::error_code ec;
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);
    auto sink = std::make_shared<EventSink>();
    sink->prefix = prefix;
    {
      std::lock_guard lock(hub->mutex);
      hub->sinks.push_back(sink);
    }
    while (true) {
      std::string message;
      {
        std::unique_lock lock(sink->mutex);
        sink->ready.wait(lock, [&] { return sink->closed || !sink->queue.empty(); });
        if (sink->closed) break;
        message = std::move(sink->queue.front());
        sink->queue.pop_front();
      }
      ws.write(asio::buffer(message), ec);
      if (ec) break;
    }
    {
      std::lock_guard lock(hub->mutex);
      hub->sinks.remove(sink);
    }
    if (!ec) ws.close(websocket::close_code::going_away, ec);
  }

  void serve_connection(std::shared_ptr<tcp::socket> socket) {
    beast::flat_buffer buffer;
    beast::error_code ec;
    while (!stopping.load()) {
      http::request<http::string_body> req;
      http::read(*socket, buffer, req, ec);
      if (ec) break;
      if (websocket::is_upgrade(req)) {
        const ApiRequest probe = make_request("GET", std::string(req.target()));
        if (probe.path == "/events") {
          auto it = probe.query.find("prefix");
          serve_events(*socket, std::move(req), it == probe.query.end() ? std::string{} : it->second);
          return;
        }
      }
      ApiResponse answer = call(make_request(std::string(req.method_string()), std::string(req.target()), req.body()));
      http::response<http::string_body> res{static_cast<http::status>(answer.status), req.version()};
      res.set(http::field::content_type, "application/json");
      res.set(http::field::access_control_allow_origin, "*");
      res.keep_alive(req.keep_alive());
      res.body() = answer.body.dump();
      res.prepare_payload();
      http::write(*socket, res, ec);
      if (ec || !res.keep_alive()) break;
    }
    socket->shutdown(tcp::socket::shutdown_both, ec);
  }

  void accept_loop() {
    while (!stopping.load()) {
      auto socket = std::make_shared<tcp::socket>(io);
      beast::error_code ec;
      acceptor.accept(*socket, ec);
      if (ec || stopping.load()) break;
      std::lock_guard lock(connections_mutex);
      sockets.push_back(socket);
      connection_threads.emplace_back([this, socket] { serve_connection(socket); });
    }
  }
};

Server::Server(Platform& platform, ServerOptions options)
    : impl_(std::make_unique<Impl>(platform, std::move(options))) {
  impl_->platform.broker().add_tap([hub = impl_->hub](const Envelope& e) { hub->publish(e); });
}

Server::~Server() { stop(); }

void Server::start() {
  Impl& s = *impl_;
  const tcp::endpoint endpoint(asio::ip::make_address(s.options.address), s.options.port);
  s.acceptor.open(endpoint.protocol());
  s.acceptor.set_option(asio::socket_base::reuse_address(true));
  s.acceptor.bind(endpoint);
  s.acceptor.listen();
  s.bound_port = s.acceptor.local_endpoint().port();
  s.started = true;
  s.kernel_thread = std::thread([&s] { s.kernel_loop(); });
  s.accept_thread = std::thread([&s] { s.accept_loop(); });
}

void Server::stop() {
  Impl& s = *impl_;
  if (!s.started || s.stopping.exchange(true)) return;
  {
    // Wake the blocking accept.
    beast::error_code ec;
    tcp::socket poke(s.io);
    poke.connect(tcp::endpoint(asio::ip::make_address(s.options.address), s.bound_port), ec);
  }
  s.accept_thread.join();
  {
    std::lock_guard lock(s.hub->mutex);
    for (auto& sink : s.hub->sinks) sink->close();
  }
  {
    std::lock_guard lock(s.connections_mutex);
    for (auto& socket : s.sockets) {
      beast::error_code ec;
      socket->shutdown(tcp::socket::shutdown_both, ec);
    }
  }
  s.kernel_thread.join();
  for (auto& t : s.connection_threads) t.join();
  beast::error_code ec;
  s.acceptor.close(ec);
  {
    std::lock_guard lock(s.stop_mutex);
    s.done = true;
  }
  s.stopped.notify_all();
}

void Server::wait() {
  std::unique_lock lock(impl_->stop_mutex);
  impl_->stopped.wait(lock, [&] { return impl_->done; });
}

unsigned short Server::port() const noexcept { return impl_->bound_port; }

ApiResponse Server::call(ApiRequest request) { return impl_->call(std::move(request)); }

int serve(Platform& platform, unsigned short port, unsigned tick_ms) {
  Server server(platform, ServerOptions{"127.0.0.1", port, tick_ms});
  server.start();
  std::cerr << "listening on http://127.0.0.1:" << server.port() << " (" << tick_ms << " ms/tick)\n";
  asio::io_context signals_io;
  asio::signal_set signals(signals_io, SIGINT, SIGTERM);
  signals.async_wait([&](const beast::error_code&, int) { server.stop(); });
  signals_io.run();
  return 0;
}

}  // namespace iotarch
