#pragma once

// WebSocket endpoint for browser control surfaces. Every connected UI gets the
// layout, then a state snapshot, then a fresh snapshot after each change. Pad
// frames from all UIs and from control MIDI are handled on one io_context
// thread, which is the conductor's single total order.

#include <livescaler/conductor.hpp>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <bitset>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <utility>

namespace livescaler {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = boost::beast::websocket;
using tcp = boost::asio::ip::tcp;

inline tcp::endpoint parse_endpoint(const std::string& host_port) {
  const auto colon = host_port.rfind(':');
  if (colon == std::string::npos) throw ConfigError("expected host:port, got '" + host_port + "'");
  boost::system::error_code ec;
  const auto addr = asio::ip::make_address(host_port.substr(0, colon), ec);
  if (ec) throw ConfigError("bad listen address '" + host_port + "'");
  int port = 0;
  try {
    port = std::stoi(host_port.substr(colon + 1));
  } catch (const std::exception&) {
    port = -1;
  }
  if (port < 0 || port > 65535) throw ConfigError("bad listen port in '" + host_port + "'");
  return {addr, static_cast<unsigned short>(port)};
}

class UiServer {
 public:
  /// Called on the io_context thread for every broadcast, in seq order.
  using BroadcastFn = std::function<void(const GlobalTransformMsg&)>;
  /// Called with warnings and per-gesture handling time.
  using LogFn = std::function<void(const std::string&)>;

  UiServer(asio::io_context& io, const tcp::endpoint& endpoint, Conductor& conductor, BroadcastFn on_broadcast,
           LogFn log = {})
      : io_(io), acceptor_(io), conductor_(conductor), on_broadcast_(std::move(on_broadcast)), log_(std::move(log)) {
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(asio::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen();
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void start() { accept(); }

  void stop() {
    asio::post(io_, [this] {
      boost::system::error_code ec;
      acceptor_.close(ec);
      for (auto& s : sessions_) s->close();
    });
  }

  /// Thread-safe entry for pad events from other sources (control MIDI).
  void submit(const PadEvent& ev) {
    asio::post(io_, [this, ev] { handle(ev, nullptr); });
  }

  std::size_t session_count() const { return sessions_.size(); }

 private:
  class Session : public std::enable_shared_from_this<Session> {
   public:
    Session(tcp::socket socket, UiServer& server) : ws_(std::move(socket)), server_(server) {}

    void start() {
      ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        self->server_.opened(self);
        self->read();
      });
    }

    void send(std::shared_ptr<const std::string> text) {
      if (closing_) return;
      queue_.push_back(std::move(text));
      if (queue_.size() == 1) write();
    }

    /// Closes once queued frames are written.
    void close() {
      if (closing_) return;
      closing_ = true;
      if (queue_.empty()) finish();
    }

    std::bitset<kGridSize * kGridSize> held;

   private:
    void read() {
      ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->server_.closed(self);
          return;
        }
        const auto text = beast::buffers_to_string(self->buffer_.data());
        self->buffer_.consume(self->buffer_.size());
        self->server_.frame(self, text);
        self->read();
      });
    }

    void write() {
      ws_.text(true);
      ws_.async_write(asio::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return;
        self->queue_.pop_front();
        if (!self->queue_.empty())
          self->write();
        else if (self->closing_)
          self->finish();
      });
    }

    void finish() {
      ws_.async_close(websocket::close_code::going_away, [self = shared_from_this()](beast::error_code) {});
    }

    websocket::stream<beast::tcp_stream> ws_;
    UiServer& server_;
    beast::flat_buffer buffer_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    bool closing_ = false;
  };

  void accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Session>(std::move(socket), *this)->start();
      accept();
    });
  }

  void opened(const std::shared_ptr<Session>& s) {
    sessions_.insert(s);
    s->send(std::make_shared<const std::string>(conductor_.layout_frame().dump()));
    s->send(std::make_shared<const std::string>(conductor_.snapshot().dump()));
  }

  // A vanished UI cannot send its pad releases, so they are synthesized here.
  void closed(const std::shared_ptr<Session>& s) {
    release_session(*s);
    sessions_.erase(s);
  }

  void release_session(Session& s) {
    for (std::size_t i = 0; i < s.held.size(); ++i)
      if (s.held.test(i))
        handle(PadEvent::up(static_cast<int>(i / kGridSize), static_cast<int>(i % kGridSize)), &s);
  }

  void frame(const std::shared_ptr<Session>& s, const std::string& text) {
    try {
      const auto j = nlohmann::json::parse(text);
      if (j.is_object() && j.value("type", "") == "release") {
        release_session(*s);
        return;
      }
      if (const auto ev = parse_ui_frame(text)) handle(*ev, s.get());
    } catch (const std::exception& e) {
      log("ignored UI frame: " + std::string(e.what()));
    }
  }

  void handle(const PadEvent& ev, Session* from) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto idx = static_cast<std::size_t>(ev.row * kGridSize + ev.col);
    if (from) from->held.set(idx, ev.state == PadEvent::State::Down);
    const auto res = conductor_.handle(ev);
    if (res.warning) log("warning: " + *res.warning);
    if (res.broadcast) {
      on_broadcast_(*res.broadcast);
      const auto us = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0);
      log("seq " + std::to_string(res.broadcast->seq) + " dispatched in " + std::to_string(us.count()) + "us");
    }
    if (res.state_changed) {
      const auto snap = std::make_shared<const std::string>(conductor_.snapshot().dump());
      for (const auto& s : sessions_) s->send(snap);
    }
  }

  void log(const std::string& line) {
    if (log_) log_(line);
  }

  asio::io_context& io_;
  tcp::acceptor acceptor_;
  Conductor& conductor_;
  BroadcastFn on_broadcast_;
  LogFn log_;
  std::set<std::shared_ptr<Session>> sessions_;
};

}  // namespace livescaler
