#pragma once

// Long-running conductor process: WebSocket UI endpoint, optional control MIDI
// input, and broadcast on every configured transport.

#include <livescaler/runtime.hpp>
#include <livescaler/ui_server.hpp>

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <thread>

namespace livescaler {

/// Runs until `stop` is set. `on_ready` receives the bound UI port.
inline void run_conductor(const ConductorConfig& cfg, const std::atomic<bool>& stop, const LogFn& log = {},
                          const std::function<void(unsigned short)>& on_ready = {}) {
  asio::io_context io;
  Conductor conductor(cfg.layout, Temperament(cfg.anchor_midi, cfg.base));
  std::unique_ptr<UdpSender> udp;
  if (!cfg.udp_targets.empty()) {
    try {
      udp = std::make_unique<UdpSender>(cfg.udp_targets, cfg.multicast_ttl);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  auto publish = [&](const GlobalTransformMsg& m) {
    const auto record = encode_msg(m);
    if (udp && udp->send(record) != udp->target_count() && log)
      log("seq " + std::to_string(m.seq) + " not sent to every UDP target");
    for (const auto& ch : cfg.inproc_targets) InProcHub::instance().publish(ch, record);
  };

  std::optional<UiServer> server;
  const auto endpoint = parse_endpoint(cfg.ui_listen);
  try {
    server.emplace(io, endpoint, conductor, publish, log);
  } catch (const boost::system::system_error& e) {
    throw std::system_error(e.code().value(), std::generic_category(), "cannot listen on " + cfg.ui_listen);
  }

  std::optional<MidiPort> control;
  if (cfg.control_input != "none") control = MidiPort::open_input(cfg.control_input);
  std::atomic<bool> halt{false};
  std::thread control_reader;
  if (control)
    control_reader = std::thread([&] {
      MidiStreamParser parser;
      while (!halt.load()) {
        auto bytes = control->read(std::chrono::milliseconds(20));
        if (!bytes) break;
        const auto* p = reinterpret_cast<const std::uint8_t*>(bytes->data());
        parser.feed(std::span<const std::uint8_t>(p, bytes->size()), [&](std::span<const std::uint8_t> msg) {
          if (msg.size() != 3 || (msg[0] & 0xE0) != 0x80) return;
          const bool down = (msg[0] & 0xF0) == 0x90 && msg[2] > 0;
          if (const auto ev = cfg.control_map.translate(msg[1], down)) server->submit(*ev);
        });
      }
    });

  asio::steady_timer timer(io);
  std::function<void()> watch = [&] {
    timer.expires_after(std::chrono::milliseconds(20));
    timer.async_wait([&](beast::error_code ec) {
      if (ec) return;
      if (!stop.load()) return watch();
      server->stop();
      // Give close frames a moment to go out.
      timer.expires_after(std::chrono::milliseconds(100));
      timer.async_wait([&](beast::error_code) { io.stop(); });
    });
  };
  server->start();
  watch();
  if (log) log("conductor listening on " + cfg.ui_listen.substr(0, cfg.ui_listen.rfind(':')) + ":" +
               std::to_string(server->port()));
  if (on_ready) on_ready(server->port());
  io.run();
  halt.store(true);
  if (control_reader.joinable()) control_reader.join();
}

}  // namespace livescaler
