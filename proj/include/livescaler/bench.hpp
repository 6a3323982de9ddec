#pragma once

// Gesture-to-application latency: a conductor thread presses pads and publishes
// records; an instrument thread drains its inbox and applies them to a live
// engine. Latency runs from the pad event to the end of the engine update.

#include <livescaler/conductor.hpp>
#include <livescaler/instrument.hpp>
#include <livescaler/transport.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

namespace livescaler {

struct LatencyReport {
  std::vector<double> samples_us;
  std::size_t lost = 0;

  double percentile(double p) const {
    if (samples_us.empty()) return NAN;
    auto sorted = samples_us;
    std::sort(sorted.begin(), sorted.end());
    const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(sorted.size())));
    return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
  }
  double mean() const {
    if (samples_us.empty()) return NAN;
    return std::accumulate(samples_us.begin(), samples_us.end(), 0.0) / static_cast<double>(samples_us.size());
  }
  double max() const { return samples_us.empty() ? NAN : *std::max_element(samples_us.begin(), samples_us.end()); }
  double min() const { return samples_us.empty() ? NAN : *std::min_element(samples_us.begin(), samples_us.end()); }

  std::string summary() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "n=%zu lost=%zu min=%.1fus mean=%.1fus p50=%.1fus p90=%.1fus p99=%.1fus p99.9=%.1fus max=%.1fus",
                  samples_us.size(), lost, min(), mean(), percentile(50), percentile(90), percentile(99),
                  percentile(99.9), max());
    return buf;
  }
};

struct LatencyBenchOptions {
  std::size_t gestures = 10'000;
  std::chrono::microseconds spacing{200};
  /// Empty for the in-process hub; otherwise a loopback UDP host:port.
  std::string udp_address;
  SwitchMode mode = SwitchMode::Legato;
};

inline LatencyReport run_latency_bench(const LatencyBenchOptions& opt) {
  using Clock = std::chrono::steady_clock;
  const auto origin = Clock::now();
  auto now_us = [&] { return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - origin).count(); };

  InstrumentConfig icfg;
  icfg.mode = opt.mode;
  Instrument instrument(icfg);
  std::vector<std::uint8_t> sink_bytes;
  const Instrument::MidiSink sink = [&](std::span<const std::uint8_t> b) {
    sink_bytes.insert(sink_bytes.end(), b.begin(), b.end());
    if (sink_bytes.size() > 4096) sink_bytes.clear();
  };
  // A held chord gives every transform change real work to do.
  const std::uint8_t chord[] = {0x90, 60, 100, 0x90, 64, 100, 0x90, 67, 100, 0x91, 48, 90};
  instrument.on_midi(chord, 0, sink);

  // Index = broadcast seq. Written before publishing, read after receiving.
  const std::size_t slots = opt.gestures + 2;
  auto sent_at = std::make_unique<std::atomic<std::int64_t>[]>(slots);
  for (std::size_t i = 0; i < slots; ++i) sent_at[i].store(-1);
  std::vector<double> latency;
  latency.reserve(opt.gestures);

  const std::string channel = "bench-" + std::to_string(reinterpret_cast<std::uintptr_t>(sent_at.get()));
  auto inbox = InProcHub::instance().subscribe(channel);
  std::unique_ptr<UdpReceiver> udp_rx;
  std::unique_ptr<UdpSender> udp_tx;
  if (!opt.udp_address.empty()) {
    udp_rx = std::make_unique<UdpReceiver>(opt.udp_address);
    const auto host = opt.udp_address.substr(0, opt.udp_address.rfind(':'));
    udp_tx = std::make_unique<UdpSender>(std::vector<std::string>{host + ":" + std::to_string(udp_rx->port())});
  }

  std::atomic<bool> done{false};
  std::thread consumer([&] {
    auto apply = [&](const std::string& rec) {
      const auto r = instrument.on_record(rec, now_us(), sink);
      const auto t = now_us();
      if (r.msg && r.status == Receiver::Status::Fresh && r.msg->seq < slots) {
        const auto t0 = sent_at[r.msg->seq].load();
        if (t0 >= 0) latency.push_back(static_cast<double>(t - t0));
      }
    };
    if (udp_rx) {
      while (!done.load()) {
        if (auto rec = udp_rx->receive(std::chrono::milliseconds(20))) apply(*rec);
      }
      while (auto rec = udp_rx->receive(std::chrono::milliseconds(50))) apply(*rec);
    } else {
      while (auto rec = inbox->pop()) apply(*rec);
    }
  });

  Conductor conductor;
  static constexpr std::pair<int, int> kPads[] = {{0, 1}, {1, 1}, {2, 1}, {0, 2}, {1, 2}, {2, 2}, {3, 1}, {3, 2}};
  std::size_t sent = 0;
  auto next = Clock::now();
  for (std::size_t i = 0; i < opt.gestures; ++i) {
    next += opt.spacing;
    std::this_thread::sleep_until(next);
    const auto [row, col] = kPads[i % std::size(kPads)];
    const auto t0 = now_us();
    auto res = conductor.handle(PadEvent::down(row, col, t0));
    conductor.handle(PadEvent::up(row, col, t0));
    if (!res.broadcast) continue;
    if (res.broadcast->seq < slots) sent_at[res.broadcast->seq].store(t0);
    const auto record = encode_msg(*res.broadcast);
    if (udp_tx)
      udp_tx->send(record);
    else
      InProcHub::instance().publish(channel, record);
    ++sent;
  }
  done.store(true);
  inbox->close();
  consumer.join();

  LatencyReport report;
  report.samples_us = std::move(latency);
  report.lost = sent - report.samples_us.size();
  return report;
}

}  // namespace livescaler
