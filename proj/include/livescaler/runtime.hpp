#pragma once

// Long-running instrument process: MIDI input, broadcast listeners and the
// engine consumer. Readers are producers into one inbox; the consumer thread
// is the only one touching the engine.

#include <livescaler/config.hpp>
#include <livescaler/instrument.hpp>
#include <livescaler/transport.hpp>

#include <fcntl.h>
#include <poll.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

namespace livescaler {

using LogFn = std::function<void(const std::string&)>;

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::system_error(errno, std::generic_category(), "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::uint8_t> read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::system_error(errno, std::generic_category(), "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_binary_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::system_error(errno, std::generic_category(), "cannot create " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::system_error(errno, std::generic_category(), "write failed: " + path);
}

/// Raw MIDI byte port: a device node, FIFO or file. `-` is stdin or stdout.
class MidiPort {
 public:
  static MidiPort open_input(const std::string& name) {
    if (name == "-") return MidiPort(::dup(STDIN_FILENO), name);
    return MidiPort(::open(name.c_str(), O_RDONLY | O_NONBLOCK | O_CLOEXEC), name);
  }

  static MidiPort open_output(const std::string& name) {
    if (name == "-") return MidiPort(::dup(STDOUT_FILENO), name);
    return MidiPort(::open(name.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644), name);
  }

  int fd() const noexcept { return fd_.fd(); }

  /// Bytes read, empty on timeout, nothing at end of stream.
  std::optional<std::string> read(std::chrono::milliseconds timeout) {
    pollfd p{fd(), POLLIN, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc == 0) return std::string();
    if (rc < 0) return errno == EINTR ? std::optional<std::string>(std::string()) : std::nullopt;
    char buf[512];
    const auto n = ::read(fd(), buf, sizeof(buf));
    if (n < 0) return (errno == EAGAIN || errno == EINTR) ? std::optional<std::string>(std::string()) : std::nullopt;
    if (n == 0) return std::nullopt;
    return std::string(buf, static_cast<std::size_t>(n));
  }

  void write(std::span<const std::uint8_t> bytes) {
    std::size_t done = 0;
    while (done < bytes.size()) {
      const auto n = ::write(fd(), bytes.data() + done, bytes.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw std::system_error(errno, std::generic_category(), "write " + name_);
      }
      done += static_cast<std::size_t>(n);
    }
  }

 private:
  MidiPort(int fd, std::string name) : fd_(fd), name_(std::move(name)) {
    if (fd_.fd() < 0) throw std::system_error(errno, std::generic_category(), "cannot open MIDI port " + name_);
  }

  Socket fd_;
  std::string name_;
};

struct InstrumentStats {
  std::size_t applied = 0;
  std::size_t stale = 0;
  std::size_t malformed = 0;
  std::size_t rejected = 0;
};

/// Runs until `stop` is set or every input has ended. Flushes before the
/// output port closes. Port open and bind failures throw before any thread starts.
inline InstrumentStats run_instrument(const InstrumentConfig& cfg, const std::atomic<bool>& stop, const LogFn& log = {}) {
  using Clock = std::chrono::steady_clock;
  cfg.validate();
  auto output = MidiPort::open_output(cfg.output_port);
  std::optional<MidiPort> input;
  if (cfg.input_port != "none") input = MidiPort::open_input(cfg.input_port);
  std::unique_ptr<UdpReceiver> udp;
  std::shared_ptr<InProcHub::Inbox> hub;
  if (cfg.listen.kind == ListenSpec::Kind::Udp) udp = std::make_unique<UdpReceiver>(cfg.listen.address);
  if (cfg.listen.kind == ListenSpec::Kind::InProcess) hub = InProcHub::instance().subscribe(cfg.listen.address);

  struct Item {
    bool record = false;
    std::string data;
  };
  SerialInbox<Item> inbox;
  std::atomic<int> live_producers{0};
  std::atomic<bool> halt{false};
  std::vector<std::thread> producers;
  auto producer = [&](auto body) {
    ++live_producers;
    producers.emplace_back([&, body] {
      body();
      --live_producers;
    });
  };
  constexpr auto kTick = std::chrono::milliseconds(20);
  if (input)
    producer([&] {
      while (!halt.load()) {
        auto bytes = input->read(kTick);
        if (!bytes) break;
        if (!bytes->empty()) inbox.push({false, std::move(*bytes)});
      }
    });
  if (udp)
    producer([&] {
      while (!halt.load())
        if (auto rec = udp->receive(kTick)) inbox.push({true, std::move(*rec)});
    });
  if (hub)
    producer([&] {
      while (!halt.load())
        if (auto rec = hub->pop_until(Clock::now() + kTick)) inbox.push({true, std::move(*rec)});
    });

  const auto origin = Clock::now();
  auto now_us = [&] { return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - origin).count(); };
  Instrument instrument(cfg);
  const Instrument::MidiSink sink = [&](std::span<const std::uint8_t> b) { output.write(b); };
  InstrumentStats stats;
  auto consume = [&](const Item& item) {
    if (!item.record) {
      const auto* p = reinterpret_cast<const std::uint8_t*>(item.data.data());
      instrument.on_midi(std::span<const std::uint8_t>(p, item.data.size()), now_us(), sink);
      return;
    }
    const auto r = instrument.on_record(item.data, now_us(), sink);
    switch (r.status) {
      case Receiver::Status::Fresh: ++stats.applied; break;
      case Receiver::Status::Stale: ++stats.stale; break;
      case Receiver::Status::Malformed:
        ++stats.malformed;
        if (log) log("malformed record: " + r.error);
        break;
      case Receiver::Status::Rejected:
        ++stats.rejected;
        if (log) log("rejected record: " + r.error);
        break;
    }
  };

  std::exception_ptr failure;
  try {
    while (!stop.load()) {
      auto deadline = Clock::now() + kTick;
      if (const auto due = instrument.next_due())
        deadline = std::min(deadline, origin + std::chrono::microseconds(*due));
      if (auto item = inbox.pop_until(deadline)) consume(*item);
      instrument.poll(now_us(), sink);
      if (live_producers.load() == 0 && !instrument.next_due() && inbox.empty()) break;
    }
    while (auto item = inbox.try_pop()) consume(*item);
    instrument.shutdown(now_us(), sink);
  } catch (...) {
    failure = std::current_exception();
  }
  halt.store(true);
  inbox.close();
  if (hub) hub->close();
  for (auto& t : producers) t.join();
  if (failure) std::rethrow_exception(failure);
  if (log)
    log("instrument stopped: applied=" + std::to_string(stats.applied) + " stale=" + std::to_string(stats.stale) +
        " malformed=" + std::to_string(stats.malformed) + " rejected=" + std::to_string(stats.rejected));
  return stats;
}

}  // namespace livescaler
