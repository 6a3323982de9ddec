#pragma once

// Transports for broadcast records: an in-process hub and UDP datagrams
// (unicast, broadcast or multicast), plus the serialized inbox each engine drains.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

namespace livescaler {

/// Multi-producer, single-consumer FIFO. Its order is the order the engine sees.
template <typename T>
class SerialInbox {
 public:
  void push(T item) {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      items_.push_back(std::move(item));
    }
    cv_.notify_one();
  }

  /// Waits until an item arrives, the deadline passes, or the inbox closes.
  template <typename Clock, typename Duration>
  std::optional<T> pop_until(const std::chrono::time_point<Clock, Duration>& deadline) {
    std::unique_lock lock(mu_);
    cv_.wait_until(lock, deadline, [&] { return !items_.empty() || closed_; });
    return take(lock);
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !items_.empty() || closed_; });
    return take(lock);
  }

  std::optional<T> try_pop() {
    std::unique_lock lock(mu_);
    return take(lock);
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

  bool empty() const {
    std::lock_guard lock(mu_);
    return items_.empty();
  }

 private:
  std::optional<T> take(std::unique_lock<std::mutex>&) {
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    return item;
  }

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  bool closed_ = false;
};

/// Named in-process broadcast channels. Every subscriber of a channel receives
/// every record published on it.
class InProcHub {
 public:
  using Inbox = SerialInbox<std::string>;

  static InProcHub& instance() {
    static InProcHub hub;
    return hub;
  }

  std::shared_ptr<Inbox> subscribe(const std::string& channel) {
    auto inbox = std::make_shared<Inbox>();
    std::lock_guard lock(mu_);
    subscribers_[channel].push_back(inbox);
    return inbox;
  }

  /// Returns the number of live subscribers reached.
  std::size_t publish(const std::string& channel, const std::string& record) {
    std::vector<std::shared_ptr<Inbox>> targets;
    {
      std::lock_guard lock(mu_);
      auto& subs = subscribers_[channel];
      std::erase_if(subs, [](const std::weak_ptr<Inbox>& w) { return w.expired(); });
      for (auto& w : subs)
        if (auto s = w.lock()) targets.push_back(std::move(s));
    }
    for (auto& t : targets) t->push(record);
    return targets.size();
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::vector<std::weak_ptr<Inbox>>> subscribers_;
};

// ---------------------------------------------------------------------------
// UDP

/// Resolves `host:port` to an IPv4 address.
inline sockaddr_in resolve_ipv4(std::string_view host_port) {
  const auto colon = host_port.rfind(':');
  if (colon == std::string_view::npos) throw std::invalid_argument("expected host:port, got '" + std::string(host_port) + "'");
  const std::string host(host_port.substr(0, colon));
  const std::string port(host_port.substr(colon + 1));
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw std::invalid_argument("cannot resolve '" + std::string(host_port) + "': " + ::gai_strerror(rc));
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  return addr;
}

inline bool is_multicast(const sockaddr_in& a) { return IN_MULTICAST(ntohl(a.sin_addr.s_addr)); }

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { reset(); }

  int fd() const noexcept { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline std::system_error socket_error(const std::string& what) {
  return std::system_error(errno, std::generic_category(), what);
}

/// Sends each record as one datagram to every target.
class UdpSender {
 public:
  explicit UdpSender(const std::vector<std::string>& targets, int multicast_ttl = 1)
      : sock_(::socket(AF_INET, SOCK_DGRAM, 0)) {
    if (sock_.fd() < 0) throw socket_error("socket");
    const int one = 1;
    ::setsockopt(sock_.fd(), SOL_SOCKET, SO_BROADCAST, &one, sizeof(one));
    const unsigned char ttl = static_cast<unsigned char>(multicast_ttl);
    ::setsockopt(sock_.fd(), IPPROTO_IP, IP_MULTICAST_TTL, &ttl, sizeof(ttl));
    const unsigned char loop = 1;
    ::setsockopt(sock_.fd(), IPPROTO_IP, IP_MULTICAST_LOOP, &loop, sizeof(loop));
    for (const auto& t : targets) targets_.push_back(resolve_ipv4(t));
  }

  /// Number of targets the datagram was handed to.
  std::size_t send(std::string_view record) {
    std::size_t ok = 0;
    for (const auto& addr : targets_) {
      const auto n = ::sendto(sock_.fd(), record.data(), record.size(), 0, reinterpret_cast<const sockaddr*>(&addr),
                              sizeof(addr));
      if (n == static_cast<ssize_t>(record.size())) ++ok;
    }
    return ok;
  }

  std::size_t target_count() const noexcept { return targets_.size(); }

 private:
  Socket sock_;
  std::vector<sockaddr_in> targets_;
};

/// Bound UDP socket; joins the group when the address is multicast. Several
/// receivers may bind the same port.
class UdpReceiver {
 public:
  explicit UdpReceiver(std::string_view host_port) : sock_(::socket(AF_INET, SOCK_DGRAM, 0)) {
    if (sock_.fd() < 0) throw socket_error("socket");
    const int one = 1;
    ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEPORT, &one, sizeof(one));
    auto addr = resolve_ipv4(host_port);
    const bool multicast = is_multicast(addr);
    sockaddr_in bind_addr = addr;
    if (multicast) bind_addr.sin_addr.s_addr = htonl(INADDR_ANY);
    if (::bind(sock_.fd(), reinterpret_cast<const sockaddr*>(&bind_addr), sizeof(bind_addr)) < 0)
      throw socket_error("bind " + std::string(host_port));
    if (multicast) {
      ip_mreq mreq{};
      mreq.imr_multiaddr = addr.sin_addr;
      mreq.imr_interface.s_addr = htonl(INADDR_ANY);
      if (::setsockopt(sock_.fd(), IPPROTO_IP, IP_ADD_MEMBERSHIP, &mreq, sizeof(mreq)) < 0)
        throw socket_error("join multicast group " + std::string(host_port));
    }
    socklen_t len = sizeof(bound_);
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&bound_), &len);
  }

  std::uint16_t port() const noexcept { return ntohs(bound_.sin_port); }

  /// One datagram, or nothing if none arrives within the timeout.
  std::optional<std::string> receive(std::chrono::milliseconds timeout) {
    pollfd p{sock_.fd(), POLLIN, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (rc <= 0 || !(p.revents & POLLIN)) return std::nullopt;
    char buf[65536];
    const auto n = ::recv(sock_.fd(), buf, sizeof(buf), 0);
    if (n < 0) return std::nullopt;
    return std::string(buf, static_cast<std::size_t>(n));
  }

 private:
  Socket sock_;
  sockaddr_in bound_{};
};

}  // namespace livescaler
