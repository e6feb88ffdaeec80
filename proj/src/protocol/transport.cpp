#include "tabvfl/protocol/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <vector>

#include "tabvfl/errors.hpp"

namespace tabvfl::protocol {

namespace {

struct Queue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Message> items;
  bool closed = false;
  std::string reason;
};

class InProcessEndpoint final : public Endpoint {
 public:
  InProcessEndpoint(std::shared_ptr<Queue> in, std::shared_ptr<Queue> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~InProcessEndpoint() override { close("peer endpoint destroyed"); }

  void send(const Message& m) override {
    {
      std::lock_guard lock(out_->mu);
      if (out_->closed) throw ProtocolError("send on closed channel");
      out_->items.push_back(m);
    }
    out_->cv.notify_one();
    sent_ += encoded_size(m);
  }

  std::optional<Message> recv(std::chrono::milliseconds timeout) override {
    std::unique_lock lock(in_->mu);
    const bool ready = in_->cv.wait_for(lock, timeout, [&] { return !in_->items.empty() || in_->closed; });
    if (!ready) return std::nullopt;
    if (in_->items.empty()) {
      throw ProtocolError("channel closed by peer" + (in_->reason.empty() ? "" : ": " + in_->reason));
    }
    Message m = std::move(in_->items.front());
    in_->items.pop_front();
    received_ += encoded_size(m);
    return m;
  }

  void close(const std::string& reason) override {
    {
      std::lock_guard lock(out_->mu);
      if (out_->closed) return;
      out_->closed = true;
      out_->reason = reason;
    }
    out_->cv.notify_all();
  }

 private:
  std::shared_ptr<Queue> in_;
  std::shared_ptr<Queue> out_;
};

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("socket send failed: ") + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

class SocketEndpoint final : public Endpoint {
 public:
  explicit SocketEndpoint(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~SocketEndpoint() override {
    if (fd_ >= 0) ::close(fd_);
  }

  void send(const Message& m) override {
    const auto body = encode_message(m);
    std::vector<std::uint8_t> frame(4);
    const auto n = static_cast<std::uint32_t>(body.size());
    frame[0] = static_cast<std::uint8_t>(n >> 24);
    frame[1] = static_cast<std::uint8_t>(n >> 16);
    frame[2] = static_cast<std::uint8_t>(n >> 8);
    frame[3] = static_cast<std::uint8_t>(n);
    frame.insert(frame.end(), body.begin(), body.end());
    std::lock_guard lock(send_mu_);
    if (fd_ < 0 || write_closed_) throw ProtocolError("send on closed socket");
    write_all(fd_, frame.data(), frame.size());
    sent_ += frame.size();
  }

  std::optional<Message> recv(std::chrono::milliseconds timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    // Read the 4-byte length, then the body; partial reads resume on the
    // buffer so a timeout never loses bytes.
    for (;;) {
      if (buf_.size() >= 4) {
        const std::uint32_t n = (std::uint32_t{buf_[0]} << 24) | (std::uint32_t{buf_[1]} << 16) |
                                (std::uint32_t{buf_[2]} << 8) | std::uint32_t{buf_[3]};
        if (buf_.size() >= 4 + std::size_t{n}) {
          Message m = decode_message(std::span(buf_).subspan(4, n));
          received_ += 4 + n;
          buf_.erase(buf_.begin(), buf_.begin() + 4 + n);
          return m;
        }
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() < 0) return std::nullopt;
      pollfd p{fd_, POLLIN, 0};
      const int r = ::poll(&p, 1, static_cast<int>(std::max<long long>(left.count(), 0)));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("socket poll failed: ") + std::strerror(errno));
      }
      if (r == 0) {
        if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
        continue;
      }
      std::uint8_t chunk[65536];
      const ssize_t got = ::recv(fd_, chunk, sizeof chunk, 0);
      if (got < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("socket recv failed: ") + std::strerror(errno));
      }
      if (got == 0) throw ProtocolError("channel closed by peer");
      buf_.insert(buf_.end(), chunk, chunk + got);
    }
  }

  void close(const std::string&) override {
    std::lock_guard lock(send_mu_);
    if (fd_ >= 0 && !write_closed_) {
      ::shutdown(fd_, SHUT_WR);
      write_closed_ = true;
    }
  }

 private:
  int fd_ = -1;
  bool write_closed_ = false;
  std::mutex send_mu_;
  std::vector<std::uint8_t> buf_;
};

[[noreturn]] void sys_fail(const std::string& what) {
  throw ProtocolError(what + ": " + std::strerror(errno));
}

}  // namespace

std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> in_process_pair() {
  auto a = std::make_shared<Queue>();
  auto b = std::make_shared<Queue>();
  return {std::make_unique<InProcessEndpoint>(a, b), std::make_unique<InProcessEndpoint>(b, a)};
}

SocketListener::SocketListener(const std::string& address, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) sys_fail("socket");
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, address.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw ProtocolError("bad listen address " + address);
  }
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd_);
    sys_fail("bind");
  }
  if (::listen(fd_, 16) != 0) {
    ::close(fd_);
    sys_fail("listen");
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

SocketListener::~SocketListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Endpoint> SocketListener::accept(std::chrono::milliseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (r < 0) sys_fail("poll");
  if (r == 0) throw ProtocolError("timed out waiting for a connection");
  const int c = ::accept(fd_, nullptr, nullptr);
  if (c < 0) sys_fail("accept");
  return std::make_unique<SocketEndpoint>(c);
}

std::unique_ptr<Endpoint> socket_connect(const std::string& address, std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) sys_fail("socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, address.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw ProtocolError("bad address " + address);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const int e = errno;
    ::close(fd);
    errno = e;
    sys_fail("connection to " + address + ":" + std::to_string(port) + " refused");
  }
  return std::make_unique<SocketEndpoint>(fd);
}

std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> socket_pair() {
  SocketListener listener;
  auto guest = socket_connect("127.0.0.1", listener.port());
  auto host = listener.accept(std::chrono::seconds(5));
  return {std::move(host), std::move(guest)};
}

std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> transport_pair(TransportKind kind) {
  return kind == TransportKind::Socket ? socket_pair() : in_process_pair();
}

}  // namespace tabvfl::protocol
