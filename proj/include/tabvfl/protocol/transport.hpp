#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "tabvfl/protocol/message.hpp"

namespace tabvfl::protocol {

enum class TransportKind { InProcess, Socket };

struct ByteCounts {
  std::uint64_t sent = 0;
  std::uint64_t received = 0;
};

// One side of an ordered, reliable, bidirectional channel.
class Endpoint {
 public:
  virtual ~Endpoint() = default;

  virtual void send(const Message& m) = 0;
  // nullopt on timeout. Throws ProtocolError once the peer has closed and
  // nothing is left to read.
  virtual std::optional<Message> recv(std::chrono::milliseconds timeout) = 0;
  // Tells the peer no more messages will come, optionally with a reason it
  // will see in the error it gets.
  virtual void close(const std::string& reason = {}) = 0;

  ByteCounts bytes() const { return {sent_.load(), received_.load()}; }

 protected:
  std::atomic<std::uint64_t> sent_{0};
  std::atomic<std::uint64_t> received_{0};
};

// Messages pass as objects at full 64-bit precision; byte counters record
// what the wire encoding would have cost.
std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> in_process_pair();

// TCP over loopback, one length-delimited frame (u32 BE length) per encoded
// message, so matrices arrive rounded to 32 bits.
std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> socket_pair();

// first = host side, second = guest side.
std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> transport_pair(TransportKind kind);

class SocketListener {
 public:
  explicit SocketListener(const std::string& address = "127.0.0.1", std::uint16_t port = 0);
  ~SocketListener();
  SocketListener(const SocketListener&) = delete;
  SocketListener& operator=(const SocketListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<Endpoint> accept(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

std::unique_ptr<Endpoint> socket_connect(const std::string& address, std::uint16_t port);

}  // namespace tabvfl::protocol
