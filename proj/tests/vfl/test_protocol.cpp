#include <random>
#include <thread>

#include "doctest.h"
#include "support/oracles.hpp"
#include "tabvfl/errors.hpp"
#include "tabvfl/protocol/failures.hpp"
#include "tabvfl/protocol/message.hpp"
#include "tabvfl/protocol/transport.hpp"

using namespace tabvfl;
using namespace tabvfl::protocol;
using namespace std::chrono_literals;
using testing::random_matrix;

namespace {

Message random_message(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> tag(1, 7);
  Message m;
  m.tag = static_cast<Tag>(tag(rng));
  m.party = static_cast<PartyId>(rng());
  m.batch = static_cast<std::uint32_t>(rng());
  if (carries_matrix(m.tag)) {
    std::uniform_int_distribution<std::size_t> dim(0, 9);
    std::size_t r = dim(rng), c = dim(rng);
    if (r == 0 || c == 0) r = c = 0;
    m.matrix = random_matrix(r, c, rng, 100.0);
  } else if (m.tag == Tag::ReconLoss) {
    m.loss = std::normal_distribution<double>(0.0, 10.0)(rng);
  } else {
    m.control.kind = static_cast<ControlKind>(std::uniform_int_distribution<int>(1, 6)(rng));
    m.control.phase = static_cast<Phase>(rng() % 2);
    m.control.split = static_cast<Split>(rng() % 3);
    m.control.epoch = static_cast<std::uint32_t>(rng());
  }
  return m;
}

std::vector<std::uint8_t> recon_loss_bytes() {
  return encode_message(make_loss_message(2, 7, 1.0));
}

}  // namespace

TEST_CASE("wire round trip over random messages") {
  std::mt19937_64 rng(2024);
  std::size_t seen[8] = {};
  for (int i = 0; i < 10000; ++i) {
    const Message m = random_message(rng);
    const auto bytes = encode_message(m);
    REQUIRE(bytes.size() == encoded_size(m));
    const Message back = decode_message(bytes);
    REQUIRE(back == wire_rounded(m));
    // rounding is idempotent: a second trip is exact
    REQUIRE(encode_message(back) == bytes);
    ++seen[static_cast<int>(m.tag)];
  }
  for (int t = 1; t <= 7; ++t) CHECK(seen[t] > 1000);
}

TEST_CASE("wire layout examples") {
  SUBCASE("ReconLoss header bytes") {
    const auto b = recon_loss_bytes();
    const std::vector<std::uint8_t> header{0x54, 0x56, 0x46, 0x4C, 0x01, 0x04, 0x00, 0x02,
                                           0x00, 0x00, 0x00, 0x07, 0x00, 0x00, 0x00, 0x08};
    REQUIRE(b.size() == 24);
    CHECK(std::vector<std::uint8_t>(b.begin(), b.begin() + 16) == header);
    const std::vector<std::uint8_t> one{0, 0, 0, 0, 0, 0, 0xF0, 0x3F};
    CHECK(std::vector<std::uint8_t>(b.begin() + 16, b.end()) == one);
  }
  SUBCASE("empty matrix payload is two zero counts") {
    const auto b = encode_message(make_matrix_message(Tag::GradPartition, 3, 0, Matrix()));
    REQUIRE(b.size() == kHeaderSize + 8);
    for (std::size_t i = kHeaderSize; i < b.size(); ++i) CHECK(b[i] == 0);
    CHECK(b[15] == 8);
  }
  SUBCASE("matrix entries are f32 little endian") {
    const auto b = encode_message(make_matrix_message(Tag::IntermediateResult, 2, 1, Matrix(1, 1, 1.0)));
    const std::vector<std::uint8_t> tail{0, 0, 0, 1, 0, 0, 0, 1, 0x00, 0x00, 0x80, 0x3F};
    CHECK(std::vector<std::uint8_t>(b.begin() + kHeaderSize, b.end()) == tail);
  }
}

TEST_CASE("wire decode errors") {
  auto expect_error = [](std::vector<std::uint8_t> b, const std::string& needle) {
    try {
      decode_message(b);
      FAIL("no error for " << needle);
    } catch (const ProtocolError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  auto b = recon_loss_bytes();
  auto bad = b;
  bad[0] = 'X';
  expect_error(bad, "magic");
  bad = b;
  bad[4] = 9;
  expect_error(bad, "version");
  bad = b;
  bad[5] = 0x2A;
  expect_error(bad, "tag");
  expect_error(std::vector<std::uint8_t>(b.begin(), b.begin() + 10), "trunc");
  expect_error(std::vector<std::uint8_t>(b.begin(), b.end() - 1), "trunc");
  bad = b;
  bad.push_back(0);
  expect_error(bad, "length");
  // matrix header claims more entries than the payload holds
  auto mb = encode_message(make_matrix_message(Tag::BinaryMask, 2, 0, Matrix(2, 2, 1.0)));
  mb[kHeaderSize + 3] = 3;
  expect_error(mb, "length");
}

TEST_CASE("in-process channel keeps order") {
  auto [host, guest] = in_process_pair();
  std::mt19937_64 rng(5);
  std::vector<Message> sent;
  for (int i = 0; i < 1000; ++i) {
    sent.push_back(random_message(rng));
    host->send(sent.back());
  }
  for (int i = 0; i < 1000; ++i) {
    auto m = guest->recv(1s);
    REQUIRE(m);
    REQUIRE(*m == sent[i]);  // objects pass unrounded
  }
  CHECK_FALSE(guest->recv(10ms));
  CHECK(host->bytes().sent == guest->bytes().received);
}

TEST_CASE("socket transport matches the in-process encoding") {
  std::mt19937_64 rng(6);
  const Message big = make_matrix_message(Tag::IntermediateResult, 2, 3, random_matrix(1024, 16, rng));
  auto [sh, sg] = socket_pair();
  auto [ih, ig] = in_process_pair();
  sh->send(big);
  ih->send(big);
  auto over_socket = sg->recv(5s);
  auto in_process = ig->recv(5s);
  REQUIRE(over_socket);
  REQUIRE(in_process);
  CHECK(encode_message(*over_socket) == encode_message(*in_process));
  CHECK(*over_socket == wire_rounded(big));
  CHECK(sh->bytes().sent == ih->bytes().sent + 4);  // socket counts its frame prefix
  CHECK(sg->bytes().received == sh->bytes().sent);

  // order over many frames, both directions
  for (std::uint32_t i = 0; i < 200; ++i) sg->send(make_loss_message(2, i, i * 0.5));
  for (std::uint32_t i = 0; i < 200; ++i) {
    auto m = sh->recv(5s);
    REQUIRE(m);
    CHECK(m->batch == i);
    CHECK(m->loss == i * 0.5);
  }
}

TEST_CASE("silent peer times out, closed peer raises") {
  for (auto kind : {TransportKind::InProcess, TransportKind::Socket}) {
    auto [host, guest] = transport_pair(kind);
    const auto t0 = std::chrono::steady_clock::now();
    CHECK_FALSE(host->recv(50ms));
    CHECK(std::chrono::steady_clock::now() - t0 >= 45ms);
    guest->send(make_control(ControlKind::Ack, 2));
    guest->close("guest2: disk on fire");
    auto m = host->recv(1s);  // queued before the close, still delivered
    REQUIRE(m);
    try {
      host->recv(1s);
      FAIL("closed channel did not raise");
    } catch (const ProtocolError& e) {
      if (kind == TransportKind::InProcess) CHECK(std::string(e.what()).find("disk on fire") != std::string::npos);
    }
  }
}

TEST_CASE("socket listener accepts a remote guest") {
  SocketListener listener;
  std::unique_ptr<Endpoint> guest;
  std::thread t([&] { guest = socket_connect("127.0.0.1", listener.port()); });
  auto host = listener.accept(5s);
  t.join();
  REQUIRE(host);
  host->send(make_control(ControlKind::Shutdown, 2));
  auto m = guest->recv(5s);
  REQUIRE(m);
  CHECK(m->control.kind == ControlKind::Shutdown);
  CHECK_THROWS_AS(socket_connect("127.0.0.1", 1), ProtocolError);
}

TEST_CASE("failure sampling") {
  const std::vector<PartyId> guests{2, 3};
  std::mt19937_64 rng(1);
  SUBCASE("p = 0 never drops anyone") {
    for (std::uint32_t e = 0; e < 200; ++e) CHECK(sample_failures(guests, 0.0, e, rng).empty());
  }
  SUBCASE("epoch 0 is always online") {
    CHECK(sample_failures(guests, 1.0, 0, rng).empty());
    CHECK(sample_failures(guests, 1.0, 1, rng).size() == 2);
  }
  SUBCASE("monte carlo frequency") {
    std::size_t off[2] = {};
    for (std::uint32_t e = 1; e <= 10000; ++e) {
      auto s = sample_failures(guests, 0.5, e, rng);
      off[0] += s.count(2);
      off[1] += s.count(3);
    }
    for (auto c : off) {
      CHECK(c / 10000.0 >= 0.48);
      CHECK(c / 10000.0 <= 0.52);
    }
  }
  SUBCASE("bad probability") {
    CHECK_THROWS_AS(sample_failures(guests, 1.5, 1, rng), ConfigError);
    CHECK_THROWS_AS(sample_failures(guests, -0.1, 1, rng), ConfigError);
  }
  SUBCASE("schedules replay under a seed") {
    FailureSchedule a(guests, 0.4, 50, 9), b(guests, 0.4, 50, 9), c(guests, 0.4, 50, 10);
    bool differs = false;
    CHECK(a.offline(0).empty());
    for (std::uint32_t e = 0; e < 50; ++e) {
      CHECK(a.offline(e) == b.offline(e));
      differs |= a.offline(e) != c.offline(e);
    }
    CHECK(differs);
    CHECK(a.offline(999).empty());
  }
}

TEST_CASE("resolve_inputs strategies") {
  std::mt19937_64 rng(3);
  CacheStore cache;
  const InputShape shape{4, 3, 5};
  const GuestInputs live{random_matrix(4, 3, rng), random_matrix(4, 5, rng)};

  SUBCASE("live values refresh the cache") {
    auto out = resolve_inputs(cache, 2, 0, live, Strategy::Cache, shape);
    CHECK(out == live);
    REQUIRE(cache.get(2, 0));
    CHECK(*cache.get(2, 0) == live);
    GuestInputs fresher{random_matrix(4, 3, rng), random_matrix(4, 5, rng)};
    resolve_inputs(cache, 2, 0, fresher, Strategy::Cache, shape);
    CHECK(*cache.get(2, 0) == fresher);
    CHECK(resolve_inputs(cache, 2, 0, std::nullopt, Strategy::Cache, shape) == fresher);
  }
  SUBCASE("cache strategy returns the last values bitwise") {
    resolve_inputs(cache, 3, 1, live, Strategy::Cache, shape);
    CHECK(resolve_inputs(cache, 3, 1, std::nullopt, Strategy::Cache, shape) == live);
    CHECK_THROWS_AS(resolve_inputs(cache, 3, 2, std::nullopt, Strategy::Cache, shape), ProtocolError);
  }
  SUBCASE("zeros strategy") {
    auto z = resolve_inputs(cache, 2, 0, std::nullopt, Strategy::Zeros, shape);
    CHECK(z.activation == Matrix(4, 3));
    REQUIRE(z.mask);
    CHECK(*z.mask == Matrix(4, 5));
    auto no_mask = resolve_inputs(cache, 2, 0, std::nullopt, Strategy::Zeros, {4, 3, 0});
    CHECK_FALSE(no_mask.mask);
    CHECK(cache.size() == 0);
  }
  SUBCASE("no strategy") {
    CHECK_THROWS_AS(resolve_inputs(cache, 2, 0, std::nullopt, Strategy::None, shape), ProtocolError);
    CHECK(resolve_inputs(cache, 2, 0, live, Strategy::None, shape) == live);
    CHECK(cache.size() == 0);
  }
  SUBCASE("parse") {
    CHECK(parse_strategy("cache") == Strategy::Cache);
    CHECK(to_string(Strategy::Zeros) == "zeros");
    CHECK_THROWS_AS(parse_strategy("retry"), ConfigError);
  }
}
