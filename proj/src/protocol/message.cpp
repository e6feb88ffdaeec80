#include "tabvfl/protocol/message.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include "tabvfl/errors.hpp"

namespace tabvfl::protocol {

namespace {

constexpr std::uint8_t kMagic[4] = {'T', 'V', 'F', 'L'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_le(std::vector<std::uint8_t>& out, std::uint64_t bits, int n) {
  for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

std::uint64_t get_le(std::span<const std::uint8_t> b, std::size_t at, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= std::uint64_t{b[at + i]} << (8 * i);
  return v;
}

std::size_t payload_size(const Message& m) {
  if (carries_matrix(m.tag)) return 8 + 4 * m.matrix.size();
  if (m.tag == Tag::ReconLoss) return 8;
  return 8;  // control
}

bool known_tag(std::uint8_t t) { return t >= 0x01 && t <= 0x07; }

}  // namespace

bool carries_matrix(Tag tag) {
  switch (tag) {
    case Tag::IntermediateResult:
    case Tag::BinaryMask:
    case Tag::DecoderPartition:
    case Tag::GradPartition:
    case Tag::GradIntermediate:
      return true;
    default:
      return false;
  }
}

Message make_matrix_message(Tag tag, PartyId party, std::uint32_t batch, Matrix m) {
  Message msg;
  msg.tag = tag;
  msg.party = party;
  msg.batch = batch;
  msg.matrix = std::move(m);
  return msg;
}

Message make_loss_message(PartyId party, std::uint32_t batch, double loss) {
  Message msg;
  msg.tag = Tag::ReconLoss;
  msg.party = party;
  msg.batch = batch;
  msg.loss = loss;
  return msg;
}

Message make_control(ControlKind kind, PartyId party, std::uint32_t batch, Phase phase,
                     Split split, std::uint32_t epoch) {
  Message msg;
  msg.tag = Tag::Control;
  msg.party = party;
  msg.batch = batch;
  msg.control = Control{kind, phase, split, epoch};
  return msg;
}

std::size_t encoded_size(const Message& m) { return kHeaderSize + payload_size(m); }

std::vector<std::uint8_t> encode_message(const Message& m) {
  std::vector<std::uint8_t> out;
  out.reserve(encoded_size(m));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kWireVersion);
  out.push_back(static_cast<std::uint8_t>(m.tag));
  put_u16(out, m.party);
  put_u32(out, m.batch);
  put_u32(out, static_cast<std::uint32_t>(payload_size(m)));
  if (carries_matrix(m.tag)) {
    if (m.matrix.rows() > std::numeric_limits<std::uint32_t>::max() ||
        m.matrix.cols() > std::numeric_limits<std::uint32_t>::max()) {
      throw ProtocolError("matrix too large for the wire format");
    }
    put_u32(out, static_cast<std::uint32_t>(m.matrix.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.matrix.cols()));
    for (double v : m.matrix.values()) {
      put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    }
  } else if (m.tag == Tag::ReconLoss) {
    put_le(out, std::bit_cast<std::uint64_t>(m.loss), 8);
  } else {
    out.push_back(static_cast<std::uint8_t>(m.control.kind));
    out.push_back(static_cast<std::uint8_t>(m.control.phase));
    out.push_back(static_cast<std::uint8_t>(m.control.split));
    out.push_back(0);
    put_u32(out, m.control.epoch);
  }
  return out;
}

Message decode_message(std::span<const std::uint8_t> b) {
  if (b.size() < kHeaderSize) throw ProtocolError("truncated message header");
  if (std::memcmp(b.data(), kMagic, 4) != 0) throw ProtocolError("bad magic");
  if (b[4] != kWireVersion) throw ProtocolError("unsupported version " + std::to_string(b[4]));
  if (!known_tag(b[5])) throw ProtocolError("unknown tag " + std::to_string(b[5]));
  Message m;
  m.tag = static_cast<Tag>(b[5]);
  m.party = static_cast<PartyId>((b[6] << 8) | b[7]);
  m.batch = get_u32(b, 8);
  const std::size_t len = get_u32(b, 12);
  if (b.size() - kHeaderSize < len) throw ProtocolError("truncated payload");
  if (b.size() - kHeaderSize != len) throw ProtocolError("payload length mismatch");
  const auto p = b.subspan(kHeaderSize);
  if (carries_matrix(m.tag)) {
    if (len < 8) throw ProtocolError("truncated matrix header");
    const std::uint64_t rows = get_u32(p, 0), cols = get_u32(p, 4);
    if (cols != 0 && rows > ((len - 8) / 4) / cols) {
      throw ProtocolError("matrix payload length mismatch");
    }
    if (rows * cols * 4 + 8 != len) throw ProtocolError("matrix payload length mismatch");
    std::vector<double> data(rows * cols);
    for (std::size_t i = 0; i < data.size(); ++i) {
      data[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(p, 8 + 4 * i, 4)));
    }
    m.matrix = Matrix(rows, cols, std::move(data));
  } else if (m.tag == Tag::ReconLoss) {
    if (len != 8) throw ProtocolError("loss payload length mismatch");
    m.loss = std::bit_cast<double>(get_le(p, 0, 8));
  } else {
    if (len != 8) throw ProtocolError("control payload length mismatch");
    if (p[0] < 1 || p[0] > 6) throw ProtocolError("unknown control kind");
    if (p[1] > 1 || p[2] > 2) throw ProtocolError("bad control phase/split");
    m.control.kind = static_cast<ControlKind>(p[0]);
    m.control.phase = static_cast<Phase>(p[1]);
    m.control.split = static_cast<Split>(p[2]);
    m.control.epoch = get_u32(p, 4);
  }
  return m;
}

Message wire_rounded(Message m) {
  if (carries_matrix(m.tag)) {
    for (double& v : m.matrix.values()) v = static_cast<float>(v);
  }
  return m;
}

std::string describe(const Message& m) {
  static const char* names[] = {"?",         "IntermediateResult", "BinaryMask",
                                "DecoderPartition", "ReconLoss", "GradPartition",
                                "GradIntermediate", "Control"};
  const auto t = static_cast<std::size_t>(m.tag);
  std::string s = t < 8 ? names[t] : "?";
  s += "{party=" + std::to_string(m.party) + ", batch=" + std::to_string(m.batch);
  if (m.tag == Tag::Control) s += ", kind=" + std::to_string(static_cast<int>(m.control.kind));
  return s + "}";
}

}  // namespace tabvfl::protocol
