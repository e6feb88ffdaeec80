#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tabvfl/nn/matrix.hpp"

namespace tabvfl::protocol {

using nn::Matrix;

// Party 1 is the host; guests are 2..K+1.
using PartyId = std::uint16_t;
inline constexpr PartyId kHostId = 1;

enum class Tag : std::uint8_t {
  IntermediateResult = 0x01,
  BinaryMask = 0x02,
  DecoderPartition = 0x03,
  ReconLoss = 0x04,
  GradPartition = 0x05,
  GradIntermediate = 0x06,
  Control = 0x07,
};

enum class ControlKind : std::uint8_t {
  PhaseBegin = 1,
  EpochBegin = 2,
  EpochEnd = 3,
  BatchAnnounce = 4,
  Ack = 5,
  Shutdown = 6,
};

enum class Phase : std::uint8_t { Pretrain = 0, Finetune = 1 };
// Which rows a batch index refers to. Only Train batches update weights.
enum class Split : std::uint8_t { Train = 0, Validation = 1, All = 2 };

struct Control {
  ControlKind kind = ControlKind::Ack;
  Phase phase = Phase::Pretrain;
  Split split = Split::Train;
  std::uint32_t epoch = 0;

  friend bool operator==(const Control&, const Control&) = default;
};

struct Message {
  Tag tag = Tag::Control;
  PartyId party = 0;  // the guest concerned (sender or addressee)
  std::uint32_t batch = 0;
  Matrix matrix;      // matrix-carrying tags
  double loss = 0.0;  // ReconLoss
  Control control;    // Control

  friend bool operator==(const Message&, const Message&) = default;
};

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kHeaderSize = 16;

bool carries_matrix(Tag tag);

Message make_matrix_message(Tag tag, PartyId party, std::uint32_t batch, Matrix m);
Message make_loss_message(PartyId party, std::uint32_t batch, double loss);
Message make_control(ControlKind kind, PartyId party, std::uint32_t batch = 0,
                     Phase phase = Phase::Pretrain, Split split = Split::Train,
                     std::uint32_t epoch = 0);

// "TVFL" | version u8 | tag u8 | party u16 BE | batch u32 BE | payload length u32 BE | payload.
// Matrices travel as rows u32 BE, cols u32 BE, then f32 LE row-major.
std::vector<std::uint8_t> encode_message(const Message& m);
Message decode_message(std::span<const std::uint8_t> bytes);
// Size of encode_message(m) without building it.
std::size_t encoded_size(const Message& m);

// What decode(encode(m)) yields: matrix entries rounded to 32-bit floats.
Message wire_rounded(Message m);

std::string describe(const Message& m);

}  // namespace tabvfl::protocol
