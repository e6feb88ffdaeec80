#include "tabvfl/nn/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <map>

#include "tabvfl/errors.hpp"

namespace tabvfl::nn {

namespace {

void put_be(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int b = bytes - 1; b >= 0; --b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t be(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int b = 0; b < n; ++b) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  double f64_le() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * b);
    return std::bit_cast<double>(v);
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw DataError("checkpoint format error: truncated record at byte " +
                      std::to_string(pos_));
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(std::span<const NamedMatrix> tensors) {
  std::vector<std::uint8_t> out;
  for (const auto& t : tensors) {
    if (t.id.size() > 0xFFFF) throw DataError("checkpoint id too long: " + t.id.substr(0, 32));
    put_be(out, t.id.size(), 2);
    out.insert(out.end(), t.id.begin(), t.id.end());
    put_be(out, t.value.rows(), 4);
    put_be(out, t.value.cols(), 4);
    for (double v : t.value.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  return out;
}

std::vector<NamedMatrix> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  std::vector<NamedMatrix> out;
  while (!in.done()) {
    const auto len = static_cast<std::size_t>(in.be(2));
    std::string id = in.str(len);
    for (char c : id) {
      if (static_cast<unsigned char>(c) < 0x20 || static_cast<unsigned char>(c) > 0x7E) {
        throw DataError("checkpoint format error: non-printable tensor id");
      }
    }
    const auto rows = static_cast<std::size_t>(in.be(4));
    const auto cols = static_cast<std::size_t>(in.be(4));
    if (cols != 0 && rows > (bytes.size() / 8) / cols) {
      throw DataError("checkpoint format error: tensor " + id + " claims " +
                      std::to_string(rows) + "x" + std::to_string(cols));
    }
    std::vector<double> data(rows * cols);
    for (double& v : data) v = in.f64_le();
    out.push_back({std::move(id), Matrix(rows, cols, std::move(data))});
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const NamedMatrix> tensors) {
  const auto bytes = encode_checkpoint(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("short write to checkpoint " + path.string());
}

std::vector<NamedMatrix> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("missing checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<NamedMatrix> snapshot(std::span<const TensorRef> refs) {
  std::vector<NamedMatrix> out;
  out.reserve(refs.size());
  for (const auto& r : refs) out.push_back({r.id, *r.value});
  return out;
}

void restore(std::span<const NamedMatrix> stored, std::span<const TensorRef> refs) {
  std::map<std::string, const Matrix*> by_id;
  for (const auto& t : stored) {
    if (!by_id.emplace(t.id, &t.value).second) {
      throw DataError("checkpoint format error: duplicate tensor " + t.id);
    }
  }
  if (by_id.size() != refs.size()) {
    throw DataError("checkpoint format error: holds " + std::to_string(by_id.size()) +
                    " tensors, model expects " + std::to_string(refs.size()));
  }
  for (const auto& r : refs) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) throw DataError("checkpoint format error: missing tensor " + r.id);
    if (!it->second->same_shape(*r.value)) {
      throw DataError("checkpoint format error: tensor " + r.id + " has shape " +
                      it->second->shape_str() + ", model expects " + r.value->shape_str());
    }
    *r.value = *it->second;
  }
}

}  // namespace tabvfl::nn
