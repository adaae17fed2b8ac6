#pragma once

// Checkpoint container, all integers and floats little-endian:
//
//   "DROCKPT1"                          8 bytes magic
//   u32 parameter_count
//   repeated parameter_count times:
//     u32 name_length, name bytes (UTF-8, no terminator)
//     u8  dtype (1 = float32, 2 = float64)
//     u32 rank, rank x u32 extents
//     raw values
//   u8  has_adam (0 or 1)
//   if has_adam:
//     u64 adam_step
//     for each parameter in the same order: first-moment values, then second-moment values

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "dro/adam.hpp"

namespace dro {

inline constexpr char kCheckpointMagic[8] = {'D', 'R', 'O', 'C', 'K', 'P', 'T', '1'};

template <typename T>
constexpr std::uint8_t dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 1 : 2;
}

namespace detail {

class LeWriter {
 public:
  explicit LeWriter(std::vector<std::uint8_t>& buf) : buf_(buf) {}
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const void* p, std::size_t n) {
    auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename F>
  void floats(const std::vector<F>& v) {
    using U = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
    for (F x : v) uint(std::bit_cast<U>(x));
  }
  template <typename F>
  void floats(std::span<const F> v) {
    using U = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
    for (F x : v) uint(std::bit_cast<U>(x));
  }

 private:
  std::vector<std::uint8_t>& buf_;
};

class LeReader {
 public:
  LeReader(const std::vector<std::uint8_t>& buf, std::string path) : buf_(buf), path_(std::move(path)) {}
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  template <typename F>
  std::vector<F> floats(std::size_t n) {
    using U = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
    std::vector<F> v(n);
    for (auto& x : v) x = std::bit_cast<F>(uint<U>());
    return v;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > buf_.size()) throw FormatError("truncated checkpoint: " + path_);
  }
  const std::vector<std::uint8_t>& buf_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const ParameterSet<T>& params, const AdamState<T>* adam) {
  std::vector<std::uint8_t> buf;
  detail::LeWriter w(buf);
  w.bytes(kCheckpointMagic, 8);
  w.uint(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.uint(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.uint(dtype_code<T>());
    w.uint(static_cast<std::uint32_t>(p.tensor.rank()));
    for (int e : p.tensor.shape()) w.uint(static_cast<std::uint32_t>(e));
    w.floats(p.tensor.data());
  }
  const bool has_adam = adam && adam->m.size() == params.size();
  w.uint(static_cast<std::uint8_t>(has_adam ? 1 : 0));
  if (has_adam) {
    w.uint(static_cast<std::uint64_t>(adam->step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      w.floats(adam->m[i]);
      w.floats(adam->v[i]);
    }
  }
  return buf;
}

/// Restores values (and Adam state when requested and present) into an
/// existing registry. Names, dtypes and shapes must match exactly.
/// Returns true when Adam state was present.
template <typename T>
bool decode_checkpoint(const std::vector<std::uint8_t>& buf, ParameterSet<T>& params, AdamState<T>* adam,
                       const std::string& path = "<memory>") {
  detail::LeReader r(buf, path);
  if (r.str(8) != std::string(kCheckpointMagic, 8)) throw FormatError("bad checkpoint magic: " + path);
  const auto count = r.uint<std::uint32_t>();
  if (count != params.size())
    throw FormatError("checkpoint " + path + " holds " + std::to_string(count) + " parameters, model has " +
                      std::to_string(params.size()));
  for (std::size_t i = 0; i < count; ++i) {
    const auto name = r.str(r.uint<std::uint32_t>());
    if (name != params[i].name)
      throw FormatError("checkpoint parameter " + name + " does not match model parameter " + params[i].name);
    if (r.uint<std::uint8_t>() != dtype_code<T>()) throw FormatError("checkpoint dtype mismatch for " + name);
    const auto rank = r.uint<std::uint32_t>();
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<int>(r.uint<std::uint32_t>());
    if (shape != params[i].tensor.shape())
      throw FormatError("checkpoint shape " + shape_str(shape) + " for " + name + " does not match model " +
                        shape_str(params[i].tensor.shape()));
    auto vals = r.template floats<T>(numel(shape));
    std::copy(vals.begin(), vals.end(), params[i].tensor.mutable_data().begin());
  }
  const bool has_adam = r.uint<std::uint8_t>() == 1;
  if (has_adam) {
    AdamState<T> st;
    st.step = r.uint<std::uint64_t>();
    for (std::size_t i = 0; i < count; ++i) {
      st.m.push_back(r.template floats<T>(params[i].tensor.numel()));
      st.v.push_back(r.template floats<T>(params[i].tensor.numel()));
    }
    if (adam) *adam = std::move(st);
  }
  if (!r.at_end()) throw FormatError("trailing bytes in checkpoint: " + path);
  return has_adam;
}

template <typename T>
void save_checkpoint(const std::string& path, const ParameterSet<T>& params, const AdamState<T>* adam) {
  const auto buf = encode_checkpoint(params, adam);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open file: " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

template <typename T>
bool load_checkpoint(const std::string& path, ParameterSet<T>& params, AdamState<T>* adam) {
  return decode_checkpoint(read_file_bytes(path), params, adam, path);
}

}  // namespace dro
