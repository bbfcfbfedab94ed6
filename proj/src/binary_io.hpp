// SPDX-License-Identifier: Apache-2.0
//
// Little-endian byte packing shared by the bag and checkpoint formats.

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <vector>

#include "jigsaw/tensor.hpp"

namespace jigsaw::io {

template <class T>
using UintOf = std::conditional_t<
    sizeof(T) == 8, std::uint64_t,
    std::conditional_t<sizeof(T) == 4, std::uint32_t,
                       std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;

class Writer {
 public:
  void bytes(const void* p, std::size_t k) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + k);
  }
  template <class T>
  void le(T v) {
    const auto u = std::bit_cast<UintOf<T>>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& data) : data_(data) {}

  template <class T>
  T le(const char* field) {
    need(sizeof(T), field);
    UintOf<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      u = static_cast<UintOf<T>>(u | (static_cast<UintOf<T>>(data_[pos_ + i]) << (8 * i)));
    pos_ += sizeof(T);
    return std::bit_cast<T>(u);
  }
  void need(std::size_t k, const std::string& field) const {
    if (data_.size() - pos_ < k)
      throw Error("truncated payload at byte offset " + std::to_string(pos_) + ": " + field + " needs " +
                  std::to_string(k) + " bytes, " + std::to_string(data_.size() - pos_) + " remain");
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  const std::uint8_t* here() const { return data_.data() + pos_; }
  void skip(std::size_t k) { pos_ += k; }

 private:
  const std::vector<std::uint8_t>& data_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void spill(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

}  // namespace jigsaw::io
