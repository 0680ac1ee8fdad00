#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "scr/error.hpp"

namespace scr::io {

/// Appends little-endian scalars to a byte buffer; `save` flushes to disk.
class ByteWriter {
 public:
  void magic(std::string_view tag) {
    bytes_.insert(bytes_.end(), tag.begin(), tag.end());
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    const auto raw = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bytes_.push_back(static_cast<std::uint8_t>(raw >> (8 * i)));
    }
  }

  template <typename T>
  void put_all(std::span<const T> values) {
    bytes_.reserve(bytes_.size() + values.size() * sizeof(T));
    for (const T& v : values) put(v);
  }

  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian decoder over an in-memory file image.
class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> bytes)
      : bytes_(std::move(bytes)) {}

  static ByteReader open(const std::filesystem::path& path);

  void expect_magic(std::string_view tag);

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    require(sizeof(T));
    using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
    U raw = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      raw |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(raw);
  }

  /// Reads `count` values; throws before allocating when the file is short.
  template <typename T>
  std::vector<T> get_all(std::uint64_t count) {
    if (count > remaining() / sizeof(T)) {
      throw FormatError(pos_, "truncated payload: need " +
                                  std::to_string(count) + " values of " +
                                  std::to_string(sizeof(T)) + " bytes, have " +
                                  std::to_string(remaining()) + " bytes");
    }
    std::vector<T> out(static_cast<std::size_t>(count));
    for (auto& v : out) v = get<T>();
    return out;
  }

  void expect_version(std::uint32_t expected);
  void expect_end() const;

  std::uint64_t offset() const noexcept { return pos_; }
  std::uint64_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void require(std::size_t n) const {
    if (remaining() < n) {
      throw FormatError(pos_, "truncated: need " + std::to_string(n) +
                                  " more bytes, have " +
                                  std::to_string(remaining()));
    }
  }

  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace scr::io
