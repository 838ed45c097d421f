#pragma once

// Little-endian encoding helpers shared by the dataset and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "freqadv/errors.hpp"

namespace freqadv::binio {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <class U>
  void put(U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) {
      char tmp[sizeof(U)];
      std::memcpy(tmp, &v, sizeof(U));
      for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(tmp[sizeof(U) - 1 - i]);
    } else {
      bytes(&v, sizeof(U));
    }
  }
  void magic(std::string_view m) { bytes(m.data(), m.size()); }
  const std::vector<char>& data() const noexcept { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}

  template <class U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    if constexpr (std::endian::native == std::endian::big && sizeof(U) > 1) {
      char tmp[sizeof(U)];
      for (std::size_t i = 0; i < sizeof(U); ++i) tmp[i] = buf_[pos_ + sizeof(U) - 1 - i];
      std::memcpy(&v, tmp, sizeof(U));
    } else {
      std::memcpy(&v, buf_.data() + pos_, sizeof(U));
    }
    pos_ += sizeof(U);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (buf_.size() - pos_ < n) throw FormatError(std::string("truncated file while reading ") + what, pos_);
  }
  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return buf_.size() - pos_; }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

/// Reads a whole file; IoError when it cannot be opened.
std::vector<char> read_file(const std::string& path);
/// Writes atomically enough for our purposes (truncate + write); IoError on failure.
void write_file(const std::string& path, const std::vector<char>& data);
void write_text(const std::string& path, const std::string& text);

std::uint64_t fnv1a(const char* p, std::size_t n);
std::string hex64(std::uint64_t v);

/// Parses `key=value` lines. Blank lines and lines starting with '#' are
/// skipped; anything else without '=' is a FormatError carrying the line
/// number.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text, const std::string& what);

}  // namespace freqadv::binio
