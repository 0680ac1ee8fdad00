#include "scr/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace scr::io {

void ByteWriter::save(const std::filesystem::path& path) const {
  if (path.empty()) throw IoError("cannot write to an empty path");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes_.data()),
            static_cast<std::streamsize>(bytes_.size()));
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

ByteReader ByteReader::open(const std::filesystem::path& path) {
  if (path.empty()) throw IoError("cannot read from an empty path");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read from '" + path.string() + "' failed");
  return ByteReader(std::move(bytes));
}

void ByteReader::expect_magic(std::string_view tag) {
  require(tag.size());
  if (std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0) {
    throw FormatError(pos_, "bad magic, expected '" + std::string(tag) + "'");
  }
  pos_ += tag.size();
}

void ByteReader::expect_version(std::uint32_t expected) {
  const auto at = pos_;
  const auto version = get<std::uint32_t>();
  if (version != expected) {
    throw FormatError(at, "unsupported version " + std::to_string(version));
  }
}

void ByteReader::expect_end() const {
  if (remaining() != 0) {
    throw FormatError(pos_, std::to_string(remaining()) + " trailing bytes");
  }
}

}  // namespace scr::io
