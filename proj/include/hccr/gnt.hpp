#ifndef HCCR_GNT_HPP
#define HCCR_GNT_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hccr/error.hpp"

namespace hccr {

/// One isolated handwriting sample from a GNT container. Record layout on
/// disk, little-endian except the tag:
///   sample_size  u32   whole record byte count (10 + width*height)
///   tag_code     2 raw bytes, high GB-code byte first
///   width        u16
///   height       u16
///   bitmap       width*height grayscale bytes, row-major, 0 = ink,
///                255 = background
struct GntRecord {
  std::uint32_t sample_size = 0;
  std::uint16_t tag_code = 0;  // high stream byte in bits 15..8
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<std::uint8_t> bitmap;

  static GntRecord make(std::uint16_t tag, std::uint16_t width, std::uint16_t height,
                        std::vector<std::uint8_t> bitmap);

  /// Throws ValueError when sample_size or bitmap length disagree with
  /// width*height, or an extent is zero.
  void validate() const;

  bool operator==(const GntRecord&) const = default;
};

/// Parses a concatenation of records, in file order. Throws ParseError (with
/// the byte offset of the offending record) on truncation, a sample_size that
/// is not 10 + width*height, or a zero extent.
std::vector<GntRecord> parse_gnt(std::span<const std::uint8_t> bytes);

/// Inverse of parse_gnt, bit-exact: parse(serialize(r)) == r.
std::vector<std::uint8_t> serialize_gnt(std::span<const GntRecord> records);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace hccr

#endif
