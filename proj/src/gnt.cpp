#include "hccr/gnt.hpp"

#include <cstdio>
#include <memory>

namespace hccr {

namespace {

constexpr std::size_t kHeaderBytes = 10;

std::uint32_t read_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16le(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

GntRecord GntRecord::make(std::uint16_t tag, std::uint16_t width, std::uint16_t height,
                          std::vector<std::uint8_t> bitmap) {
  GntRecord r;
  r.tag_code = tag;
  r.width = width;
  r.height = height;
  r.bitmap = std::move(bitmap);
  r.sample_size = static_cast<std::uint32_t>(kHeaderBytes) +
                  static_cast<std::uint32_t>(width) * static_cast<std::uint32_t>(height);
  r.validate();
  return r;
}

void GntRecord::validate() const {
  if (width == 0 || height == 0) throw ValueError("gnt record has a zero extent");
  const std::size_t pixels = static_cast<std::size_t>(width) * height;
  if (bitmap.size() != pixels) {
    throw ValueError("gnt bitmap has " + std::to_string(bitmap.size()) + " bytes, expected " +
                     std::to_string(pixels));
  }
  if (sample_size != kHeaderBytes + pixels) {
    throw ValueError("gnt sample_size " + std::to_string(sample_size) + " != 10 + width*height");
  }
}

std::vector<GntRecord> parse_gnt(std::span<const std::uint8_t> bytes) {
  std::vector<GntRecord> records;
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t record_off = off;
    if (bytes.size() - off < kHeaderBytes) {
      throw ParseError("truncated gnt record header", record_off);
    }
    const std::uint8_t* p = bytes.data() + off;
    GntRecord r;
    r.sample_size = read_u32le(p);
    r.tag_code = static_cast<std::uint16_t>((p[4] << 8) | p[5]);  // high GB byte first
    r.width = read_u16le(p + 6);
    r.height = read_u16le(p + 8);
    if (r.width == 0 || r.height == 0) {
      throw ParseError("gnt record has a zero extent", record_off);
    }
    const std::size_t pixels = static_cast<std::size_t>(r.width) * r.height;
    if (r.sample_size != kHeaderBytes + pixels) {
      throw ParseError("gnt sample_size " + std::to_string(r.sample_size) +
                           " disagrees with 10 + " + std::to_string(r.width) + "*" +
                           std::to_string(r.height),
                       record_off);
    }
    if (bytes.size() - off - kHeaderBytes < pixels) {
      throw ParseError("truncated gnt bitmap", record_off);
    }
    r.bitmap.assign(p + kHeaderBytes, p + kHeaderBytes + pixels);
    off += kHeaderBytes + pixels;
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<std::uint8_t> serialize_gnt(std::span<const GntRecord> records) {
  std::size_t total = 0;
  for (const GntRecord& r : records) {
    r.validate();
    total += r.sample_size;
  }
  std::vector<std::uint8_t> out;
  out.reserve(total);
  for (const GntRecord& r : records) {
    out.push_back(static_cast<std::uint8_t>(r.sample_size & 0xFF));
    out.push_back(static_cast<std::uint8_t>((r.sample_size >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((r.sample_size >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((r.sample_size >> 24) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((r.tag_code >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>(r.tag_code & 0xFF));
    out.push_back(static_cast<std::uint8_t>(r.width & 0xFF));
    out.push_back(static_cast<std::uint8_t>((r.width >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>(r.height & 0xFF));
    out.push_back(static_cast<std::uint8_t>((r.height >> 8) & 0xFF));
    out.insert(out.end(), r.bitmap.begin(), r.bitmap.end());
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!f) throw FormatError("cannot open " + path);
  std::fseek(f.get(), 0, SEEK_END);
  const long size = std::ftell(f.get());
  if (size < 0) throw FormatError("cannot stat " + path);
  std::fseek(f.get(), 0, SEEK_SET);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (size > 0 && std::fread(bytes.data(), 1, bytes.size(), f.get()) != bytes.size()) {
    throw FormatError("short read from " + path);
  }
  return bytes;
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  if (!bytes.empty() && std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size()) {
    throw FormatError("short write to " + path);
  }
}

}  // namespace hccr
