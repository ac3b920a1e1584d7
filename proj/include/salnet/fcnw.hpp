#pragma once

#include <cstdint>
#include <string>
#include <vector>

// FCNW1 weight/checkpoint container.
//
// Layout (all integers little-endian):
//   magic "FCNW1\0"
//   u32 entry count
//   per entry:
//     u32 name length, UTF-8 name bytes
//     u8 rank, rank x u32 dims
//     payload: dim-product f32 values, except for the entry named
//     "__config__" whose payload is dims[0] raw UTF-8 bytes.

namespace salnet {

inline constexpr char kFcnwMagic[6] = {'F', 'C', 'N', 'W', '1', '\0'};
inline constexpr const char* kConfigEntryName = "__config__";

struct FcnwEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;       // used unless is_bytes
  std::vector<std::uint8_t> bytes; // used for the config entry
  bool is_bytes = false;

  static FcnwEntry text(const std::string& name, const std::string& content);
  std::string text_content() const;
};

std::vector<std::uint8_t> encode_fcnw(const std::vector<FcnwEntry>& entries);
std::vector<FcnwEntry> decode_fcnw(const std::vector<std::uint8_t>& bytes,
                                   const std::string& name);
void write_fcnw(const std::string& path, const std::vector<FcnwEntry>& entries);
std::vector<FcnwEntry> read_fcnw(const std::string& path);

}  // namespace salnet
