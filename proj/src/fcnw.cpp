#include "salnet/fcnw.hpp"

#include <cstring>
#include <fstream>

#include "salnet/error.hpp"

namespace salnet {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, const std::string& name)
      : bytes_(bytes), name_(name) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(name_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated container");
  }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = bytes_[pos_] | (bytes_[pos_ + 1] << 8) | (bytes_[pos_ + 2] << 16) |
                      (static_cast<std::uint32_t>(bytes_[pos_ + 3]) << 24);
    pos_ += 4;
    return v;
  }

  float f32() {
    const std::uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

  std::vector<std::uint8_t> raw(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> v(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return v;
  }

  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  const std::string& name_;
  std::size_t pos_ = 0;
};

}  // namespace

FcnwEntry FcnwEntry::text(const std::string& name, const std::string& content) {
  FcnwEntry e;
  e.name = name;
  e.is_bytes = true;
  e.bytes.assign(content.begin(), content.end());
  e.dims = {static_cast<std::uint32_t>(e.bytes.size())};
  return e;
}

std::string FcnwEntry::text_content() const {
  return std::string(bytes.begin(), bytes.end());
}

std::vector<std::uint8_t> encode_fcnw(const std::vector<FcnwEntry>& entries) {
  std::vector<std::uint8_t> out(kFcnwMagic, kFcnwMagic + 6);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const FcnwEntry& e : entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(static_cast<std::uint8_t>(e.dims.size()));
    std::uint64_t count = 1;
    for (std::uint32_t d : e.dims) {
      put_u32(out, d);
      count *= d;
    }
    if (e.is_bytes) {
      if (e.dims.size() != 1 || e.bytes.size() != e.dims[0]) {
        throw FormatError("fcnw: byte entry '" + e.name + "' dims disagree with payload size");
      }
      out.insert(out.end(), e.bytes.begin(), e.bytes.end());
    } else {
      if (count != e.values.size()) {
        throw FormatError("fcnw: entry '" + e.name + "' dims disagree with value count");
      }
      for (float f : e.values) put_f32(out, f);
    }
  }
  return out;
}

std::vector<FcnwEntry> decode_fcnw(const std::vector<std::uint8_t>& bytes,
                                   const std::string& name) {
  Reader r(bytes, name);
  r.need(6);
  if (std::memcmp(bytes.data(), kFcnwMagic, 6) != 0) {
    throw FormatError(name + ": bad magic at byte offset 0 (not an FCNW1 container)");
  }
  r.str(6);
  const std::uint32_t count = r.u32();
  std::vector<FcnwEntry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    FcnwEntry e;
    const std::uint32_t name_len = r.u32();
    if (name_len > (1u << 20)) r.fail("entry name length is implausible");
    e.name = r.str(name_len);
    const std::uint8_t rank = r.u8();
    if (rank < 1 || rank > 4) r.fail("entry '" + e.name + "' has unsupported rank");
    std::uint64_t n = 1;
    for (int d = 0; d < rank; ++d) {
      e.dims.push_back(r.u32());
      n *= e.dims.back();
      if (n > (1ull << 32)) r.fail("entry '" + e.name + "' dims overflow");
    }
    if (e.name == kConfigEntryName) {
      e.is_bytes = true;
      if (rank != 1) r.fail("config entry must have rank 1");
      e.bytes = r.raw(e.dims[0]);
    } else {
      e.values.resize(n);
      for (std::uint64_t j = 0; j < n; ++j) e.values[j] = r.f32();
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_fcnw(const std::string& path, const std::vector<FcnwEntry>& entries) {
  const std::vector<std::uint8_t> bytes = encode_fcnw(entries);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

std::vector<FcnwEntry> read_fcnw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_fcnw(bytes, path);
}

}  // namespace salnet
