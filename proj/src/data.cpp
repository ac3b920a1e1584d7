#include "salnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "salnet/error.hpp"

namespace salnet {

namespace {

class PnmParser {
 public:
  PnmParser(const std::vector<std::uint8_t>& bytes, const std::string& name)
      : bytes_(bytes), name_(name) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(name_ + ": " + what + " at offset " + std::to_string(pos_));
  }

  int get() {
    if (pos_ >= bytes_.size()) fail("unexpected end of file");
    return bytes_[pos_++];
  }

  // Whitespace between header tokens; '#' comments run to end of line.
  void skip_space() {
    while (pos_ < bytes_.size()) {
      const int ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int read_int() {
    skip_space();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) fail("expected an integer");
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > 1 << 30) fail("integer out of range");
    }
    return static_cast<int>(v);
  }

  std::size_t pos() const { return pos_; }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  const std::string& name_;
  std::size_t pos_ = 0;
};

}  // namespace

ImageBuffer decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  PnmParser p(bytes, name);
  const int m0 = p.get();
  const int m1 = p.get();
  int channels = 0;
  if (m0 == 'P' && m1 == '6') {
    channels = 3;
  } else if (m0 == 'P' && m1 == '5') {
    channels = 1;
  } else {
    throw FormatError(name + ": unsupported magic '" + static_cast<char>(m0) +
                      static_cast<char>(m1) + "' at offset 0 (binary P5/P6 only)");
  }
  const int width = p.read_int();
  const int height = p.read_int();
  const int maxval = p.read_int();
  if (width < 1 || height < 1) p.fail("image dimensions must be positive");
  if (maxval != 255) p.fail("maxval must be 255, got " + std::to_string(maxval));
  const int sep = p.get();
  if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n') {
    p.fail("expected single whitespace before raster");
  }
  const std::size_t need =
      static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * channels;
  if (bytes.size() - p.pos() < need) {
    throw FormatError(name + ": truncated raster, need " + std::to_string(need) +
                      " bytes at offset " + std::to_string(p.pos()) + ", have " +
                      std::to_string(bytes.size() - p.pos()));
  }
  ImageBuffer img;
  img.width = width;
  img.height = height;
  img.channels = channels;
  img.samples.assign(bytes.begin() + static_cast<std::ptrdiff_t>(p.pos()),
                     bytes.begin() + static_cast<std::ptrdiff_t>(p.pos() + need));
  return img;
}

std::vector<std::uint8_t> encode_pnm(const ImageBuffer& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw FormatError("encode_pnm: channels must be 1 or 3, got " +
                      std::to_string(image.channels));
  }
  std::ostringstream header;
  header << (image.channels == 3 ? "P6" : "P5") << "\n"
         << image.width << " " << image.height << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.insert(out.end(), image.samples.begin(), image.samples.end());
  return out;
}

ImageBuffer read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_pnm(bytes, path);
}

void write_image(const ImageBuffer& image, const std::string& path) {
  const std::vector<std::uint8_t> bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

ImageBuffer resize(const ImageBuffer& image, int target_h, int target_w, ResizeKind kind) {
  if (target_h < 1 || target_w < 1) {
    throw UsageError("resize: target dimensions must be >= 1");
  }
  if (target_h == image.height && target_w == image.width) return image;

  ImageBuffer out;
  out.width = target_w;
  out.height = target_h;
  out.channels = image.channels;
  out.samples.resize(static_cast<std::size_t>(target_w) * target_h * image.channels);
  const double sy = static_cast<double>(image.height) / target_h;
  const double sx = static_cast<double>(image.width) / target_w;

  for (int y = 0; y < target_h; ++y) {
    for (int x = 0; x < target_w; ++x) {
      if (kind == ResizeKind::nearest) {
        const int src_y = std::clamp(static_cast<int>((y + 0.5) * sy), 0, image.height - 1);
        const int src_x = std::clamp(static_cast<int>((x + 0.5) * sx), 0, image.width - 1);
        for (int c = 0; c < image.channels; ++c) {
          out.at(y, x, c) = image.at(src_y, src_x, c);
        }
      } else {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
        const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const int x1 = std::min(x0 + 1, image.width - 1);
        const double wy = fy - y0, wx = fx - x0;
        for (int c = 0; c < image.channels; ++c) {
          const double top = image.at(y0, x0, c) * (1.0 - wx) + image.at(y0, x1, c) * wx;
          const double bot = image.at(y1, x0, c) * (1.0 - wx) + image.at(y1, x1, c) * wx;
          const double v = top * (1.0 - wy) + bot * wy;
          out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
      }
    }
  }
  return out;
}

Tensor normalize(const ImageBuffer& image, const NormalizeConfig& config) {
  Tensor t(1, 3, image.height, image.width);
  for (int c = 0; c < 3; ++c) {
    const int src_c = image.channels == 3 ? c : 0;
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        t.at(0, c, y, x) =
            static_cast<float>(image.at(y, x, src_c)) / 255.0f - config.means[c];
      }
    }
  }
  return t;
}

ImageBuffer tensor_to_gray(const Tensor& map) {
  if (map.n() != 1 || map.c() != 1) {
    throw DimensionError("tensor_to_gray: expected (1,1,H,W), got " + map.shape_str());
  }
  ImageBuffer img;
  img.width = map.w();
  img.height = map.h();
  img.channels = 1;
  img.samples.resize(static_cast<std::size_t>(map.size()));
  for (std::int64_t i = 0; i < map.size(); ++i) {
    const long v = std::lround(static_cast<double>(map[i]) * 255.0);
    img.samples[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>(std::clamp(v, 0L, 255L));
  }
  return img;
}

Tensor gray_to_tensor(const ImageBuffer& image) {
  if (image.channels != 1) {
    throw DimensionError("gray_to_tensor: expected 1 channel, got " +
                         std::to_string(image.channels));
  }
  Tensor t(1, 1, image.height, image.width);
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<float>(image.samples[static_cast<std::size_t>(i)]) / 255.0f;
  }
  return t;
}

std::string Manifest::image_path(std::size_t i) const {
  return (std::filesystem::path(root) / entries[i].image).string();
}

std::string Manifest::mask_path(std::size_t i) const {
  return (std::filesystem::path(root) / entries[i].mask).string();
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  Manifest m;
  m.root = std::filesystem::path(path).parent_path().string();
  if (m.root.empty()) m.root = ".";
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
      line.pop_back();
    }
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": expected 'image<TAB>mask'");
    }
    m.entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    for (const std::string& p : {m.image_path(i), m.mask_path(i)}) {
      if (!std::filesystem::exists(p)) {
        throw IoError("manifest " + path + " references missing file: " + p);
      }
    }
  }
  return m;
}

Sample load_sample(const Manifest& manifest, std::size_t index, const SampleOptions& options) {
  ImageBuffer image = read_image(manifest.image_path(index));
  ImageBuffer mask = read_image(manifest.mask_path(index));
  if (mask.channels != 1) {
    throw FormatError(manifest.mask_path(index) + ": masks must be single-channel P5");
  }
  const int th = options.target_h > 0 ? options.target_h : image.height;
  const int tw = options.target_w > 0 ? options.target_w : image.width;
  image = resize(image, th, tw, ResizeKind::bilinear);
  mask = resize(mask, th, tw, ResizeKind::nearest);

  Sample s;
  s.image = normalize(image, options.normalize);
  s.mask = gray_to_tensor(mask);
  if (options.binarize_mask) {
    for (std::int64_t i = 0; i < s.mask.size(); ++i) {
      s.mask[i] = s.mask[i] > 0.5f ? 1.0f : 0.0f;
    }
  }
  return s;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    Rng& rng) {
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::pair<Tensor, Tensor> stack_samples(const std::vector<Sample>& samples) {
  if (samples.empty()) throw UsageError("stack_samples: empty batch");
  const int h = samples[0].image.h(), w = samples[0].image.w();
  Tensor images(static_cast<int>(samples.size()), 3, h, w);
  Tensor masks(static_cast<int>(samples.size()), 1, h, w);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.image.h() != h || s.image.w() != w || !s.mask.same_shape(samples[0].mask)) {
      throw DimensionError("stack_samples: sample " + std::to_string(i) +
                           " has mismatched size " + s.image.shape_str());
    }
    std::copy(s.image.data(), s.image.data() + s.image.size(),
              images.data() + images.offset(static_cast<int>(i), 0, 0, 0));
    std::copy(s.mask.data(), s.mask.data() + s.mask.size(),
              masks.data() + masks.offset(static_cast<int>(i), 0, 0, 0));
  }
  return {std::move(images), std::move(masks)};
}

}  // namespace salnet
