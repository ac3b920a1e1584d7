#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "salnet/rng.hpp"
#include "salnet/tensor.hpp"

// Image and mask I/O (binary PPM/PGM), normalization, resizing, dataset
// manifests, and seeded batch iteration.

namespace salnet {

struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (grayscale) or 3 (RGB)
  std::vector<std::uint8_t> samples;  // row-major, channel-interleaved

  std::uint8_t& at(int y, int x, int c) {
    return samples[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  std::uint8_t at(int y, int x, int c) const {
    return samples[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
};

// Binary PPM (P6) and PGM (P5), maxval 255 only. Decode errors carry the
// byte offset of the problem.
ImageBuffer decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& name);
std::vector<std::uint8_t> encode_pnm(const ImageBuffer& image);
ImageBuffer read_image(const std::string& path);
void write_image(const ImageBuffer& image, const std::string& path);

enum class ResizeKind { bilinear, nearest };

// Half-pixel-center sampling (align-corners = false). Bilinear for images,
// nearest for masks.
ImageBuffer resize(const ImageBuffer& image, int target_h, int target_w, ResizeKind kind);

struct NormalizeConfig {
  float means[3] = {0.485f, 0.456f, 0.406f};
};

// Scales samples to [0,1] and subtracts per-channel means. Grayscale inputs
// are replicated to 3 channels first.
Tensor normalize(const ImageBuffer& image, const NormalizeConfig& config = {});

// round(v*255), clamped to [0,255]; halves round up.
ImageBuffer tensor_to_gray(const Tensor& map);
// 1-channel buffer -> (1,1,H,W) tensor in [0,1].
Tensor gray_to_tensor(const ImageBuffer& image);

struct ManifestEntry {
  std::string image;  // path relative to the manifest root
  std::string mask;
};

struct Manifest {
  std::string root;
  std::vector<ManifestEntry> entries;

  std::string image_path(std::size_t i) const;
  std::string mask_path(std::size_t i) const;
};

// One "image<TAB>mask" pair per line; '#' starts a comment. Every referenced
// file must exist at load time.
Manifest load_manifest(const std::string& path);

struct Sample {
  Tensor image;  // (1,3,H,W) normalized
  Tensor mask;   // (1,1,H,W) in [0,1]
};

struct SampleOptions {
  int target_h = 0;  // 0 = keep native size
  int target_w = 0;
  NormalizeConfig normalize;
  bool binarize_mask = false;  // threshold anti-aliased masks at 0.5
};

Sample load_sample(const Manifest& manifest, std::size_t index,
                   const SampleOptions& options = {});

class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual Sample get(std::size_t i) const = 0;
};

class MemoryDataset : public SampleSource {
 public:
  explicit MemoryDataset(std::vector<Sample> samples) : samples_(std::move(samples)) {}
  std::size_t size() const override { return samples_.size(); }
  Sample get(std::size_t i) const override { return samples_[i]; }

 private:
  std::vector<Sample> samples_;
};

// Decodes on every access; nothing is cached.
class ManifestDataset : public SampleSource {
 public:
  ManifestDataset(Manifest manifest, SampleOptions options)
      : manifest_(std::move(manifest)), options_(options) {}
  std::size_t size() const override { return manifest_.entries.size(); }
  Sample get(std::size_t i) const override { return load_sample(manifest_, i, options_); }
  const Manifest& manifest() const { return manifest_; }

 private:
  Manifest manifest_;
  SampleOptions options_;
};

// Seeded shuffle of [0, n) partitioned into batches; the last batch may be
// short. Together the batches cover every index exactly once.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    Rng& rng);

// Stacks same-sized samples into (B,3,H,W) images and (B,1,H,W) masks.
std::pair<Tensor, Tensor> stack_samples(const std::vector<Sample>& samples);

}  // namespace salnet
