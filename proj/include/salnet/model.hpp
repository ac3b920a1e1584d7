#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "salnet/autograd.hpp"
#include "salnet/ops.hpp"
#include "salnet/tensor.hpp"

// The encoder-decoder saliency network: a VGG-16-style convolutional encoder
// (five stages, 2x downsampling each) followed by five 2x transpose-conv
// upsampling stages and a 1x1 conv + sigmoid head. Fully convolutional:
// parameter shapes never depend on the input size.

namespace salnet {

struct ModelConfig {
  // (conv count, channel width) per encoder stage.
  std::vector<std::pair<int, int>> encoder_stages = {
      {2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};
  PoolKind encoder_pool_kind = PoolKind::average;
  // Output width of each transpose-conv stage; the head maps the last width
  // to a single channel.
  std::vector<int> decoder_channels = {256, 128, 64, 32, 16};
  bool decoder_batch_norm = true;
  bool decoder_relu = true;
  // Multiplies every channel width; 1.0 is paper size, small fractions give
  // desk-scale models for tests.
  double channel_scale = 1.0;

  int scaled(int width) const;
  int deepest_width() const { return scaled(encoder_stages.back().second); }
  void validate() const;

  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
};

struct ParamEntry {
  Tensor value;
  Tensor grad;
  bool frozen = false;
  bool buffer = false;  // running stats: persisted but never optimized
};

// Named learnable tensors in a stable insertion order.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value, bool buffer = false);
  bool has(const std::string& name) const { return map_.count(name) > 0; }
  ParamEntry& entry(const std::string& name);
  const ParamEntry& entry(const std::string& name) const;
  Tensor& value(const std::string& name) { return entry(name).value; }
  const Tensor& value(const std::string& name) const { return entry(name).value; }
  Tensor& grad(const std::string& name) { return entry(name).grad; }
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }
  void zero_grads();
  void freeze_prefix(const std::string& prefix);
  std::int64_t parameter_count() const;  // excludes buffers

 private:
  std::vector<std::string> order_;
  std::map<std::string, ParamEntry> map_;
};

// Flags every "encoder.*" parameter frozen; decoder and head stay trainable.
void freeze_encoder(ParamStore& params);

struct StageShape {
  std::string name;
  std::array<int, 4> shape;
};

class Model {
 public:
  explicit Model(ModelConfig config);
  const ModelConfig& config() const { return config_; }

  // Initializes parameters (He-uniform fan-in weights, zero biases, batch
  // norm gamma=1/beta=0, running stats 0/1), deterministic for a given seed.
  static std::pair<Model, ParamStore> build(const ModelConfig& config, std::uint64_t seed);

  // Inference-path forward. Inputs of any size are edge-padded up to the
  // next multiple of 32 and the output is cropped back. Never mutates
  // params (batch-norm running stats are left untouched even in train mode).
  Tensor forward(const ParamStore& params, const Tensor& images, Mode mode,
                 std::vector<StageShape>* stages = nullptr) const;

  // Training-path forward on a tape. `leaves` must come from make_leaves on
  // the same store. In train mode the batch-norm running stats inside
  // `params` are updated in place.
  Var forward_traced(Tape& tape, const std::map<std::string, Var>& leaves,
                     const Tensor& images, Mode mode, ParamStore* params) const;

  std::map<std::string, Var> make_leaves(Tape& tape, const ParamStore& params) const;

 private:
  ModelConfig config_;
};

struct ImportReport {
  std::vector<std::string> matched;
  // (container entry, reason) pairs; shape conflicts land here.
  std::vector<std::pair<std::string, std::string>> skipped;
  // store parameters the container did not provide
  std::vector<std::string> missing;
};

// Copies tensors from an FCNW1 container into the store wherever names (after
// name_map translation) and shapes agree. Mismatches are reported, never
// silently reshaped.
ImportReport import_weights(ParamStore& params, const std::string& container_path,
                            const std::map<std::string, std::string>& name_map = {});

}  // namespace salnet
