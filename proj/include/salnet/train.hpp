#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "salnet/data.hpp"
#include "salnet/model.hpp"
#include "salnet/tensor.hpp"

// Training loop: mean-absolute-pixel loss, Adam with bias correction, frozen
// parameters skipped entirely (values and moments untouched).

namespace salnet {

// Mean |prediction - gt| over all pixels; for batched inputs of uniform size
// this equals the per-image loss averaged over the batch.
double l1_loss(const Tensor& prediction, const Tensor& gt);

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const AdamConfig& config) : config_(config) {}

  // One optimizer step over every non-frozen, non-buffer parameter with the
  // gradients currently in the store. Moments are kept in double so the
  // update matches a scalar reference bit-for-bit at double precision.
  void step(ParamStore& params);

  std::int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }

  // Serialization access for checkpoints.
  std::map<std::string, TensorT<double>>& moments1() { return m_; }
  std::map<std::string, TensorT<double>>& moments2() { return v_; }
  const std::map<std::string, TensorT<double>>& moments1() const { return m_; }
  const std::map<std::string, TensorT<double>>& moments2() const { return v_; }
  void set_step_count(std::int64_t t) { t_ = t; }

 private:
  AdamConfig config_;
  std::map<std::string, TensorT<double>> m_;
  std::map<std::string, TensorT<double>> v_;
  std::int64_t t_ = 0;
};

struct TrainConfig {
  int epochs = 20;
  int batch_size = 20;
  AdamConfig adam;
  std::uint64_t shuffle_seed = 0;
  int checkpoint_every = 0;          // epochs between checkpoints; 0 = off
  std::string checkpoint_path;       // required when checkpoint_every > 0
};

struct StepRecord {
  int epoch = 0;  // 1-based
  int step = 0;   // 1-based within the epoch
  float loss = 0.0f;
};

using StepCallback = std::function<void(const StepRecord&)>;

// Runs the epoch/batch loop: seeded shuffle each epoch, forward on a tape,
// backward, Adam step. The last partial batch is trained on as-is. Returns
// one record per step. `state` may carry a resumed optimizer.
std::vector<StepRecord> fit(const Model& model, ParamStore& params, const SampleSource& data,
                            const TrainConfig& config, AdamState* state = nullptr,
                            const StepCallback& callback = {});

// CSV lines "epoch,step,loss" with the loss at 6 decimal places.
std::string log_to_csv(const std::vector<StepRecord>& records);

}  // namespace salnet
