#include "salnet/train.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "salnet/autograd.hpp"
#include "salnet/checkpoint.hpp"
#include "salnet/error.hpp"
#include "salnet/rng.hpp"

namespace salnet {

double l1_loss(const Tensor& prediction, const Tensor& gt) {
  return l1_loss_value(prediction, gt);
}

void AdamState::step(ParamStore& params) {
  ++t_;
  const double lr = config_.lr;
  const double b1 = config_.beta1, b2 = config_.beta2, eps = config_.epsilon;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (const std::string& name : params.names()) {
    ParamEntry& e = params.entry(name);
    if (e.frozen || e.buffer) continue;
    auto mit = m_.find(name);
    if (mit == m_.end()) {
      mit = m_.emplace(name, TensorT<double>(e.value.n(), e.value.c(), e.value.h(), e.value.w()))
                .first;
      v_.emplace(name, TensorT<double>(e.value.n(), e.value.c(), e.value.h(), e.value.w()));
    }
    TensorT<double>& m = mit->second;
    TensorT<double>& v = v_.at(name);
    if (!e.grad.same_shape(e.value)) {
      throw DimensionError("adam: gradient shape " + e.grad.shape_str() +
                           " does not match parameter " + e.value.shape_str() + " for " + name);
    }
    for (std::int64_t i = 0; i < e.value.size(); ++i) {
      const double g = static_cast<double>(e.grad[i]);
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / corr1;
      const double v_hat = v[i] / corr2;
      e.value[i] = static_cast<float>(static_cast<double>(e.value[i]) -
                                      lr * m_hat / (std::sqrt(v_hat) + eps));
    }
  }
}

std::vector<StepRecord> fit(const Model& model, ParamStore& params, const SampleSource& data,
                            const TrainConfig& config, AdamState* state,
                            const StepCallback& callback) {
  if (data.size() == 0) throw UsageError("fit: dataset is empty");
  if (config.epochs < 1) throw ConfigError("fit: epochs must be >= 1");
  if (config.batch_size < 1) throw ConfigError("fit: batch_size must be >= 1");
  if (config.checkpoint_every > 0 && config.checkpoint_path.empty()) {
    throw ConfigError("fit: checkpoint cadence set but no checkpoint path");
  }

  AdamState local(config.adam);
  AdamState& adam = state ? *state : local;
  Rng shuffle_rng(config.shuffle_seed);
  std::vector<StepRecord> records;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches =
        epoch_batches(data.size(), static_cast<std::size_t>(config.batch_size), shuffle_rng);
    int step = 0;
    for (const auto& batch : batches) {
      std::vector<Sample> samples;
      samples.reserve(batch.size());
      for (std::size_t idx : batch) samples.push_back(data.get(idx));
      auto [images, masks] = stack_samples(samples);

      Tape tape;
      const std::map<std::string, Var> leaves = model.make_leaves(tape, params);
      const Var pred = model.forward_traced(tape, leaves, images, Mode::train, &params);
      const Var loss = l1_loss(tape, pred, masks);
      const float loss_value = tape.value(loss)[0];
      tape.run_backward(loss, Tensor(1, 1, 1, 1, 1.0f));

      params.zero_grads();
      for (const auto& [name, var] : leaves) {
        params.grad(name) = tape.grad(var);
      }
      adam.step(params);

      ++step;
      StepRecord rec{epoch, step, loss_value};
      records.push_back(rec);
      if (callback) callback(rec);
    }
    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      save_checkpoint(params, model.config(), &adam, config.checkpoint_path);
    }
  }
  return records;
}

std::string log_to_csv(const std::vector<StepRecord>& records) {
  std::ostringstream os;
  os << "epoch,step,loss\n";
  for (const StepRecord& r : records) {
    os << r.epoch << "," << r.step << "," << std::fixed << std::setprecision(6) << r.loss
       << "\n";
  }
  return os.str();
}

}  // namespace salnet
