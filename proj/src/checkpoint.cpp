#include "salnet/checkpoint.hpp"

#include <array>

#include "salnet/error.hpp"
#include "salnet/fcnw.hpp"

namespace salnet {

namespace {

// Per-channel vectors are stored rank-1; everything else keeps full rank 4.
FcnwEntry tensor_entry(const std::string& name, const Tensor& t) {
  FcnwEntry e;
  e.name = name;
  if (t.n() == 1 && t.h() == 1 && t.w() == 1) {
    e.dims = {static_cast<std::uint32_t>(t.c())};
  } else {
    e.dims = {static_cast<std::uint32_t>(t.n()), static_cast<std::uint32_t>(t.c()),
              static_cast<std::uint32_t>(t.h()), static_cast<std::uint32_t>(t.w())};
  }
  e.values.assign(t.data(), t.data() + t.size());
  return e;
}

bool dims_match(const std::vector<std::uint32_t>& dims, const Tensor& t) {
  if (dims.size() == 1) {
    return t.n() == 1 && static_cast<int>(dims[0]) == t.c() && t.h() == 1 && t.w() == 1;
  }
  if (dims.size() == 4) {
    return static_cast<int>(dims[0]) == t.n() && static_cast<int>(dims[1]) == t.c() &&
           static_cast<int>(dims[2]) == t.h() && static_cast<int>(dims[3]) == t.w();
  }
  return false;
}

}  // namespace

void save_checkpoint(const ParamStore& params, const ModelConfig& config,
                     const AdamState* optimizer, const std::string& path) {
  std::vector<FcnwEntry> entries;
  entries.push_back(FcnwEntry::text(kConfigEntryName, config.to_text()));
  for (const std::string& name : params.names()) {
    entries.push_back(tensor_entry(name, params.value(name)));
  }
  if (optimizer) {
    const AdamConfig& a = optimizer->config();
    FcnwEntry hyper;
    hyper.name = "__optim__.hyper";
    hyper.dims = {4};
    hyper.values = {a.lr, a.beta1, a.beta2, a.epsilon};
    entries.push_back(std::move(hyper));
    FcnwEntry step;
    step.name = "__optim__.t";
    step.dims = {1};
    step.values = {static_cast<float>(optimizer->step_count())};
    entries.push_back(std::move(step));
    for (const auto& [name, m] : optimizer->moments1()) {
      entries.push_back(tensor_entry("__optim__.m." + name, m.cast<float>()));
    }
    for (const auto& [name, v] : optimizer->moments2()) {
      entries.push_back(tensor_entry("__optim__.v." + name, v.cast<float>()));
    }
  }
  write_fcnw(path, entries);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const std::vector<FcnwEntry> entries = read_fcnw(path);
  const FcnwEntry* config_entry = nullptr;
  for (const FcnwEntry& e : entries) {
    if (e.name == kConfigEntryName) config_entry = &e;
  }
  if (!config_entry) throw FormatError(path + ": missing __config__ entry");

  LoadedCheckpoint out{ModelConfig::from_text(config_entry->text_content()), {}, {}};
  auto [model, store] = Model::build(out.config, /*seed=*/0);
  (void)model;

  bool has_optim = false;
  AdamConfig adam_config;
  std::int64_t step_count = 0;
  std::map<std::string, TensorT<double>> m1, m2;
  std::size_t params_filled = 0;

  for (const FcnwEntry& e : entries) {
    if (e.name == kConfigEntryName) continue;
    if (e.name == "__optim__.hyper") {
      if (e.values.size() != 4) throw FormatError(path + ": malformed optimizer hyperparams");
      adam_config = {e.values[0], e.values[1], e.values[2], e.values[3]};
      has_optim = true;
    } else if (e.name == "__optim__.t") {
      if (e.values.size() != 1) throw FormatError(path + ": malformed optimizer step count");
      step_count = static_cast<std::int64_t>(e.values[0]);
      has_optim = true;
    } else if (e.name.rfind("__optim__.m.", 0) == 0 || e.name.rfind("__optim__.v.", 0) == 0) {
      const bool first = e.name[10] == 'm';
      const std::string param = e.name.substr(12);
      if (!store.has(param)) {
        throw FormatError(path + ": optimizer moment for unknown parameter '" + param + "'");
      }
      const Tensor& shape_like = store.value(param);
      if (!dims_match(e.dims, shape_like)) {
        throw FormatError(path + ": optimizer moment shape mismatch for '" + param + "'");
      }
      TensorT<double> t(shape_like.n(), shape_like.c(), shape_like.h(), shape_like.w());
      for (std::int64_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<double>(e.values[static_cast<std::size_t>(i)]);
      }
      (first ? m1 : m2).emplace(param, std::move(t));
      has_optim = true;
    } else {
      if (!store.has(e.name)) {
        throw FormatError(path + ": unexpected tensor '" + e.name + "' for this config");
      }
      Tensor& dst = store.value(e.name);
      if (!dims_match(e.dims, dst)) {
        throw FormatError(path + ": tensor '" + e.name + "' has wrong shape");
      }
      for (std::int64_t i = 0; i < dst.size(); ++i) {
        dst[i] = e.values[static_cast<std::size_t>(i)];
      }
      ++params_filled;
    }
  }
  if (params_filled != store.names().size()) {
    throw FormatError(path + ": checkpoint does not cover every parameter (" +
                      std::to_string(params_filled) + " of " +
                      std::to_string(store.names().size()) + ")");
  }
  out.params = std::move(store);
  if (has_optim) {
    AdamState state(adam_config);
    state.set_step_count(step_count);
    state.moments1() = std::move(m1);
    state.moments2() = std::move(m2);
    out.optimizer = std::move(state);
  }
  return out;
}

}  // namespace salnet
