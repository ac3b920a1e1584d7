#include "salnet/model.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "salnet/error.hpp"
#include "salnet/fcnw.hpp"
#include "salnet/rng.hpp"

namespace salnet {

int ModelConfig::scaled(int width) const {
  const long w = std::lround(width * channel_scale);
  return w < 1 ? 1 : static_cast<int>(w);
}

void ModelConfig::validate() const {
  if (encoder_stages.size() != 5) {
    throw ConfigError("encoder_stages: exactly 5 stages required, got " +
                      std::to_string(encoder_stages.size()));
  }
  if (decoder_channels.size() != 5) {
    throw ConfigError("decoder_channels: exactly 5 stages required, got " +
                      std::to_string(decoder_channels.size()));
  }
  if (channel_scale <= 0.0) throw ConfigError("channel_scale must be positive");
  for (const auto& [convs, width] : encoder_stages) {
    if (convs < 1) throw ConfigError("encoder_stages: conv count must be >= 1");
    if (width < 1) throw ConfigError("encoder_stages: channel width must be >= 1");
  }
  for (int c : decoder_channels) {
    if (c < 1) throw ConfigError("decoder_channels: channel width must be >= 1");
  }
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "format_version=1\n";
  os << "encoder_stages=";
  for (std::size_t i = 0; i < encoder_stages.size(); ++i) {
    os << (i ? "," : "") << encoder_stages[i].first << "x" << encoder_stages[i].second;
  }
  os << "\nencoder_pool=" << (encoder_pool_kind == PoolKind::average ? "average" : "max");
  os << "\ndecoder_channels=";
  for (std::size_t i = 0; i < decoder_channels.size(); ++i) {
    os << (i ? "," : "") << decoder_channels[i];
  }
  os << "\ndecoder_batch_norm=" << (decoder_batch_norm ? 1 : 0);
  os << "\ndecoder_relu=" << (decoder_relu ? 1 : 0);
  os << "\nchannel_scale=" << std::setprecision(17) << channel_scale << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig cfg;
  cfg.encoder_stages.clear();
  cfg.decoder_channels.clear();
  bool version_seen = false;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("model config: bad line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "format_version") {
      if (val != "1") throw FormatError("model config: unsupported format_version " + val);
      version_seen = true;
    } else if (key == "encoder_stages") {
      std::istringstream vs(val);
      std::string item;
      while (std::getline(vs, item, ',')) {
        const std::size_t x = item.find('x');
        if (x == std::string::npos) throw FormatError("model config: bad stage '" + item + "'");
        cfg.encoder_stages.emplace_back(std::stoi(item.substr(0, x)),
                                        std::stoi(item.substr(x + 1)));
      }
    } else if (key == "encoder_pool") {
      if (val == "average") {
        cfg.encoder_pool_kind = PoolKind::average;
      } else if (val == "max") {
        cfg.encoder_pool_kind = PoolKind::max;
      } else {
        throw FormatError("model config: bad encoder_pool '" + val + "'");
      }
    } else if (key == "decoder_channels") {
      std::istringstream vs(val);
      std::string item;
      while (std::getline(vs, item, ',')) cfg.decoder_channels.push_back(std::stoi(item));
    } else if (key == "decoder_batch_norm") {
      cfg.decoder_batch_norm = val != "0";
    } else if (key == "decoder_relu") {
      cfg.decoder_relu = val != "0";
    } else if (key == "channel_scale") {
      cfg.channel_scale = std::stod(val);
    } else {
      throw FormatError("model config: unknown key '" + key + "'");
    }
  }
  if (!version_seen) throw FormatError("model config: missing format_version");
  cfg.validate();
  return cfg;
}

void ParamStore::add(const std::string& name, Tensor value, bool buffer) {
  if (has(name)) throw ConfigError("duplicate parameter name: " + name);
  ParamEntry e;
  e.grad = Tensor(value.n(), value.c(), value.h(), value.w());
  e.value = std::move(value);
  e.buffer = buffer;
  order_.push_back(name);
  map_.emplace(name, std::move(e));
}

ParamEntry& ParamStore::entry(const std::string& name) {
  auto it = map_.find(name);
  if (it == map_.end()) throw UsageError("no such parameter: " + name);
  return it->second;
}

const ParamEntry& ParamStore::entry(const std::string& name) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw UsageError("no such parameter: " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (const std::string& n : order_) map_.at(n).grad.fill(0.0f);
}

void ParamStore::freeze_prefix(const std::string& prefix) {
  for (const std::string& n : order_) {
    if (n.rfind(prefix, 0) == 0) map_.at(n).frozen = true;
  }
}

std::int64_t ParamStore::parameter_count() const {
  std::int64_t total = 0;
  for (const std::string& n : order_) {
    const ParamEntry& e = map_.at(n);
    if (!e.buffer) total += e.value.size();
  }
  return total;
}

void freeze_encoder(ParamStore& params) { params.freeze_prefix("encoder."); }

Model::Model(ModelConfig config) : config_(std::move(config)) { config_.validate(); }

namespace {

Tensor he_uniform(Rng& rng, int n, int c, int h, int w, int fan_in) {
  const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
  Tensor t(n, c, h, w);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

std::pair<Model, ParamStore> Model::build(const ModelConfig& config, std::uint64_t seed) {
  Model model(config);
  ParamStore store;
  Rng rng(seed);

  int in_ch = 3;
  for (std::size_t s = 0; s < config.encoder_stages.size(); ++s) {
    const int convs = config.encoder_stages[s].first;
    const int width = config.scaled(config.encoder_stages[s].second);
    for (int j = 0; j < convs; ++j) {
      const std::string base =
          "encoder.stage" + std::to_string(s + 1) + ".conv" + std::to_string(j + 1);
      store.add(base + ".weight", he_uniform(rng, width, in_ch, 3, 3, in_ch * 9));
      store.add(base + ".bias", Tensor(1, width, 1, 1));
      in_ch = width;
    }
  }
  for (std::size_t s = 0; s < config.decoder_channels.size(); ++s) {
    const int width = config.scaled(config.decoder_channels[s]);
    const std::string base = "decoder.stage" + std::to_string(s + 1);
    store.add(base + ".tconv.weight", he_uniform(rng, in_ch, width, 2, 2, in_ch * 4));
    store.add(base + ".tconv.bias", Tensor(1, width, 1, 1));
    if (config.decoder_batch_norm) {
      store.add(base + ".bn.gamma", Tensor(1, width, 1, 1, 1.0f));
      store.add(base + ".bn.beta", Tensor(1, width, 1, 1));
      store.add(base + ".bn.running_mean", Tensor(1, width, 1, 1), /*buffer=*/true);
      store.add(base + ".bn.running_var", Tensor(1, width, 1, 1, 1.0f), /*buffer=*/true);
    }
    in_ch = width;
  }
  store.add("head.conv.weight", he_uniform(rng, 1, in_ch, 1, 1, in_ch));
  store.add("head.conv.bias", Tensor(1, 1, 1, 1));
  return {std::move(model), std::move(store)};
}

namespace {

struct PadPlan {
  int pad_h = 0;
  int pad_w = 0;
  bool needed() const { return pad_h > 0 || pad_w > 0; }
};

PadPlan make_pad_plan(int h, int w) {
  PadPlan p;
  p.pad_h = (32 - h % 32) % 32;
  p.pad_w = (32 - w % 32) % 32;
  return p;
}

void record(std::vector<StageShape>* stages, const std::string& name, const Tensor& t) {
  if (stages) stages->push_back({name, {t.n(), t.c(), t.h(), t.w()}});
}

}  // namespace

Tensor Model::forward(const ParamStore& params, const Tensor& images, Mode mode,
                      std::vector<StageShape>* stages) const {
  if (images.c() != 3) {
    throw DimensionError("forward: expected 3 input channels, got " +
                         std::to_string(images.c()));
  }
  const int in_h = images.h(), in_w = images.w();
  const PadPlan pad = make_pad_plan(in_h, in_w);
  Tensor x = pad.needed() ? pad_replicate2d(images, 0, pad.pad_h, 0, pad.pad_w) : images;

  const Conv2dSpec conv_spec{3, 3, 1, 1};
  for (std::size_t s = 0; s < config_.encoder_stages.size(); ++s) {
    for (int j = 0; j < config_.encoder_stages[s].first; ++j) {
      const std::string base =
          "encoder.stage" + std::to_string(s + 1) + ".conv" + std::to_string(j + 1);
      x = relu(conv2d(x, params.value(base + ".weight"), params.value(base + ".bias"),
                      conv_spec));
    }
    x = config_.encoder_pool_kind == PoolKind::average ? avg_pool2d(x) : max_pool2d(x);
    record(stages, "encoder.stage" + std::to_string(s + 1), x);
  }

  for (std::size_t s = 0; s < config_.decoder_channels.size(); ++s) {
    const std::string base = "decoder.stage" + std::to_string(s + 1);
    x = transpose_conv2d(x, params.value(base + ".tconv.weight"),
                         params.value(base + ".tconv.bias"));
    if (config_.decoder_batch_norm) {
      BatchNormResult<float> bn = batch_norm(
          x, params.value(base + ".bn.gamma"), params.value(base + ".bn.beta"),
          params.value(base + ".bn.running_mean"), params.value(base + ".bn.running_var"), mode);
      x = std::move(bn.output);
    }
    if (config_.decoder_relu) x = relu(x);
    record(stages, base, x);
  }

  x = conv2d(x, params.value("head.conv.weight"), params.value("head.conv.bias"),
             Conv2dSpec{1, 1, 1, 0});
  x = sigmoid(x);
  if (pad.needed()) x = crop2d(x, 0, 0, in_h, in_w);
  record(stages, "output", x);
  return x;
}

std::map<std::string, Var> Model::make_leaves(Tape& tape, const ParamStore& params) const {
  std::map<std::string, Var> leaves;
  for (const std::string& name : params.names()) {
    if (params.entry(name).buffer) continue;  // running stats stay constants
    leaves.emplace(name, tape.leaf(params.value(name)));
  }
  return leaves;
}

Var Model::forward_traced(Tape& tape, const std::map<std::string, Var>& leaves,
                          const Tensor& images, Mode mode, ParamStore* params) const {
  if (images.c() != 3) {
    throw DimensionError("forward: expected 3 input channels, got " +
                         std::to_string(images.c()));
  }
  const auto leaf = [&leaves](const std::string& name) -> Var {
    auto it = leaves.find(name);
    if (it == leaves.end()) throw UsageError("forward_traced: missing leaf for " + name);
    return it->second;
  };

  const int in_h = images.h(), in_w = images.w();
  const PadPlan pad = make_pad_plan(in_h, in_w);
  Var x = tape.leaf(images);
  if (pad.needed()) x = pad_replicate2d(tape, x, 0, pad.pad_h, 0, pad.pad_w);

  const Conv2dSpec conv_spec{3, 3, 1, 1};
  for (std::size_t s = 0; s < config_.encoder_stages.size(); ++s) {
    for (int j = 0; j < config_.encoder_stages[s].first; ++j) {
      const std::string base =
          "encoder.stage" + std::to_string(s + 1) + ".conv" + std::to_string(j + 1);
      x = relu(tape, conv2d(tape, x, leaf(base + ".weight"), leaf(base + ".bias"), conv_spec));
    }
    x = config_.encoder_pool_kind == PoolKind::average ? avg_pool2d(tape, x)
                                                       : max_pool2d(tape, x);
  }

  for (std::size_t s = 0; s < config_.decoder_channels.size(); ++s) {
    const std::string base = "decoder.stage" + std::to_string(s + 1);
    x = transpose_conv2d(tape, x, leaf(base + ".tconv.weight"), leaf(base + ".tconv.bias"));
    if (config_.decoder_batch_norm) {
      Tensor fresh_rm, fresh_rv;
      const Tensor* rm;
      const Tensor* rv;
      if (params) {
        rm = &params->value(base + ".bn.running_mean");
        rv = &params->value(base + ".bn.running_var");
      } else {
        fresh_rm = Tensor(1, tape.value(x).c(), 1, 1);
        fresh_rv = Tensor(1, tape.value(x).c(), 1, 1, 1.0f);
        rm = &fresh_rm;
        rv = &fresh_rv;
      }
      BatchNormTraced<float> bn = batch_norm(tape, x, leaf(base + ".bn.gamma"),
                                             leaf(base + ".bn.beta"), *rm, *rv, mode);
      if (mode == Mode::train && params) {
        params->value(base + ".bn.running_mean") = std::move(bn.new_running_mean);
        params->value(base + ".bn.running_var") = std::move(bn.new_running_var);
      }
      x = bn.out;
    }
    if (config_.decoder_relu) x = relu(tape, x);
  }

  x = conv2d(tape, x, leaf("head.conv.weight"), leaf("head.conv.bias"), Conv2dSpec{1, 1, 1, 0});
  x = sigmoid(tape, x);
  if (pad.needed()) x = crop2d(tape, x, 0, 0, in_h, in_w);
  return x;
}

namespace {

std::array<int, 4> canonical_dims(const std::vector<std::uint32_t>& dims) {
  std::array<int, 4> d = {1, 1, 1, 1};
  switch (dims.size()) {
    case 1:
      d[1] = static_cast<int>(dims[0]);
      break;
    case 2:
      d[2] = static_cast<int>(dims[0]);
      d[3] = static_cast<int>(dims[1]);
      break;
    case 3:
      d[1] = static_cast<int>(dims[0]);
      d[2] = static_cast<int>(dims[1]);
      d[3] = static_cast<int>(dims[2]);
      break;
    default:
      for (int i = 0; i < 4; ++i) d[static_cast<std::size_t>(i)] = static_cast<int>(dims[i]);
  }
  return d;
}

std::string dims_str(const std::array<int, 4>& d) {
  return "(" + std::to_string(d[0]) + "," + std::to_string(d[1]) + "," + std::to_string(d[2]) +
         "," + std::to_string(d[3]) + ")";
}

}  // namespace

ImportReport import_weights(ParamStore& params, const std::string& container_path,
                            const std::map<std::string, std::string>& name_map) {
  const std::vector<FcnwEntry> entries = read_fcnw(container_path);
  ImportReport report;
  std::vector<bool> seen(params.names().size(), false);

  for (const FcnwEntry& e : entries) {
    if (e.name.rfind("__", 0) == 0) {
      report.skipped.emplace_back(e.name, "internal entry");
      continue;
    }
    std::string target = e.name;
    if (auto it = name_map.find(e.name); it != name_map.end()) target = it->second;
    if (!params.has(target)) {
      report.skipped.emplace_back(e.name, "no such parameter '" + target + "'");
      continue;
    }
    Tensor& dst = params.value(target);
    const std::array<int, 4> got = canonical_dims(e.dims);
    const std::array<int, 4> want = {dst.n(), dst.c(), dst.h(), dst.w()};
    if (got != want) {
      report.skipped.emplace_back(
          e.name, "shape conflict: container " + dims_str(got) + " vs parameter " +
                      dims_str(want));
      continue;
    }
    for (std::int64_t i = 0; i < dst.size(); ++i) {
      dst[i] = e.values[static_cast<std::size_t>(i)];
    }
    report.matched.push_back(target);
    for (std::size_t i = 0; i < params.names().size(); ++i) {
      if (params.names()[i] == target) seen[i] = true;
    }
  }
  for (std::size_t i = 0; i < params.names().size(); ++i) {
    if (!seen[i]) report.missing.push_back(params.names()[i]);
  }
  return report;
}

}  // namespace salnet
