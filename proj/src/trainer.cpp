// SPDX-License-Identifier: Apache-2.0
#include "treeloss/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "treeloss/io.hpp"

namespace treeloss {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (lr < 0.0 || !std::isfinite(lr)) throw std::invalid_argument("lr must be >= 0");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0) throw std::invalid_argument("beta1 outside [0,1)");
  if (adam_beta2 < 0.0 || adam_beta2 >= 1.0) throw std::invalid_argument("beta2 outside [0,1)");
  if (adam_epsilon <= 0.0) throw std::invalid_argument("adam epsilon must be positive");
  if (lr_gamma <= 0.0 || lr_gamma > 1.0) throw std::invalid_argument("lr gamma outside (0,1]");
  if (batch_images < 1) throw std::invalid_argument("batch size must be >= 1");
  if (pixels_per_image < 1) throw std::invalid_argument("pixels per image must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("hidden sizes must be >= 1");
  if (loss.alpha < 0.0 || loss.beta < 0.0)
    throw std::invalid_argument("loss alpha and beta must be >= 0");
  if (loss.kind == LossKind::WassersteinCE && loss.alpha == 0.0 && loss.beta == 0.0)
    throw std::invalid_argument("wce needs alpha or beta nonzero");
}

Adam::Adam(const Mlp& model) : m_(model.make_grads()), v_(model.make_grads()) {}

void Adam::step(Mlp& model, const Mlp::Grads& grads, double lr, const TrainConfig& cfg) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t_));
  for (std::size_t li = 0; li < m_.layers.size(); ++li) {
    auto& layer = model.layers()[li];
    const auto& g = grads.layers[li];
    auto& m = m_.layers[li];
    auto& v = v_.layers[li];
    auto update = [&](std::vector<double>& p, const std::vector<double>& gp,
                      std::vector<double>& mp, std::vector<double>& vp) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = gp[i];
        if (!std::isfinite(gi))
          throw std::runtime_error("non-finite gradient: training diverged");
        mp[i] = cfg.adam_beta1 * mp[i] + (1.0 - cfg.adam_beta1) * gi;
        vp[i] = cfg.adam_beta2 * vp[i] + (1.0 - cfg.adam_beta2) * gi * gi;
        const double mhat = mp[i] / c1;
        const double vhat = vp[i] / c2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_epsilon);
      }
    };
    update(layer.w, g.w, m.w, v.w);
    update(layer.b, g.b, m.b, v.b);
  }
}

std::vector<double> l1_normalize(std::span<const double> pixel, long* zero_count) {
  double sum = 0.0;
  for (double x : pixel) sum += std::abs(x);
  std::vector<double> out(pixel.begin(), pixel.end());
  if (sum <= 0.0) {
    if (zero_count) ++*zero_count;
    return out;
  }
  for (double& x : out) x /= sum;
  return out;
}

namespace {

json config_json(const TrainConfig& cfg) {
  json j;
  j["lr"] = cfg.lr;
  j["adam_beta1"] = cfg.adam_beta1;
  j["adam_beta2"] = cfg.adam_beta2;
  j["adam_epsilon"] = cfg.adam_epsilon;
  j["lr_gamma"] = cfg.lr_gamma;
  j["batch_images"] = cfg.batch_images;
  j["pixels_per_image"] = cfg.pixels_per_image;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["hidden"] = cfg.hidden;
  j["loss"] = loss_name(cfg.loss.kind);
  j["scheme"] = scheme_name(cfg.loss.scheme);
  j["alpha"] = cfg.loss.alpha;
  j["beta"] = cfg.loss.beta;
  j["loss_epsilon"] = cfg.loss.epsilon;
  return j;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.lr = j.value("lr", cfg.lr);
  cfg.adam_beta1 = j.value("adam_beta1", cfg.adam_beta1);
  cfg.adam_beta2 = j.value("adam_beta2", cfg.adam_beta2);
  cfg.adam_epsilon = j.value("adam_epsilon", cfg.adam_epsilon);
  cfg.lr_gamma = j.value("lr_gamma", cfg.lr_gamma);
  cfg.batch_images = j.value("batch_images", cfg.batch_images);
  cfg.pixels_per_image = j.value("pixels_per_image", cfg.pixels_per_image);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.hidden = j.value("hidden", cfg.hidden);
  if (j.contains("loss")) cfg.loss.kind = loss_from_name(j["loss"].get<std::string>());
  if (j.contains("scheme")) cfg.loss.scheme = scheme_from_name(j["scheme"].get<std::string>());
  cfg.loss.alpha = j.value("alpha", cfg.loss.alpha);
  cfg.loss.beta = j.value("beta", cfg.loss.beta);
  cfg.loss.epsilon = j.value("loss_epsilon", cfg.loss.epsilon);
  return cfg;
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& cfg,
                  std::span<const int> image_indices) {
  cfg.validate();
  if (data.images.empty()) throw std::invalid_argument("dataset has no images");

  std::vector<int> selected(image_indices.begin(), image_indices.end());
  if (selected.empty()) {
    selected.resize(data.images.size());
    std::iota(selected.begin(), selected.end(), 0);
  }
  for (int idx : selected)
    if (idx < 0 || idx >= static_cast<int>(data.images.size()))
      throw std::invalid_argument("image index out of range: " + std::to_string(idx));

  const int c = data.tree.leaf_count();
  const int bands = data.images[selected.front()].cube.bands;

  // Positive-only pools: pixels labelled with an ID class. Label 0 (OOD
  // ground truth) and -1 (unannotated) never enter training.
  std::vector<std::vector<int>> pools(selected.size());
  std::size_t total = 0;
  for (std::size_t si = 0; si < selected.size(); ++si) {
    const auto& img = data.images[selected[si]];
    if (img.cube.bands != bands)
      throw std::invalid_argument("images disagree on band count");
    for (std::size_t pix = 0; pix < img.labels.labels.size(); ++pix) {
      const std::int32_t v = img.labels.labels[pix];
      if (v >= 1 && v <= c) pools[si].push_back(static_cast<int>(pix));
    }
    total += pools[si].size();
  }
  if (total == 0) throw std::invalid_argument("no annotated pixels in the training images");

  Rng rng(cfg.seed);
  TrainResult res;
  res.model = Mlp::init(bands, cfg.hidden, c, rng);
  const LossContext ctx = LossContext::make(data.tree, cfg.loss);
  Adam adam(res.model);

  Mlp::Workspace ws;
  Mlp::Grads grads = res.model.make_grads();
  std::vector<double> pixel(bands);
  std::vector<int> order(selected.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr_e = cfg.lr * std::pow(cfg.lr_gamma, static_cast<double>(epoch));
    rng.shuffle(order);
    double epoch_sum = 0.0;
    int steps = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_images) {
      grads.zero();
      double step_loss = 0.0;
      int count = 0;
      const std::size_t end = std::min(order.size(), at + cfg.batch_images);
      for (std::size_t oi = at; oi < end; ++oi) {
        const int si = order[oi];
        auto& pool = pools[si];
        const auto& img = data.images[selected[si]];
        const int k = std::min<int>(cfg.pixels_per_image, static_cast<int>(pool.size()));
        for (int draw = 0; draw < k; ++draw) {
          // partial Fisher-Yates: pool[0..draw) holds this step's sample
          const int j = draw + static_cast<int>(rng.next_u64() %
                                                static_cast<std::uint64_t>(pool.size() - draw));
          std::swap(pool[draw], pool[j]);
          const int pix = pool[draw];
          const std::int32_t code = img.labels.labels[pix];
          if (code < 1 || code > c) {
            ++res.unannotated_touched;  // never happens; counter assures the contract
            continue;
          }
          for (int b = 0; b < bands; ++b)
            pixel[b] = img.cube.values[static_cast<std::size_t>(pix) * bands + b];
          const auto x = l1_normalize(pixel, &res.zero_pixels);
          const auto logits = res.model.forward(x, ws);
          const auto probs = softmax(logits);
          step_loss += pixel_loss(probs, code - 1, cfg.loss, ctx);
          const auto dlz = loss_gradient(logits, code - 1, cfg.loss, ctx);
          res.model.backward(ws, dlz, grads);
          ++count;
          ++res.sampled_pixels;
        }
      }
      if (count == 0) continue;
      grads.scale(1.0 / count);
      step_loss /= count;
      adam.step(res.model, grads, lr_e, cfg);
      epoch_sum += step_loss;
      ++steps;
    }
    res.epoch_loss.push_back(steps > 0 ? epoch_sum / steps : 0.0);
    res.epoch_lr.push_back(lr_e);
  }
  return res;
}

static constexpr char kCheckpointMagic[8] = {'T', 'L', 'C', 'K', 'P', 'T', '1', '\n'};

void save_checkpoint(const std::string& path, const Mlp& model, const TrainConfig& cfg) {
  json header;
  header["format"] = "treeloss-checkpoint";
  header["version"] = 1;
  header["inputs"] = model.input_dim();
  header["hidden"] = model.hidden_sizes();
  header["outputs"] = model.output_dim();
  header["parameters"] = model.parameter_count();
  header["config"] = config_json(cfg);
  header["config_digest"] = fnv1a64_hex(config_json(cfg).dump());
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint32_t len = static_cast<std::uint32_t>(htext.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  const auto params = model.flatten();
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (!out) throw std::runtime_error("short write: " + path);
}

Mlp load_checkpoint(const std::string& path, TrainConfig* cfg_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (in.gcount() != sizeof magic || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string htext(len, '\0');
  in.read(htext.data(), len);
  if (static_cast<std::uint32_t>(in.gcount()) != len)
    throw std::runtime_error("truncated checkpoint header: " + path);
  json header = json::parse(htext);

  const int inputs = header.at("inputs").get<int>();
  const int outputs = header.at("outputs").get<int>();
  const auto hidden = header.at("hidden").get<std::vector<int>>();
  Rng shape_rng(0);
  Mlp model = Mlp::init(inputs, hidden, outputs, shape_rng);

  std::vector<double> params(model.parameter_count());
  in.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != params.size() * sizeof(double))
    throw std::runtime_error("truncated checkpoint blob: " + path);
  model.unflatten(params);

  if (cfg_out && header.contains("config")) *cfg_out = config_from_json(header["config"]);
  return model;
}

std::string trace_csv(const TrainResult& result) {
  std::ostringstream out;
  out << "epoch,lr,loss\n";
  char buf[96];
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g\n", e, result.epoch_lr[e],
                  result.epoch_loss[e]);
    out << buf;
  }
  return out.str();
}

}  // namespace treeloss
