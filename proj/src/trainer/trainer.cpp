#include "trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "autograd/adam.hpp"
#include "evalviz/evalviz.hpp"
#include "trainer/checkpoint.hpp"

namespace flowseed::trainer {

using autograd::Adam;
using autograd::AdamConfig;
using autograd::Tensor;
using embednet::EmbeddingNetwork;
using embednet::SegmentationHead;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<int> shuffled_indices(size_t n, std::uint64_t seed) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (size_t i = n; i > 1; --i) {
    const size_t j = rng.uniform_index(i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

Tensor mean_of(std::vector<Tensor> losses) {
  Tensor total = losses[0];
  for (size_t i = 1; i < losses.size(); ++i) total = autograd::add(total, losses[i]);
  return autograd::mul_scalar(total, 1.0 / static_cast<double>(losses.size()));
}

Image probability_image(const Tensor& pred) {
  const int h = pred.shape()[1];
  const int w = pred.shape()[2];
  Image out(w, h);
  out.v = pred.values();
  return out;
}

std::uint64_t epoch_index(int epoch, int item) {
  return (static_cast<std::uint64_t>(epoch) << 32) |
         static_cast<std::uint64_t>(item);
}

}  // namespace

TrainConfig from_run_config(const io::RunConfig& rc, Phase phase) {
  TrainConfig cfg;
  cfg.phase = phase;
  cfg.epochs = phase == Phase::Pretrain ? rc.pretrain_epochs : rc.finetune_epochs;
  cfg.learning_rate = rc.learning_rate;
  cfg.batch_size = rc.batch_size;
  cfg.labeled_count = rc.labeled_count;
  cfg.master_seed = rc.master_seed;
  cfg.eval_every = rc.eval_every;
  cfg.freeze_backbone = rc.freeze_backbone;
  cfg.kernel.sigma = rc.sigma;
  cfg.kernel.eps_flow = rc.eps_flow;
  cfg.kernel.cos_floor = rc.cos_floor;
  cfg.kernel.neighborhood_radius = rc.neighborhood_radius;
  cfg.kernel.anchors_per_image = rc.anchors_per_image;
  cfg.net.embedding_dim = rc.embedding_dim;
  cfg.net.levels = rc.levels;
  cfg.net.base_channels = rc.base_channels;
  cfg.aug.hflip_prob = rc.hflip_prob;
  cfg.aug.rotation_deg = rc.rotation_deg;
  cfg.aug.scale_min = rc.scale_min;
  cfg.aug.scale_max = rc.scale_max;
  cfg.aug.shear_deg = rc.shear_deg;
  return cfg;
}

void write_run_csv(const RunRecord& record, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("run record: could not open " + path);
  out << "epoch,loss,dice,seconds\n";
  char buf[96];
  for (size_t e = 0; e < record.epoch_loss.size(); ++e) {
    const int epoch = static_cast<int>(e) + 1;
    std::string dice;
    for (const auto& [de, dv] : record.epoch_dice) {
      if (de == epoch) {
        std::snprintf(buf, sizeof buf, "%.17g", dv);
        dice = buf;
        break;
      }
    }
    std::snprintf(buf, sizeof buf, "%d,%.17g,%s,%.3f", epoch,
                  record.epoch_loss[e], dice.c_str(),
                  e < record.epoch_seconds.size() ? record.epoch_seconds[e] : 0.0);
    out << buf << "\n";
  }
  if (!out.flush()) throw std::runtime_error("run record: short write to " + path);
}

void save_network(const EmbeddingNetwork& net, const std::string& path) {
  CheckpointData data;
  data.params = net.named_parameters();
  save_checkpoint(data, path);
}

EmbeddingNetwork load_network(const std::string& path) {
  const CheckpointData data = load_checkpoint(path);
  const embednet::NetworkConfig cfg = EmbeddingNetwork::infer_config(data.params);
  EmbeddingNetwork net(cfg, 0);
  net.load_parameters(data.params);
  return net;
}

RunRecord pretrain(EmbeddingNetwork& net,
                   const std::vector<const io::FramePair*>& pairs,
                   const TrainConfig& cfg, const std::string& checkpoint_out) {
  if (pairs.empty()) throw std::invalid_argument("pretrain: empty dataset");
  for (const io::FramePair* p : pairs) {
    if (!p->flow_fwd.has_value())
      throw std::runtime_error("pretrain: pair '" + p->id +
                               "' has no forward flow");
  }

  Adam adam(net.parameters(), AdamConfig{.learning_rate = cfg.learning_rate});
  RunRecord record;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<int> order =
        shuffled_indices(pairs.size(), derive_seed(cfg.master_seed, SeedStream::Shuffle,
                                                   static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    int loss_count = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t stop =
          std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<Tensor> losses;
      for (size_t b = start; b < stop; ++b) {
        const io::FramePair& pair = *pairs[order[b]];
        const FlowField& flow = *pair.flow_fwd;
        const auto anchors = flowloss::sample_anchors(
            flow, cfg.kernel,
            derive_seed(cfg.master_seed, SeedStream::Anchors,
                        epoch_index(epoch, order[b])));
        if (anchors.empty()) continue;  // zero-flow image: nothing to learn
        std::vector<flowloss::NeighborhoodSample> samples;
        samples.reserve(anchors.size());
        for (PixelCoord a : anchors) {
          samples.push_back(flowloss::build_neighborhood(
              a, flow.width, flow.height, cfg.kernel.neighborhood_radius));
        }
        const Tensor emb = net.forward(pair.frame1);
        Tensor loss = flowloss::consistency_loss(samples, flow, emb, cfg.kernel);
        loss_sum += loss.item();
        ++loss_count;
        losses.push_back(std::move(loss));
      }
      if (losses.empty()) continue;  // zero-flow batch: no parameter update
      const Tensor batch_loss = mean_of(std::move(losses));
      batch_loss.backward();
      adam.step();
      adam.zero_grad();
    }
    record.epoch_loss.push_back(loss_count > 0 ? loss_sum / loss_count : 0.0);
    record.epoch_seconds.push_back(seconds_since(t0));
  }

  if (!checkpoint_out.empty()) {
    save_network(net, checkpoint_out);
    record.checkpoint_path = checkpoint_out;
  }
  return record;
}

RunRecord finetune(const std::optional<std::string>& init_checkpoint,
                   const std::vector<const io::FramePair*>& train_pool,
                   const std::vector<const io::FramePair*>& test_set,
                   const TrainConfig& cfg, const std::string& checkpoint_out) {
  const int k = cfg.labeled_count;
  if (k < 1) throw std::invalid_argument("finetune: labeled_count must be at least 1");
  if (static_cast<size_t>(k) > train_pool.size())
    throw std::invalid_argument("finetune: not enough pairs for labeled_count");

  // Label choice, head init and augmentation all derive from the master seed
  // only, so the scratch and pretrained arms see identical streams.
  std::vector<int> pick =
      shuffled_indices(train_pool.size(), derive_seed(cfg.master_seed, SeedStream::LabelPick));
  pick.resize(k);
  std::vector<const io::FramePair*> labeled;
  for (int idx : pick) {
    const io::FramePair* pair = train_pool[idx];
    if (!pair->mask.has_value())
      throw std::invalid_argument("finetune: labeled pair '" + pair->id +
                                  "' has no mask");
    labeled.push_back(pair);
  }

  EmbeddingNetwork net = [&] {
    if (!init_checkpoint.has_value())
      return EmbeddingNetwork(cfg.net, derive_seed(cfg.master_seed, SeedStream::NetInit));
    const CheckpointData data = load_checkpoint(*init_checkpoint);
    const embednet::NetworkConfig found = EmbeddingNetwork::infer_config(data.params);
    if (!(found == cfg.net)) {
      throw std::runtime_error(
          "finetune: checkpoint configuration mismatch (checkpoint embedding_dim " +
          std::to_string(found.embedding_dim) + ", levels " +
          std::to_string(found.levels) + ", base " +
          std::to_string(found.base_channels) + " vs configured " +
          std::to_string(cfg.net.embedding_dim) + "/" +
          std::to_string(cfg.net.levels) + "/" +
          std::to_string(cfg.net.base_channels) + ")");
    }
    EmbeddingNetwork loaded(cfg.net, 0);
    loaded.load_parameters(data.params);
    return loaded;
  }();

  SegmentationHead head = SegmentationHead::create(
      cfg.net.embedding_dim, derive_seed(cfg.master_seed, SeedStream::HeadInit));

  std::vector<Tensor> trainable = {head.weight, head.bias};
  if (!cfg.freeze_backbone) {
    for (Tensor& t : net.parameters()) trainable.push_back(t);
  }
  Adam adam(std::move(trainable), AdamConfig{.learning_rate = cfg.learning_rate});

  RunRecord record;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<int> order = shuffled_indices(
        labeled.size(),
        derive_seed(cfg.master_seed, SeedStream::Shuffle, static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    int loss_count = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      const size_t stop =
          std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<Tensor> losses;
      for (size_t b = start; b < stop; ++b) {
        const io::FramePair& pair = *labeled[order[b]];
        Rng aug_rng(derive_seed(cfg.master_seed, SeedStream::Augment,
                                epoch_index(epoch, order[b])));
        const embednet::AugmentDraw draw = embednet::sample_augment(cfg.aug, aug_rng);
        record.augment_log.push_back(draw);
        auto [img, msk] = embednet::apply_augment(pair.frame1, *pair.mask, draw);
        const Tensor emb = net.forward(img);
        const Tensor pred = embednet::segment_forward(head, emb);
        Tensor loss = embednet::bce_loss(pred, msk);
        loss_sum += loss.item();
        ++loss_count;
        losses.push_back(std::move(loss));
      }
      if (losses.empty()) continue;
      const Tensor batch_loss = mean_of(std::move(losses));
      batch_loss.backward();
      adam.step();
      adam.zero_grad();
      if (cfg.freeze_backbone) {
        for (Tensor& t : net.parameters()) t.zero_grad();
      }
    }
    record.epoch_loss.push_back(loss_count > 0 ? loss_sum / loss_count : 0.0);
    record.epoch_seconds.push_back(seconds_since(t0));

    if (!test_set.empty() &&
        (epoch % cfg.eval_every == 0 || epoch == cfg.epochs)) {
      record.epoch_dice.emplace_back(epoch, evaluate(net, head, test_set).mean_dice);
    }
  }
  if (cfg.epochs == 0 && !test_set.empty()) {
    record.epoch_dice.emplace_back(0, evaluate(net, head, test_set).mean_dice);
  }

  for (const auto& [e, d] : record.epoch_dice) {
    record.best_dice = std::max(record.best_dice, d);
    record.final_dice = d;
  }

  if (!checkpoint_out.empty()) {
    CheckpointData data;
    data.params = net.named_parameters();
    data.params.emplace_back("head.weight", head.weight);
    data.params.emplace_back("head.bias", head.bias);
    save_checkpoint(data, checkpoint_out);
    record.checkpoint_path = checkpoint_out;
  }
  return record;
}

EvalResult evaluate(const EmbeddingNetwork& net, const SegmentationHead& head,
                    const std::vector<const io::FramePair*>& test_set) {
  if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
  autograd::NoGradGuard no_grad;
  EvalResult result;
  for (const io::FramePair* pair : test_set) {
    if (!pair->mask.has_value())
      throw std::invalid_argument("evaluate: pair '" + pair->id + "' has no mask");
    const Tensor emb = net.forward(pair->frame1);
    const Tensor pred = embednet::segment_forward(head, emb);
    const double dice =
        evalviz::dice_score(probability_image(pred), *pair->mask, 0.5);
    result.per_image.emplace_back(pair->id, dice);
    result.mean_dice += dice;
  }
  result.mean_dice /= static_cast<double>(test_set.size());
  return result;
}

EvalResult evaluate_checkpoint(const std::string& checkpoint_path,
                               const std::vector<const io::FramePair*>& test_set) {
  const CheckpointData data = load_checkpoint(checkpoint_path);
  const embednet::NetworkConfig cfg = EmbeddingNetwork::infer_config(data.params);
  EmbeddingNetwork net(cfg, 0);
  net.load_parameters(data.params);

  SegmentationHead head;
  for (const auto& [name, t] : data.params) {
    if (name == "head.weight") head.weight = t;
    if (name == "head.bias") head.bias = t;
  }
  if (!head.weight.defined() || !head.bias.defined())
    throw std::runtime_error(
        "evaluate: checkpoint has no segmentation head (finetune first): " +
        checkpoint_path);
  return evaluate(net, head, test_set);
}

}  // namespace flowseed::trainer
