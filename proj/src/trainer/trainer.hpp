#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "embednet/embednet.hpp"
#include "flowloss/flowloss.hpp"
#include "io/dataset.hpp"
#include "io/run_config.hpp"

namespace flowseed::trainer {

enum class Phase { Pretrain, Finetune, Scratch };

struct TrainConfig {
  Phase phase = Phase::Pretrain;
  int epochs = 50;
  double learning_rate = 0.001;
  int batch_size = 2;
  int labeled_count = 1;
  std::uint64_t master_seed = 1;
  int eval_every = 10;       // finetune: test-dice cadence (final epoch always)
  bool freeze_backbone = false;
  flowloss::KernelConfig kernel;
  embednet::NetworkConfig net;
  embednet::AugmentationConfig aug;
};

TrainConfig from_run_config(const io::RunConfig& rc, Phase phase);

struct RunRecord {
  std::vector<double> epoch_loss;               // mean loss, epochs from 1
  std::vector<double> epoch_seconds;
  std::vector<std::pair<int, double>> epoch_dice;  // (epoch, test dice)
  std::vector<embednet::AugmentDraw> augment_log;  // finetune fairness trace
  std::string checkpoint_path;
  double best_dice = -1.0;
  double final_dice = -1.0;
};

void write_run_csv(const RunRecord& record, const std::string& path);

// Self-supervised phase: per epoch and image, sample anchors by flow
// magnitude, build neighborhoods, take one consistency-loss step. Every pair
// must carry forward flow. Batches whose images all lack anchors (zero flow)
// never update parameters.
RunRecord pretrain(embednet::EmbeddingNetwork& net,
                   const std::vector<const io::FramePair*>& pairs,
                   const TrainConfig& cfg, const std::string& checkpoint_out);

// Supervised phase on K labeled pairs drawn from train_pool. Backbone starts
// from init_checkpoint when given, fresh otherwise (scratch arm); the head is
// always fresh. Seeds for label choice, shuffling, head init and augmentation
// derive only from the master seed, so two arms differing in initialization
// see identical data and augmentation streams.
RunRecord finetune(const std::optional<std::string>& init_checkpoint,
                   const std::vector<const io::FramePair*>& train_pool,
                   const std::vector<const io::FramePair*>& test_set,
                   const TrainConfig& cfg, const std::string& checkpoint_out);

struct EvalResult {
  double mean_dice = 0.0;
  std::vector<std::pair<std::string, double>> per_image;
};

EvalResult evaluate(const embednet::EmbeddingNetwork& net,
                    const embednet::SegmentationHead& head,
                    const std::vector<const io::FramePair*>& test_set);

// Loads backbone + head from a finetuned checkpoint and evaluates.
EvalResult evaluate_checkpoint(const std::string& checkpoint_path,
                               const std::vector<const io::FramePair*>& test_set);

// Backbone-only save/load helpers shared by the phases.
void save_network(const embednet::EmbeddingNetwork& net,
                  const std::string& path);
embednet::EmbeddingNetwork load_network(const std::string& path);

}  // namespace flowseed::trainer
