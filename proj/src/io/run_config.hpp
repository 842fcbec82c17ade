#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

namespace flowseed::io {

// Flat key=value run configuration ('#' starts a comment). Every field has a
// default; unknown keys are rejected at parse time.
struct RunConfig {
  // flow kernel
  double sigma = 0.5;
  double eps_flow = 1.0;
  double cos_floor = 1e-4;
  int neighborhood_radius = 2;
  int anchors_per_image = 250;
  // network
  int embedding_dim = 16;
  int levels = 3;
  int base_channels = 16;
  // training
  int pretrain_epochs = 50;
  int finetune_epochs = 200;
  double learning_rate = 0.001;
  int batch_size = 2;
  int labeled_count = 1;
  std::uint64_t master_seed = 1;
  int eval_every = 10;
  bool freeze_backbone = false;
  double test_fraction = 0.1;
  // augmentation
  double hflip_prob = 0.5;
  double rotation_deg = 20.0;
  double scale_min = 0.8;
  double scale_max = 1.2;
  double shear_deg = 20.0;
  // visualization / occlusion
  double occlusion_tol = 0.5;
  int shift_dx = 5;
  int shift_dy = 5;
  // paths (flags override)
  std::string data_dir;
  std::string out_dir;
};

RunConfig parse_run_config(const std::string& path);

// Echoes every key of the fully resolved configuration, defaults included.
void log_config(const RunConfig& cfg, std::ostream& os);

}  // namespace flowseed::io
