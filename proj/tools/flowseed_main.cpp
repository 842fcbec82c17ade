// flowseed: synthetic flow data, flow-supervised embedding pretraining,
// few-shot finetuning, evaluation and figure-style visualization.

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "core/rng.hpp"
#include "embednet/embednet.hpp"
#include "evalviz/evalviz.hpp"
#include "io/dataset.hpp"
#include "io/flo_io.hpp"
#include "io/netpbm.hpp"
#include "io/run_config.hpp"
#include "simd/vec_ops.hpp"
#include "synthgen/synthgen.hpp"
#include "trainer/checkpoint.hpp"
#include "trainer/trainer.hpp"

namespace fs = std::filesystem;
using namespace flowseed;

namespace {

io::RunConfig load_config(const std::string& path) {
  io::RunConfig cfg;
  if (!path.empty()) cfg = io::parse_run_config(path);
  io::log_config(cfg, std::cerr);
  std::cerr << "simd kernels: " << simd::level_name(simd::active_level()) << "\n";
  return cfg;
}

std::vector<const io::FramePair*> view_all(const std::vector<io::FramePair>& pairs) {
  std::vector<const io::FramePair*> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(&p);
  return out;
}

Image pad_to_multiple(const Image& img, int divisor, int& orig_w, int& orig_h) {
  orig_w = img.width;
  orig_h = img.height;
  const int w = (img.width + divisor - 1) / divisor * divisor;
  const int h = (img.height + divisor - 1) / divisor * divisor;
  if (w == img.width && h == img.height) return img;
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out.at(x, y) = img.at(std::min(x, img.width - 1), std::min(y, img.height - 1));
    }
  }
  return out;
}

EmbeddingField crop_field(const EmbeddingField& field, int w, int h) {
  if (field.width == w && field.height == h) return field;
  EmbeddingField out(w, h, field.dim);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* src = field.at(x, y);
      std::copy_n(src, field.dim, out.at(x, y));
    }
  }
  return out;
}

int run_synth(int count, const std::string& out_dir, std::uint64_t seed,
              int width, int height) {
  const auto specs = synthgen::shapes_corpus(count, width, height, seed);
  synthgen::generate_dataset(specs, out_dir);
  std::cout << out_dir << "\n";
  return 0;
}

int run_pretrain(const std::string& data_dir, const std::string& config_path,
                 const std::string& ckpt_out, const std::string& log_path) {
  io::RunConfig rc = load_config(config_path);
  const std::string dir = data_dir.empty() ? rc.data_dir : data_dir;
  if (dir.empty()) throw std::runtime_error("pretrain: no data directory given");

  const auto pairs = io::load_dataset(dir);
  const auto split = io::split_dataset(pairs, rc.test_fraction);
  const auto cfg = trainer::from_run_config(rc, trainer::Phase::Pretrain);

  embednet::EmbeddingNetwork net(
      cfg.net, derive_seed(cfg.master_seed, SeedStream::NetInit));
  const auto record = trainer::pretrain(net, split.train, cfg, ckpt_out);
  trainer::write_run_csv(record, log_path.empty() ? ckpt_out + ".csv" : log_path);
  std::cerr << "pretrain: " << record.epoch_loss.size() << " epochs, final loss "
            << record.epoch_loss.back() << "\n";
  std::cout << ckpt_out << "\n";
  return 0;
}

int run_finetune(const std::string& data_dir, const std::string& config_path,
                 const std::string& init, int labels, const std::string& ckpt_out,
                 const std::string& log_path) {
  io::RunConfig rc = load_config(config_path);
  const std::string dir = data_dir.empty() ? rc.data_dir : data_dir;
  if (dir.empty()) throw std::runtime_error("finetune: no data directory given");
  if (labels > 0) rc.labeled_count = labels;

  const auto pairs = io::load_dataset(dir);
  const auto split = io::split_dataset(pairs, rc.test_fraction);

  const bool scratch = init.empty() || init == "scratch";
  const auto cfg = trainer::from_run_config(
      rc, scratch ? trainer::Phase::Scratch : trainer::Phase::Finetune);
  const std::optional<std::string> ckpt_in =
      scratch ? std::nullopt : std::optional<std::string>(init);

  const auto record =
      trainer::finetune(ckpt_in, split.train, split.test, cfg, ckpt_out);
  trainer::write_run_csv(record, log_path.empty() ? ckpt_out + ".csv" : log_path);
  std::cerr << "finetune(" << (scratch ? "scratch" : "pretrained")
            << "): best dice " << record.best_dice << ", final dice "
            << record.final_dice << "\n";
  std::cout << ckpt_out << "\n";
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data_dir,
             const std::string& split_name, const std::string& csv_path,
             const std::string& config_path) {
  io::RunConfig rc = load_config(config_path);
  const auto pairs = io::load_dataset(data_dir);
  const auto split = io::split_dataset(pairs, rc.test_fraction);
  std::vector<const io::FramePair*> chosen;
  if (split_name == "test") {
    chosen = split.test;
  } else if (split_name == "train") {
    chosen = split.train;
  } else if (split_name == "all") {
    chosen = view_all(pairs);
  } else {
    throw std::runtime_error("eval: unknown split '" + split_name + "'");
  }

  const auto result = trainer::evaluate_checkpoint(ckpt, chosen);

  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("eval: could not open " + csv_path);
  csv << "image,dice\n";
  char buf[64];
  for (const auto& [id, dice] : result.per_image) {
    std::snprintf(buf, sizeof buf, "%.17g", dice);
    csv << id << "," << buf << "\n";
  }
  std::snprintf(buf, sizeof buf, "%.17g", result.mean_dice);
  csv << "mean," << buf << "\n";
  if (!csv.flush()) throw std::runtime_error("eval: short write to " + csv_path);

  std::printf("%.17g\n", result.mean_dice);
  return 0;
}

int run_viz(const std::string& ckpt, const std::string& image_path,
            const std::string& flow_path, const std::string& image2_path,
            const std::string& flow_bwd_path, const std::string& out_dir,
            const std::string& anchor_arg, const std::string& config_path) {
  io::RunConfig rc = load_config(config_path);
  fs::create_directories(out_dir);

  const trainer::CheckpointData data = trainer::load_checkpoint(ckpt);
  const auto net_cfg = embednet::EmbeddingNetwork::infer_config(data.params);
  embednet::EmbeddingNetwork net(net_cfg, 0);
  net.load_parameters(data.params);

  const Image image = io::pgm_read(image_path);
  int orig_w = 0, orig_h = 0;
  const Image padded = pad_to_multiple(image, net.spatial_divisor(), orig_w, orig_h);
  const EmbeddingField emb = crop_field(net.embed(padded), orig_w, orig_h);

  PixelCoord anchor{orig_w / 2, orig_h / 2};
  if (!anchor_arg.empty()) {
    if (std::sscanf(anchor_arg.c_str(), "%d,%d", &anchor.x, &anchor.y) != 2)
      throw std::runtime_error("viz: --anchor expects X,Y");
  }

  flowloss::KernelConfig kernel;
  kernel.sigma = rc.sigma;
  kernel.eps_flow = rc.eps_flow;
  kernel.cos_floor = rc.cos_floor;

  const std::uint64_t proj_seed = derive_seed(rc.master_seed, SeedStream::Projection);
  const auto basis = evalviz::ProjectionBasis::create(emb.dim, proj_seed);

  std::vector<std::string> artifacts;
  auto emit_pgm = [&](const Image& img, const std::string& name) {
    io::pgm_write(img, (fs::path(out_dir) / name).string());
    artifacts.push_back(name);
  };
  auto emit_ppm = [&](const RgbImage& img, const std::string& name) {
    io::ppm_write(img, (fs::path(out_dir) / name).string());
    artifacts.push_back(name);
  };

  emit_ppm(evalviz::random_projection(emb, basis), "projection.ppm");
  emit_pgm(evalviz::similarity_to_image(
               evalviz::anchor_similarity_map(emb, anchor, kernel), true),
           "anchor_sim_embedding.pgm");
  emit_pgm(evalviz::similarity_to_image(
               evalviz::shifted_similarity_map(emb, rc.shift_dx, rc.shift_dy, kernel), true),
           "shifted_sim_embedding.pgm");

  if (!flow_path.empty()) {
    const FlowField flow = io::flo_read(flow_path);
    if (flow.width != orig_w || flow.height != orig_h)
      throw std::runtime_error("viz: flow extents do not match the image");
    emit_pgm(evalviz::similarity_to_image(
                 evalviz::anchor_similarity_map(flow, anchor, kernel), false),
             "anchor_sim_flow.pgm");
    emit_pgm(evalviz::similarity_to_image(
                 evalviz::shifted_similarity_map(flow, rc.shift_dx, rc.shift_dy, kernel), false),
             "shifted_sim_flow.pgm");
    emit_ppm(evalviz::flow_color_encode(flow), "flow_color.ppm");

    if (!image2_path.empty() && !flow_bwd_path.empty()) {
      const Image frame2 = io::pgm_read(image2_path);
      const FlowField backward = io::flo_read(flow_bwd_path);
      const auto warp = evalviz::warp_and_occlude(frame2, flow, backward, rc.occlusion_tol);
      emit_pgm(warp.warped, "warped.pgm");
      emit_pgm(warp.occlusion, "occlusion.pgm");
    }
  }

  std::ofstream manifest(fs::path(out_dir) / "viz_manifest.txt");
  manifest << "checkpoint " << ckpt << "\n";
  manifest << "image " << image_path << "\n";
  manifest << "anchor " << anchor.x << "," << anchor.y << "\n";
  manifest << "shift " << rc.shift_dx << "," << rc.shift_dy << "\n";
  manifest << "projection_seed " << proj_seed << "\n";
  manifest << "sigma " << rc.sigma << " eps_flow " << rc.eps_flow << "\n";
  for (const auto& a : artifacts) manifest << "artifact " << a << "\n";
  manifest.flush();

  std::cout << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowseed: flow-supervised pixel embeddings for few-shot segmentation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic motion dataset");
  int count = 0, width = 64, height = 64;
  std::uint64_t seed = 1;
  std::string out_dir;
  synth->add_option("--count", count, "number of pairs")->required();
  synth->add_option("--out", out_dir, "output dataset directory")->required();
  synth->add_option("--seed", seed, "master seed");
  synth->add_option("--width", width, "frame width");
  synth->add_option("--height", height, "frame height");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "flow-supervised embedding pretraining");
  std::string pre_data, pre_cfg, pre_out, pre_log;
  pre->add_option("--data", pre_data, "dataset directory")->required();
  pre->add_option("--config", pre_cfg, "run configuration file");
  pre->add_option("--out", pre_out, "output checkpoint")->required();
  pre->add_option("--log", pre_log, "run record CSV (default <out>.csv)");

  // finetune
  auto* fin = app.add_subcommand("finetune", "supervised few-shot finetuning");
  std::string fin_data, fin_cfg, fin_init = "scratch", fin_out, fin_log;
  int fin_labels = 0;
  fin->add_option("--data", fin_data, "dataset directory")->required();
  fin->add_option("--config", fin_cfg, "run configuration file");
  fin->add_option("--labels", fin_labels, "number of labeled pairs K");
  fin->add_option("--init", fin_init, "init checkpoint path or 'scratch'");
  fin->add_option("--out", fin_out, "output checkpoint")->required();
  fin->add_option("--log", fin_log, "run record CSV (default <out>.csv)");

  // eval
  auto* ev = app.add_subcommand("eval", "mean dice of a finetuned checkpoint");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_csv = "eval_dice.csv", ev_cfg;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--split", ev_split, "test|train|all");
  ev->add_option("--csv", ev_csv, "per-image dice CSV");
  ev->add_option("--config", ev_cfg, "run configuration file");

  // viz
  auto* vz = app.add_subcommand("viz", "embedding / flow similarity panels");
  std::string vz_ckpt, vz_image, vz_flow, vz_image2, vz_flow_bwd, vz_out, vz_anchor, vz_cfg;
  vz->add_option("--ckpt", vz_ckpt, "checkpoint")->required();
  vz->add_option("--image", vz_image, "grayscale PGM frame")->required();
  vz->add_option("--flow", vz_flow, "forward .flo field");
  vz->add_option("--image2", vz_image2, "second frame (for warping)");
  vz->add_option("--flow-bwd", vz_flow_bwd, "backward .flo field (for warping)");
  vz->add_option("--out", vz_out, "output directory")->required();
  vz->add_option("--anchor", vz_anchor, "anchor pixel X,Y (default center)");
  vz->add_option("--config", vz_cfg, "run configuration file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(synth))
      return run_synth(count, out_dir, seed, width, height);
    if (app.got_subcommand(pre))
      return run_pretrain(pre_data, pre_cfg, pre_out, pre_log);
    if (app.got_subcommand(fin))
      return run_finetune(fin_data, fin_cfg, fin_init, fin_labels, fin_out, fin_log);
    if (app.got_subcommand(ev))
      return run_eval(ev_ckpt, ev_data, ev_split, ev_csv, ev_cfg);
    if (app.got_subcommand(vz))
      return run_viz(vz_ckpt, vz_image, vz_flow, vz_image2, vz_flow_bwd, vz_out,
                     vz_anchor, vz_cfg);
  } catch (const std::exception& e) {
    std::cerr << "flowseed: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
