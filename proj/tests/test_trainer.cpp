#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "core/rng.hpp"
#include "embednet/embednet.hpp"
#include "trainer/checkpoint.hpp"
#include "trainer/trainer.hpp"

using namespace flowseed;
using autograd::Tensor;

namespace {

namespace fs = std::filesystem;

trainer::TrainConfig tiny_config(trainer::Phase phase) {
  trainer::TrainConfig cfg;
  cfg.phase = phase;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.labeled_count = 1;
  cfg.master_seed = 5;
  cfg.eval_every = 2;
  cfg.net.embedding_dim = 4;
  cfg.net.levels = 3;
  cfg.net.base_channels = 4;
  cfg.kernel.anchors_per_image = 40;
  return cfg;
}

// Little in-memory corpus: moving bright squares on a graded background.
std::vector<io::FramePair> make_pairs(int count, int size, bool with_flow,
                                      std::uint64_t seed) {
  Rng rng(seed);
  std::vector<io::FramePair> pairs;
  for (int i = 0; i < count; ++i) {
    io::FramePair p;
    p.id = "mem_" + std::to_string(i);
    p.frame1 = Image(size, size);
    p.frame2 = Image(size, size);
    Image mask(size, size);
    FlowField flow(size, size);
    const int side = size / 4;
    const int ox = 2 + static_cast<int>(rng.uniform_index(size - side - 4));
    const int oy = 2 + static_cast<int>(rng.uniform_index(size - side - 4));
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        p.frame1.at(x, y) = 0.2 + 0.2 * (static_cast<double>(x) / size);
        const bool fg = x >= ox && x < ox + side && y >= oy && y < oy + side;
        if (fg) {
          p.frame1.at(x, y) = 0.9;
          mask.at(x, y) = 1.0;
          flow.u(x, y) = 3.0;
          flow.v(x, y) = -2.0;
        }
      }
    }
    p.frame2 = p.frame1;
    p.mask = mask;
    if (with_flow) p.flow_fwd = flow;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<const io::FramePair*> views(const std::vector<io::FramePair>& pairs) {
  std::vector<const io::FramePair*> out;
  for (const auto& p : pairs) out.push_back(&p);
  return out;
}

}  // namespace

TEST_CASE("pretrain on zero flow: loss exactly zero, parameters unchanged") {
  auto pairs = make_pairs(3, 16, true, 1);
  for (auto& p : pairs) {
    for (double& v : p.flow_fwd->uv) v = 0.0;
  }
  auto cfg = tiny_config(trainer::Phase::Pretrain);
  embednet::EmbeddingNetwork net(cfg.net, 2);
  const auto before = net.named_parameters()[0].second.values();
  const auto record = trainer::pretrain(net, views(pairs), cfg, "");
  for (double l : record.epoch_loss) CHECK(l == 0.0);
  CHECK(net.named_parameters()[0].second.values() == before);
}

TEST_CASE("pretrain decreases the loss and is deterministic per seed") {
  const auto pairs = make_pairs(4, 16, true, 3);
  auto cfg = tiny_config(trainer::Phase::Pretrain);
  cfg.epochs = 8;

  embednet::EmbeddingNetwork net_a(cfg.net, 7);
  const auto rec_a = trainer::pretrain(net_a, views(pairs), cfg, "");
  CHECK(rec_a.epoch_loss.size() == 8);
  for (double l : rec_a.epoch_loss) CHECK(std::isfinite(l));
  CHECK(rec_a.epoch_loss.back() < rec_a.epoch_loss.front());

  embednet::EmbeddingNetwork net_b(cfg.net, 7);
  const auto rec_b = trainer::pretrain(net_b, views(pairs), cfg, "");
  CHECK(rec_a.epoch_loss == rec_b.epoch_loss);  // bitwise

  // pair without flow is rejected up front
  auto broken = make_pairs(2, 16, false, 4);
  embednet::EmbeddingNetwork net_c(cfg.net, 7);
  CHECK_THROWS_AS(trainer::pretrain(net_c, views(broken), cfg, ""), std::runtime_error);
}

TEST_CASE("finetune: deterministic, fair across arms, improves training loss") {
  namespace fs = std::filesystem;
  const auto pairs = make_pairs(6, 16, true, 5);
  const auto all = views(pairs);
  const std::vector<const io::FramePair*> pool(all.begin(), all.begin() + 4);
  const std::vector<const io::FramePair*> test(all.begin() + 4, all.end());

  auto cfg = tiny_config(trainer::Phase::Scratch);
  cfg.epochs = 4;

  const auto rec1 = trainer::finetune(std::nullopt, pool, test, cfg, "");
  const auto rec2 = trainer::finetune(std::nullopt, pool, test, cfg, "");
  CHECK(rec1.epoch_loss == rec2.epoch_loss);
  REQUIRE(rec1.epoch_dice.size() == rec2.epoch_dice.size());
  for (size_t i = 0; i < rec1.epoch_dice.size(); ++i) {
    CHECK(rec1.epoch_dice[i].second == rec2.epoch_dice[i].second);
  }
  CHECK(rec1.epoch_loss.back() < rec1.epoch_loss.front());
  CHECK(rec1.epoch_dice.back().first == 4);  // final epoch always evaluated

  // pretrained arm sees the identical augmentation stream
  const fs::path ckpt = fs::temp_directory_path() / "flowseed_test_bb.ckpt";
  embednet::EmbeddingNetwork bb(cfg.net, 99);
  trainer::save_network(bb, ckpt.string());
  auto cfg_ft = cfg;
  cfg_ft.phase = trainer::Phase::Finetune;
  const auto rec3 = trainer::finetune(ckpt.string(), pool, test, cfg_ft, "");
  REQUIRE(rec1.augment_log.size() == rec3.augment_log.size());
  for (size_t i = 0; i < rec1.augment_log.size(); ++i) {
    CHECK(rec1.augment_log[i].hflip == rec3.augment_log[i].hflip);
    CHECK(rec1.augment_log[i].rot_rad == rec3.augment_log[i].rot_rad);
    CHECK(rec1.augment_log[i].scale == rec3.augment_log[i].scale);
    CHECK(rec1.augment_log[i].shear_rad == rec3.augment_log[i].shear_rad);
  }
  fs::remove(ckpt);
}

TEST_CASE("finetune with zero epochs equals pretrained init with a fresh head") {
  const auto pairs = make_pairs(5, 16, true, 8);
  const auto all = views(pairs);
  const std::vector<const io::FramePair*> pool(all.begin(), all.begin() + 3);
  const std::vector<const io::FramePair*> test(all.begin() + 3, all.end());

  auto cfg = tiny_config(trainer::Phase::Finetune);
  cfg.epochs = 0;

  const fs::path ckpt = fs::temp_directory_path() / "flowseed_test_zero.ckpt";
  embednet::EmbeddingNetwork bb(cfg.net, 123);
  trainer::save_network(bb, ckpt.string());

  const auto rec = trainer::finetune(ckpt.string(), pool, test, cfg, "");
  REQUIRE(rec.epoch_dice.size() == 1);

  const auto head = embednet::SegmentationHead::create(
      cfg.net.embedding_dim, derive_seed(cfg.master_seed, SeedStream::HeadInit));
  const auto direct = trainer::evaluate(bb, head, test);
  CHECK(rec.epoch_dice[0].second == direct.mean_dice);
  fs::remove(ckpt);
}

TEST_CASE("finetune rejects mismatched checkpoint configuration") {
  const auto pairs = make_pairs(3, 16, true, 9);
  const auto all = views(pairs);
  auto cfg = tiny_config(trainer::Phase::Finetune);

  const fs::path ckpt = fs::temp_directory_path() / "flowseed_test_dim.ckpt";
  embednet::NetworkConfig other = cfg.net;
  other.embedding_dim = 8;  // checkpoint dim differs from configured dim
  embednet::EmbeddingNetwork bb(other, 1);
  trainer::save_network(bb, ckpt.string());
  CHECK_THROWS_AS(trainer::finetune(ckpt.string(), all, {}, cfg, ""), std::runtime_error);
  fs::remove(ckpt);
}

TEST_CASE("evaluate: perfect predictions, all-background, contract checks") {
  const auto pairs = make_pairs(3, 16, true, 10);
  const auto test = views(pairs);
  auto cfg = tiny_config(trainer::Phase::Finetune);

  embednet::EmbeddingNetwork net(cfg.net, 77);
  auto head = embednet::SegmentationHead::create(cfg.net.embedding_dim, 78);

  // model vs its own thresholded predictions: dice 1.0 on every image
  {
    autograd::NoGradGuard no_grad;
    std::vector<io::FramePair> self = pairs;
    for (auto& p : self) {
      const Tensor prob = embednet::segment_forward(head, net.forward(p.frame1));
      Image m(16, 16);
      for (size_t i = 0; i < m.size(); ++i) m.v[i] = prob.values()[i] >= 0.5 ? 1.0 : 0.0;
      p.mask = m;
    }
    CHECK(trainer::evaluate(net, head, views(self)).mean_dice == 1.0);
  }

  // saturated all-background head vs nonempty masks: dice 0
  auto dark = embednet::SegmentationHead::create(cfg.net.embedding_dim, 79);
  dark.weight = Tensor::zeros({1, cfg.net.embedding_dim, 1, 1}, true);
  dark.bias = Tensor::from_values({1}, {-60.0}, true);
  CHECK(trainer::evaluate(net, dark, test).mean_dice == 0.0);

  CHECK_THROWS_AS(trainer::evaluate(net, head, {}), std::invalid_argument);
}

TEST_CASE("checkpoint: bitwise round trip with and without adam state") {
  Rng rng(11);
  trainer::CheckpointData data;
  std::vector<double> v1(24), v2(7);
  for (double& v : v1) v = rng.uniform(-3.0, 3.0);
  for (double& v : v2) v = rng.uniform(-3.0, 3.0);
  data.params.emplace_back("layer.weight", Tensor::from_values({2, 3, 2, 2}, v1));
  data.params.emplace_back("layer.bias", Tensor::from_values({7}, v2));

  const fs::path path = fs::temp_directory_path() / "flowseed_test_ckpt.bin";
  trainer::save_checkpoint(data, path.string());
  const auto loaded = trainer::load_checkpoint(path.string());
  REQUIRE(loaded.params.size() == 2);
  CHECK(loaded.params[0].first == "layer.weight");
  CHECK(loaded.params[0].second.shape() == std::vector<int>{2, 3, 2, 2});
  CHECK(loaded.params[0].second.values() == v1);
  CHECK(loaded.params[1].second.values() == v2);
  CHECK_FALSE(loaded.has_adam);

  data.has_adam = true;
  data.adam_step = 17;
  data.learning_rate = 1e-3;
  data.beta1 = 0.9;
  data.beta2 = 0.999;
  data.eps = 1e-8;
  data.adam_m = {std::vector<double>(24, 0.5), std::vector<double>(7, -0.25)};
  data.adam_v = {std::vector<double>(24, 0.125), std::vector<double>(7, 2.0)};
  trainer::save_checkpoint(data, path.string());
  const auto loaded2 = trainer::load_checkpoint(path.string());
  CHECK(loaded2.has_adam);
  CHECK(loaded2.adam_step == 17);
  CHECK(loaded2.adam_m == data.adam_m);
  CHECK(loaded2.adam_v == data.adam_v);
  fs::remove(path);
}

TEST_CASE("checkpoint: magic and truncation rejected cleanly") {
  const fs::path path = fs::temp_directory_path() / "flowseed_test_bad.bin";
  {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    std::fwrite("NOTMAGIC", 1, 8, f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(trainer::load_checkpoint(path.string()),
                       doctest::Contains("bad magic"), std::runtime_error);

  trainer::CheckpointData data;
  data.params.emplace_back("w", Tensor::full({4}, 1.5));
  trainer::save_checkpoint(data, path.string());
  // chop the file mid-payload
  {
    std::FILE* f = std::fopen(path.string().c_str(), "rb+");
    std::fseek(f, 0, SEEK_END);
    const long len = std::ftell(f);
    std::fclose(f);
    fs::resize_file(path, static_cast<std::uintmax_t>(len - 10));
  }
  CHECK_THROWS_WITH_AS(trainer::load_checkpoint(path.string()),
                       doctest::Contains("truncated"), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("run config maps into train config per phase") {
  io::RunConfig rc;
  rc.pretrain_epochs = 12;
  rc.finetune_epochs = 34;
  rc.learning_rate = 0.01;
  rc.anchors_per_image = 99;
  rc.embedding_dim = 24;
  const auto pre = trainer::from_run_config(rc, trainer::Phase::Pretrain);
  CHECK(pre.epochs == 12);
  CHECK(pre.kernel.anchors_per_image == 99);
  CHECK(pre.net.embedding_dim == 24);
  CHECK(pre.learning_rate == 0.01);
  const auto fin = trainer::from_run_config(rc, trainer::Phase::Finetune);
  CHECK(fin.epochs == 34);
}
