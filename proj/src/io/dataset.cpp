#include "io/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "io/flo_io.hpp"
#include "io/netpbm.hpp"

namespace flowseed::io {

namespace fs = std::filesystem;

std::vector<FramePair> load_dataset(const std::string& root) {
  const fs::path manifest_path = fs::path(root) / "manifest.txt";
  std::ifstream manifest(manifest_path);
  if (!manifest)
    throw std::runtime_error("dataset: could not open " + manifest_path.string());

  std::vector<FramePair> pairs;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    FramePair pair;
    const auto space = line.find(' ');
    pair.id = line.substr(0, space);
    if (space != std::string::npos) {
      const std::string rest = line.substr(space + 1);
      const auto eq = rest.find("seed=");
      if (eq != std::string::npos) pair.seed = std::stoull(rest.substr(eq + 5));
    }
    const fs::path dir = fs::path(root) / pair.id;
    if (!fs::is_directory(dir))
      throw std::runtime_error("dataset: manifest entry '" + pair.id +
                               "' does not resolve to a directory under " + root);
    pair.frame1 = pgm_read((dir / "frame1.pgm").string());
    pair.frame2 = pgm_read((dir / "frame2.pgm").string());
    if (fs::exists(dir / "flow_fwd.flo"))
      pair.flow_fwd = flo_read((dir / "flow_fwd.flo").string());
    if (fs::exists(dir / "flow_bwd.flo"))
      pair.flow_bwd = flo_read((dir / "flow_bwd.flo").string());
    if (fs::exists(dir / "mask.pgm")) pair.mask = pgm_read((dir / "mask.pgm").string());
    if (fs::exists(dir / "occlusion.pgm"))
      pair.occlusion = pgm_read((dir / "occlusion.pgm").string());
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

void require_flow(const std::vector<FramePair>& pairs) {
  for (const FramePair& p : pairs) {
    if (!p.flow_fwd.has_value())
      throw std::runtime_error("dataset: pair '" + p.id +
                               "' has no forward flow; pretraining needs one per pair");
  }
}

DatasetSplit split_dataset(const std::vector<FramePair>& pairs,
                           double test_fraction) {
  if (test_fraction < 0.0 || test_fraction >= 1.0)
    throw std::invalid_argument("split_dataset: test_fraction must be in [0, 1)");
  const size_t n = pairs.size();
  const size_t n_test = static_cast<size_t>(std::llround(n * test_fraction));
  DatasetSplit split;
  for (size_t i = 0; i < n; ++i) {
    (i < n - n_test ? split.train : split.test).push_back(&pairs[i]);
  }
  return split;
}

}  // namespace flowseed::io
