#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/flow_field.hpp"
#include "core/image.hpp"

namespace flowseed::io {

// One dataset entry. frame1/frame2 are required on disk; flow and masks are
// loaded when present.
struct FramePair {
  std::string id;
  std::uint64_t seed = 0;
  Image frame1;
  Image frame2;
  std::optional<FlowField> flow_fwd;
  std::optional<FlowField> flow_bwd;
  std::optional<Image> mask;
  std::optional<Image> occlusion;
};

// Layout: root/manifest.txt with one "id seed=N" line per pair; each id is a
// subdirectory holding frame1.pgm, frame2.pgm and optionally flow_fwd.flo,
// flow_bwd.flo, mask.pgm, occlusion.pgm. Every manifest entry must resolve.
std::vector<FramePair> load_dataset(const std::string& root);

// Rejects pairs without forward flow (pretraining precondition).
void require_flow(const std::vector<FramePair>& pairs);

struct DatasetSplit {
  std::vector<const FramePair*> train;
  std::vector<const FramePair*> test;
};

// Deterministic split by manifest order: the last round(n * test_fraction)
// pairs are the test set.
DatasetSplit split_dataset(const std::vector<FramePair>& pairs,
                           double test_fraction);

}  // namespace flowseed::io
