#pragma once

#include <cstddef>
#include <cstdint>

#include "normkd/trainer.hpp"

namespace normkd::harness {

struct BlobSpec {
  std::size_t classes = 10;
  std::size_t dim = 16;
  std::size_t per_class = 200;
  double margin = 3.0;  // minimum pairwise distance between class centers
  std::uint64_t seed = 0;
};

struct DataSplits {
  Dataset train;
  Dataset val;
};

/// Isotropic unit-variance Gaussian blobs. Centers are drawn uniformly from a
/// cube and rejected until every pair is at least `margin` apart. Each class
/// contributes floor(0.8 n) samples to train and the rest to val; both files
/// are shuffled. ConfigError on impossible geometry or bad sizes.
DataSplits generate_blobs(const BlobSpec& spec);

}  // namespace normkd::harness
