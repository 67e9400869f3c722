#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "nnwm/tensor.hpp"

namespace nnwm {

// Inputs plus labels. `targets` holds N x C distributions (one-hot for
// labeled data, teacher probabilities for distillation batches).
struct Dataset {
  Tensor inputs;            // (N, H, W, C) or (N, F)
  std::vector<int> labels;  // class indices, size N
  Tensor targets;           // (N, C)
  std::size_t num_classes = 0;
  std::string split;        // "train" | "test"

  std::size_t size() const { return inputs.size() == 0 ? 0 : inputs.dim(0); }
};

// Gaussian class blobs with unit noise; class means are `separation` times a
// random unit direction drawn from Rng(seed) (spatially smooth for
// image-shaped dims), so train/test splits built from the same seed share
// means while their noise streams differ by split tag.
Dataset make_synthetic(std::size_t classes, const std::vector<std::size_t>& dims, std::size_t n,
                       std::uint64_t seed, double separation = 5.0,
                       const std::string& split = "train");

std::pair<Dataset, Dataset> make_synthetic_pair(std::size_t classes,
                                                const std::vector<std::size_t>& dims,
                                                std::size_t n_train, std::size_t n_test,
                                                std::uint64_t seed, double separation = 5.0);

// Reads the standard CIFAR-10 binary batches (3073-byte records: label byte
// followed by 1024 R + 1024 G + 1024 B bytes) from data_batch_{1..5}.bin and
// test_batch.bin. Produces a deterministic stratified subsample with
// `train_per_class` / `test_per_class` records per class; pixels are scaled
// to [0, 1] and the training subset's per-channel mean is subtracted from
// both splits. Truncated or missing files raise DataError with the offset.
std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir,
                                         std::size_t train_per_class, std::size_t test_per_class,
                                         std::uint64_t seed);

// One-hot targets for a label vector.
Tensor one_hot(const std::vector<int>& labels, std::size_t classes);

// Copies the given sample rows into a contiguous batch.
std::pair<Tensor, Tensor> gather_batch(const Dataset& data, const std::vector<std::size_t>& rows);

}  // namespace nnwm
