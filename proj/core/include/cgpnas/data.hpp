#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cgpnas/rng.hpp"
#include "cgpnas/tensor.hpp"

namespace cgpnas {

// Images are NHWC floats in [0,1] until mean subtraction shifts them.
struct Dataset {
  Tensor4<float> images;
  std::vector<int> labels;
  int class_count = 0;
  std::string provenance;

  std::size_t size() const { return labels.size(); }
};

struct Cifar10 {
  Dataset train;  // data_batch_1..5, 50000 samples
  Dataset test;   // test_batch, 10000 samples
};

// Reads one raw batch file of 3073-byte records: a label byte followed by
// three 1024-byte channel planes, row-major inside each plane.
Dataset load_cifar_batch(const std::string& path);

// Standard binary batch files under dir.
Cifar10 load_cifar10(const std::string& dir);

struct SplitSpec {
  std::size_t train_n = 0;
  std::size_t val_n = 0;
  std::uint64_t seed = 0;

  bool operator==(const SplitSpec&) const = default;
};

inline SplitSpec default_split(std::uint64_t seed) { return {45000, 5000, seed}; }
inline SplitSpec small_split(std::uint64_t seed) { return {4500, 500, seed}; }

// Seeded sampling without replacement; the two subsets are disjoint.
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

// Mean over the train images at each (row, col, channel) position, shape
// (1, M, N, C). Subtracted in place from train and from every extra set, so
// nothing outside the training subset leaks into the statistics.
Tensor4<float> mean_subtract(Dataset& train, const std::vector<Dataset*>& others = {});

// Zero-pad 4 per side, crop back to M x N at the given offset inside the
// padded canvas, then optionally mirror columns. (4, 4) without flip is the
// identity; offsets range over [0, 8].
void augment_sample(const Tensor4<float>& src, std::size_t src_index, int row_off,
                    int col_off, bool flip, Tensor4<float>& dst, std::size_t dst_index);

// Draws row and column offsets uniformly from [0, 8] and flips with
// probability 1/2.
void augment_sample(const Tensor4<float>& src, std::size_t src_index, RngStream& rng,
                    Tensor4<float>& dst, std::size_t dst_index);

enum class Difficulty { Easy, Medium, Hard };

Difficulty parse_difficulty(const std::string& name);
std::string difficulty_name(Difficulty d);

struct SyntheticSpec {
  int classes = 2;
  int samples = 2000;
  int image_size = 16;
  Difficulty difficulty = Difficulty::Easy;

  bool operator==(const SyntheticSpec&) const = default;
};

// Single-channel oriented-bar images, one orientation per class, plus noise.
// Easy keeps the bar template fixed per class with faint noise, so the
// classes stay linearly separable; medium and hard add jitter and stronger
// noise. Labels interleave round-robin, so classes are balanced.
Dataset synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed);

// Versioned container around the same record layout as the batch files
// (label byte + channel-plane image bytes). Pixels quantize to 8 bits, so
// this is for raw datasets, not mean-subtracted ones.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Gathers the given sample indices into a contiguous minibatch.
void fill_batch(const Dataset& ds, const std::vector<std::size_t>& indices,
                Tensor4<float>& images, std::vector<int>& labels);

}  // namespace cgpnas
