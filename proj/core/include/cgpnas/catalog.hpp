#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgpnas/errors.hpp"

namespace cgpnas {

// Feature-map dimensions (rows, cols, channels). The all-zero value is the
// distinguished Invalid shape; shape algebra propagates it instead of
// throwing so callers can report the offending node themselves.
struct TensorShape {
  int rows = 0;
  int cols = 0;
  int channels = 0;

  static constexpr TensorShape invalid() { return {0, 0, 0}; }
  bool valid() const { return rows >= 1 && cols >= 1 && channels >= 1; }
  std::int64_t elements() const {
    return static_cast<std::int64_t>(rows) * cols * channels;
  }
  bool operator==(const TensorShape&) const = default;
};

std::string to_string(const TensorShape& s);

enum class FunctionKind { ConvBlock, ResBlock, MaxPool, AvgPool, Sum, Concat };

// Which block family populates the catalog: plain convolution blocks or
// residual blocks. Pooling, Sum and Concat are present in both.
enum class FunctionSet { Conv, Res };

FunctionSet parse_function_set(const std::string& id);  // throws UnknownFunctionSet
std::string to_string(FunctionSet set);

struct FunctionSpec {
  FunctionKind kind = FunctionKind::ConvBlock;
  int arity = 1;
  int out_channels = 0;  // ConvBlock / ResBlock only
  int kernel = 0;        // ConvBlock / ResBlock only

  bool operator==(const FunctionSpec&) const = default;
};

// Display form, e.g. "CB(32,3x3)", "RB(64,5x5)", "MP", "Sum".
std::string symbol(const FunctionSpec& f);

// Ordered list of node functions a genotype indexes into. Order is fixed:
// block variants sorted by (out_channels, kernel), then MP, AP, Sum, Concat.
class Catalog {
 public:
  static Catalog build(FunctionSet set,
                       const std::vector<int>& channels = {32, 64, 128},
                       const std::vector<int>& kernels = {3, 5});

  const std::vector<FunctionSpec>& entries() const { return entries_; }
  const FunctionSpec& at(int id) const;
  int size() const { return static_cast<int>(entries_.size()); }
  FunctionSet set() const { return set_; }

 private:
  FunctionSet set_ = FunctionSet::Conv;
  std::vector<FunctionSpec> entries_;
};

// Shape of one function application. Returns Invalid when any output
// dimension collapses to zero or an input is Invalid. Throws ArityMismatch
// when the number of supplied inputs disagrees with f.arity.
TensorShape output_shape(const FunctionSpec& f, const TensorShape& in1,
                         const std::optional<TensorShape>& in2 = std::nullopt);

// Learnable parameters of one node given its first input's shape: kernel
// weights + bias + the per-channel scale/shift of the normalization stage.
// Pooling, Sum and Concat are parameter-free.
std::int64_t param_count(const FunctionSpec& f, const TensorShape& in);

// Pooling geometry that maps extent `from` onto exactly `to` (to <= from):
// stride = floor(from/to), kernel = from - (to-1)*stride. Used wherever two
// feature maps of different sizes must be aligned before Sum or Concat.
struct PoolGeometry {
  int kernel = 1;
  int stride = 1;
};
PoolGeometry alignment_pool(int from, int to);

}  // namespace cgpnas
