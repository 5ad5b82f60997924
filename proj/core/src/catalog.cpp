#include "cgpnas/catalog.hpp"

#include <algorithm>
#include <sstream>

namespace cgpnas {

std::string to_string(const TensorShape& s) {
  std::ostringstream os;
  os << s.rows << "x" << s.cols << "x" << s.channels;
  return os.str();
}

FunctionSet parse_function_set(const std::string& id) {
  if (id == "conv") return FunctionSet::Conv;
  if (id == "res") return FunctionSet::Res;
  throw UnknownFunctionSet("unknown function set '" + id + "' (expected conv or res)");
}

std::string to_string(FunctionSet set) {
  return set == FunctionSet::Conv ? "conv" : "res";
}

std::string symbol(const FunctionSpec& f) {
  std::ostringstream os;
  switch (f.kind) {
    case FunctionKind::ConvBlock:
    case FunctionKind::ResBlock:
      os << (f.kind == FunctionKind::ConvBlock ? "CB" : "RB") << "(" << f.out_channels
         << "," << f.kernel << "x" << f.kernel << ")";
      return os.str();
    case FunctionKind::MaxPool: return "MP";
    case FunctionKind::AvgPool: return "AP";
    case FunctionKind::Sum: return "Sum";
    case FunctionKind::Concat: return "Concat";
  }
  return "?";
}

Catalog Catalog::build(FunctionSet set, const std::vector<int>& channels,
                       const std::vector<int>& kernels) {
  if (channels.empty() || kernels.empty())
    throw std::invalid_argument("catalog needs at least one channel and kernel variant");
  Catalog cat;
  cat.set_ = set;
  const FunctionKind block =
      set == FunctionSet::Conv ? FunctionKind::ConvBlock : FunctionKind::ResBlock;

  std::vector<int> cs = channels;
  std::vector<int> ks = kernels;
  std::sort(cs.begin(), cs.end());
  std::sort(ks.begin(), ks.end());
  for (int c : cs)
    for (int k : ks) cat.entries_.push_back({block, 1, c, k});

  cat.entries_.push_back({FunctionKind::MaxPool, 1, 0, 0});
  cat.entries_.push_back({FunctionKind::AvgPool, 1, 0, 0});
  cat.entries_.push_back({FunctionKind::Sum, 2, 0, 0});
  cat.entries_.push_back({FunctionKind::Concat, 2, 0, 0});
  return cat;
}

const FunctionSpec& Catalog::at(int id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("catalog id " + std::to_string(id) + " out of range");
  return entries_[static_cast<std::size_t>(id)];
}

PoolGeometry alignment_pool(int from, int to) {
  if (to > from || to < 1)
    throw std::invalid_argument("alignment_pool: cannot map " + std::to_string(from) +
                                " onto " + std::to_string(to));
  PoolGeometry g;
  g.stride = from / to;
  g.kernel = from - (to - 1) * g.stride;
  return g;
}

TensorShape output_shape(const FunctionSpec& f, const TensorShape& in1,
                         const std::optional<TensorShape>& in2) {
  const bool has_second = in2.has_value();
  if ((f.arity == 1 && has_second) || (f.arity == 2 && !has_second))
    throw ArityMismatch(symbol(f) + " takes " + std::to_string(f.arity) + " input(s)");
  if (!in1.valid()) return TensorShape::invalid();
  if (has_second && !in2->valid()) return TensorShape::invalid();

  switch (f.kind) {
    case FunctionKind::ConvBlock:
    case FunctionKind::ResBlock:
      // Stride-1, zero-padded convolution: spatial size is preserved.
      return {in1.rows, in1.cols, f.out_channels};
    case FunctionKind::MaxPool:
    case FunctionKind::AvgPool: {
      // 2x2 window, stride 2; a 1-pixel extent collapses to zero.
      TensorShape out{in1.rows / 2, in1.cols / 2, in1.channels};
      return out.valid() ? out : TensorShape::invalid();
    }
    case FunctionKind::Sum: {
      // The larger feature map is pooled down to the smaller per axis;
      // the thinner input is zero-padded in channels.
      return {std::min(in1.rows, in2->rows), std::min(in1.cols, in2->cols),
              std::max(in1.channels, in2->channels)};
    }
    case FunctionKind::Concat: {
      return {std::min(in1.rows, in2->rows), std::min(in1.cols, in2->cols),
              in1.channels + in2->channels};
    }
  }
  return TensorShape::invalid();
}

std::int64_t param_count(const FunctionSpec& f, const TensorShape& in) {
  switch (f.kind) {
    case FunctionKind::ConvBlock:
    case FunctionKind::ResBlock: {
      const std::int64_t k = f.kernel;
      const std::int64_t c_in = in.channels;
      const std::int64_t c_out = f.out_channels;
      // kernel + bias + normalization scale/shift
      return k * k * c_in * c_out + c_out + 2 * c_out;
    }
    default:
      return 0;
  }
}

}  // namespace cgpnas
