#include "cgpnas/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cgpnas/errors.hpp"
#include "cgpnas/version.hpp"

namespace cgpnas {

namespace {

constexpr int kCifarDim = 32;
constexpr int kCifarChannels = 3;
constexpr int kCifarClasses = 10;
constexpr std::size_t kCifarRecord = 1 + kCifarDim * kCifarDim * kCifarChannels;
constexpr int kPad = 4;

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile(path);
  in.seekg(0, std::ios::end);
  const auto len = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> bytes(len);
  if (len > 0) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(len));
  if (!in) throw CorruptRecord(path + ": short read");
  return bytes;
}

// Decodes count records of (label byte + channel planes) into NHWC floats.
void decode_records(const unsigned char* bytes, std::size_t count, int rows, int cols,
                    int channels, int classes, const std::string& origin, Dataset& out,
                    std::size_t first) {
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  const std::size_t record = 1 + plane * channels;
  for (std::size_t r = 0; r < count; ++r) {
    const unsigned char* rec = bytes + r * record;
    const int label = rec[0];
    if (label >= classes)
      throw CorruptRecord(origin + ": label " + std::to_string(label) + " out of range");
    out.labels[first + r] = label;
    for (int c = 0; c < channels; ++c)
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
          out.images.at(static_cast<int>(first + r), i, j, c) =
              static_cast<float>(rec[1 + c * plane + i * cols + j]) / 255.0f;
  }
}

Dataset gather(const Dataset& ds, const std::size_t* indices, std::size_t count) {
  Dataset out;
  out.images = Tensor4<float>(static_cast<int>(count), ds.images.shape3());
  out.labels.resize(count);
  out.class_count = ds.class_count;
  out.provenance = ds.provenance;
  const std::size_t sample =
      static_cast<std::size_t>(ds.images.rows()) * ds.images.cols() * ds.images.channels();
  for (std::size_t r = 0; r < count; ++r) {
    std::memcpy(out.images.data() + r * sample, ds.images.data() + indices[r] * sample,
                sample * sizeof(float));
    out.labels[r] = ds.labels[indices[r]];
  }
  return out;
}

}  // namespace

Dataset load_cifar_batch(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.empty() || bytes.size() % kCifarRecord != 0)
    throw CorruptRecord(path + ": size " + std::to_string(bytes.size()) +
                        " is not a multiple of " + std::to_string(kCifarRecord));
  const std::size_t count = bytes.size() / kCifarRecord;
  Dataset ds;
  ds.images = Tensor4<float>(static_cast<int>(count), kCifarDim, kCifarDim, kCifarChannels);
  ds.labels.resize(count);
  ds.class_count = kCifarClasses;
  ds.provenance = "cifar10";
  decode_records(bytes.data(), count, kCifarDim, kCifarDim, kCifarChannels, kCifarClasses,
                 path, ds, 0);
  return ds;
}

Cifar10 load_cifar10(const std::string& dir) {
  Cifar10 out;
  std::vector<Dataset> batches;
  std::size_t total = 0;
  for (int b = 1; b <= 5; ++b) {
    batches.push_back(load_cifar_batch(dir + "/data_batch_" + std::to_string(b) + ".bin"));
    total += batches.back().size();
  }
  out.train.images = Tensor4<float>(static_cast<int>(total), kCifarDim, kCifarDim, kCifarChannels);
  out.train.labels.resize(total);
  out.train.class_count = kCifarClasses;
  out.train.provenance = "cifar10";
  const std::size_t sample = static_cast<std::size_t>(kCifarDim) * kCifarDim * kCifarChannels;
  std::size_t at = 0;
  for (const Dataset& b : batches) {
    std::memcpy(out.train.images.data() + at * sample, b.images.data(),
                b.size() * sample * sizeof(float));
    std::copy(b.labels.begin(), b.labels.end(), out.train.labels.begin() + static_cast<long>(at));
    at += b.size();
  }
  out.test = load_cifar_batch(dir + "/test_batch.bin");
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
  const std::size_t want = spec.train_n + spec.val_n;
  if (want > ds.size())
    throw InfeasibleSplit("need " + std::to_string(want) + " samples, have " +
                          std::to_string(ds.size()));
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  RngStream rng(spec.seed);
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t j = i + rng.uniform_index(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  return {gather(ds, idx.data(), spec.train_n), gather(ds, idx.data() + spec.train_n, spec.val_n)};
}

Tensor4<float> mean_subtract(Dataset& train, const std::vector<Dataset*>& others) {
  const TensorShape shape = train.images.shape3();
  for (const Dataset* d : others)
    if (!(d->images.shape3() == shape))
      throw ShapeMismatch("mean_subtract: split shapes differ");
  const std::size_t positions =
      static_cast<std::size_t>(shape.rows) * shape.cols * shape.channels;
  std::vector<double> acc(positions, 0.0);
  const std::size_t count = train.size();
  for (std::size_t b = 0; b < count; ++b) {
    const float* row = train.images.data() + b * positions;
    for (std::size_t p = 0; p < positions; ++p) acc[p] += row[p];
  }
  Tensor4<float> mean(1, shape);
  for (std::size_t p = 0; p < positions; ++p)
    mean.data()[p] = count ? static_cast<float>(acc[p] / static_cast<double>(count)) : 0.0f;
  auto subtract = [&](Dataset& d) {
    for (std::size_t b = 0; b < d.size(); ++b) {
      float* row = d.images.data() + b * positions;
      for (std::size_t p = 0; p < positions; ++p) row[p] -= mean.data()[p];
    }
  };
  subtract(train);
  for (Dataset* d : others) subtract(*d);
  return mean;
}

void augment_sample(const Tensor4<float>& src, std::size_t src_index, int row_off,
                    int col_off, bool flip, Tensor4<float>& dst, std::size_t dst_index) {
  const int rows = src.rows(), cols = src.cols(), channels = src.channels();
  const int b = static_cast<int>(src_index), d = static_cast<int>(dst_index);
  for (int i = 0; i < rows; ++i) {
    const int sr = row_off + i - kPad;
    for (int j = 0; j < cols; ++j) {
      const int sc = col_off + (flip ? cols - 1 - j : j) - kPad;
      const bool in = sr >= 0 && sr < rows && sc >= 0 && sc < cols;
      for (int c = 0; c < channels; ++c)
        dst.at(d, i, j, c) = in ? src.at(b, sr, sc, c) : 0.0f;
    }
  }
}

void augment_sample(const Tensor4<float>& src, std::size_t src_index, RngStream& rng,
                    Tensor4<float>& dst, std::size_t dst_index) {
  const int row_off = static_cast<int>(rng.uniform_index(2 * kPad + 1));
  const int col_off = static_cast<int>(rng.uniform_index(2 * kPad + 1));
  const bool flip = rng.bernoulli(0.5);
  augment_sample(src, src_index, row_off, col_off, flip, dst, dst_index);
}

Difficulty parse_difficulty(const std::string& name) {
  if (name == "easy") return Difficulty::Easy;
  if (name == "medium") return Difficulty::Medium;
  if (name == "hard") return Difficulty::Hard;
  throw ConfigInfeasible("unknown difficulty: " + name);
}

std::string difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Medium: return "medium";
    default: return "hard";
  }
}

Dataset synthetic_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.classes < 1 || spec.samples < 1 || spec.image_size < 1)
    throw ConfigInfeasible("synthetic_dataset: spec fields must be positive");
  const int n = spec.image_size;
  Dataset ds;
  ds.images = Tensor4<float>(spec.samples, n, n, 1);
  ds.labels.resize(static_cast<std::size_t>(spec.samples));
  ds.class_count = spec.classes;
  {
    std::ostringstream tag;
    tag << "synthetic(classes=" << spec.classes << ",samples=" << spec.samples
        << ",size=" << n << ",difficulty=" << difficulty_name(spec.difficulty)
        << ",seed=" << seed << ")";
    ds.provenance = tag.str();
  }

  double amp_lo = 0.8, noise = 0.02, center_jitter = 0.0, angle_jitter = 0.0;
  if (spec.difficulty == Difficulty::Medium) {
    amp_lo = 0.5;
    noise = 0.10;
    center_jitter = 2.0;
  } else if (spec.difficulty == Difficulty::Hard) {
    amp_lo = 0.3;
    noise = 0.25;
    center_jitter = 3.0;
    angle_jitter = 3.14159265358979323846 / 12.0;
  }
  const double width = n / 8.0;
  RngStream rng(seed);
  for (int s = 0; s < spec.samples; ++s) {
    const int label = s % spec.classes;
    ds.labels[static_cast<std::size_t>(s)] = label;
    const double amp = amp_lo + (1.0 - amp_lo) * rng.uniform_real();
    double cy = (n - 1) / 2.0, cx = (n - 1) / 2.0;
    if (center_jitter > 0.0) {
      cy += center_jitter * (2.0 * rng.uniform_real() - 1.0);
      cx += center_jitter * (2.0 * rng.uniform_real() - 1.0);
    }
    double theta = 3.14159265358979323846 * label / spec.classes;
    if (angle_jitter > 0.0) theta += angle_jitter * (2.0 * rng.uniform_real() - 1.0);
    const double dir_x = std::cos(theta), dir_y = std::sin(theta);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double px = j - cx, py = i - cy;
        const double dist = px * dir_y - py * dir_x;
        double v = amp * std::exp(-dist * dist / (2.0 * width * width));
        v += noise * rng.normal();
        ds.images.at(s, i, j, 0) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingFile(path);
  const int rows = ds.images.rows(), cols = ds.images.cols(), channels = ds.images.channels();
  out << kDatasetFormat << "\n"
      << ds.size() << " " << rows << " " << cols << " " << channels << " "
      << ds.class_count << "\n"
      << ds.provenance << "\n";
  const std::size_t plane = static_cast<std::size_t>(rows) * cols;
  std::vector<unsigned char> rec(1 + plane * channels);
  for (std::size_t b = 0; b < ds.size(); ++b) {
    rec[0] = static_cast<unsigned char>(ds.labels[b]);
    for (int c = 0; c < channels; ++c)
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
          const float v = ds.images.at(static_cast<int>(b), i, j, c);
          rec[1 + c * plane + i * cols + j] =
              static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
        }
    out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
  }
  if (!out) throw CorruptRecord(path + ": write failed");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile(path);
  std::string format;
  if (!std::getline(in, format)) throw CorruptRecord(path + ": empty file");
  if (format != kDatasetFormat) {
    const std::string prefix = "cgpnas-dataset/";
    if (format.rfind(prefix, 0) == 0)
      throw VersionMismatch("dataset format " + format + ", expected " + kDatasetFormat);
    throw CorruptRecord(path + ": not a dataset file");
  }
  std::string header;
  if (!std::getline(in, header)) throw CorruptRecord(path + ": missing header");
  std::istringstream hs(header);
  std::size_t count = 0;
  int rows = 0, cols = 0, channels = 0, classes = 0;
  if (!(hs >> count >> rows >> cols >> channels >> classes) || rows < 1 || cols < 1 ||
      channels < 1 || classes < 1)
    throw CorruptRecord(path + ": bad header: " + header);
  Dataset ds;
  if (!std::getline(in, ds.provenance)) throw CorruptRecord(path + ": missing provenance");
  ds.class_count = classes;
  ds.images = Tensor4<float>(static_cast<int>(count), rows, cols, channels);
  ds.labels.resize(count);
  const std::size_t record = 1 + static_cast<std::size_t>(rows) * cols * channels;
  std::vector<unsigned char> bytes(count * record);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size() || in.peek() != EOF)
    throw CorruptRecord(path + ": record bytes do not match header");
  decode_records(bytes.data(), count, rows, cols, channels, classes, path, ds, 0);
  return ds;
}

void fill_batch(const Dataset& ds, const std::vector<std::size_t>& indices,
                Tensor4<float>& images, std::vector<int>& labels) {
  const int b = static_cast<int>(indices.size());
  if (images.batch() != b || !(images.shape3() == ds.images.shape3()))
    images = Tensor4<float>(b, ds.images.shape3());
  labels.resize(indices.size());
  const std::size_t sample =
      static_cast<std::size_t>(ds.images.rows()) * ds.images.cols() * ds.images.channels();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::memcpy(images.data() + r * sample, ds.images.data() + indices[r] * sample,
                sample * sizeof(float));
    labels[r] = ds.labels.at(indices[r]);
  }
}

}  // namespace cgpnas
