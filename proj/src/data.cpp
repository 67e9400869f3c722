#include "nnwm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "nnwm/errors.hpp"
#include "nnwm/rng.hpp"

namespace nnwm {

namespace {

constexpr std::size_t kCifarRecord = 3073;  // 1 label byte + 32*32*3 pixels
constexpr std::size_t kCifarPixels = 3072;
constexpr std::size_t kCifarClasses = 10;

struct CifarRecordRef {
  std::size_t file;
  std::size_t offset;  // byte offset of the record within its file
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() % kCifarRecord != 0) {
    const std::size_t whole = (bytes.size() / kCifarRecord) * kCifarRecord;
    throw DataError(path.string() + ": truncated record at byte offset " + std::to_string(whole) +
                    " (file size " + std::to_string(bytes.size()) + ")");
  }
  return bytes;
}

// Stratified pick: per class, shuffle that class's record list and keep the
// first `per_class`; the result is restored to file order.
std::vector<std::size_t> stratified_pick(const std::vector<int>& labels, std::size_t per_class,
                                         std::size_t classes, Rng& rng, const std::string& what) {
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  std::vector<std::size_t> picked;
  picked.reserve(per_class * classes);
  for (std::size_t c = 0; c < classes; ++c) {
    if (by_class[c].size() < per_class) {
      throw DataError(what + ": class " + std::to_string(c) + " has only " +
                      std::to_string(by_class[c].size()) + " records, need " +
                      std::to_string(per_class));
    }
    rng.shuffle(by_class[c]);
    picked.insert(picked.end(), by_class[c].begin(), by_class[c].begin() + per_class);
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace

Tensor one_hot(const std::vector<int>& labels, std::size_t classes) {
  Tensor t({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw DataError("label " + std::to_string(labels[i]) + " out of range for " +
                      std::to_string(classes) + " classes");
    }
    t[i * classes + labels[i]] = 1.0;
  }
  return t;
}

Dataset make_synthetic(std::size_t classes, const std::vector<std::size_t>& dims, std::size_t n,
                       std::uint64_t seed, double separation, const std::string& split) {
  if (classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (dims.empty()) throw ConfigError("synthetic data needs nonempty dims");
  const std::size_t feat = shape_numel(dims);

  // Class means are a function of `seed` alone so splits share geometry.
  // Image-shaped dims get spatially smooth mean patterns (a 3x3 coarse grid
  // bilinearly upsampled per channel), flat dims get white patterns; either
  // way the mean is normalized to length `separation` around unit noise.
  std::vector<std::vector<double>> means(classes, std::vector<double>(feat));
  Rng mean_rng(seed);
  const bool image_like = dims.size() == 3 && dims[0] >= 2 && dims[1] >= 2;
  for (std::size_t c = 0; c < classes; ++c) {
    if (image_like) {
      const std::size_t h = dims[0], w = dims[1], ch = dims[2];
      constexpr std::size_t kGrid = 3;
      std::vector<double> coarse(kGrid * kGrid * ch);
      for (double& v : coarse) v = mean_rng.normal();
      for (std::size_t y = 0; y < h; ++y) {
        const double fy = static_cast<double>(y) * (kGrid - 1) / static_cast<double>(h - 1);
        const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(fy), kGrid - 2);
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < w; ++x) {
          const double fx = static_cast<double>(x) * (kGrid - 1) / static_cast<double>(w - 1);
          const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(fx), kGrid - 2);
          const double tx = fx - static_cast<double>(x0);
          for (std::size_t k = 0; k < ch; ++k) {
            auto at = [&](std::size_t gy, std::size_t gx) {
              return coarse[(gy * kGrid + gx) * ch + k];
            };
            means[c][(y * w + x) * ch + k] =
                (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
                ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
          }
        }
      }
    } else {
      for (double& v : means[c]) v = mean_rng.normal();
    }
    double norm2 = 0.0;
    for (double v : means[c]) norm2 += v * v;
    const double scale = separation / std::max(std::sqrt(norm2), 1e-12);
    for (double& v : means[c]) v *= scale;
  }

  Rng noise_rng(derive_seed(seed, split == "test" ? 2 : 1));
  Dataset data;
  data.num_classes = classes;
  data.split = split;
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) data.labels[i] = static_cast<int>(i % classes);
  noise_rng.shuffle(data.labels);

  std::vector<std::size_t> shape = {n};
  shape.insert(shape.end(), dims.begin(), dims.end());
  data.inputs = Tensor(shape);
  double* x = data.inputs.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double>& mean = means[data.labels[i]];
    for (std::size_t f = 0; f < feat; ++f) x[i * feat + f] = mean[f] + noise_rng.normal();
  }
  data.targets = one_hot(data.labels, classes);
  return data;
}

std::pair<Dataset, Dataset> make_synthetic_pair(std::size_t classes,
                                                const std::vector<std::size_t>& dims,
                                                std::size_t n_train, std::size_t n_test,
                                                std::uint64_t seed, double separation) {
  return {make_synthetic(classes, dims, n_train, seed, separation, "train"),
          make_synthetic(classes, dims, n_test, seed, separation, "test")};
}

std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir,
                                         std::size_t train_per_class, std::size_t test_per_class,
                                         std::uint64_t seed) {
  const std::vector<std::string> train_files = {"data_batch_1.bin", "data_batch_2.bin",
                                                "data_batch_3.bin", "data_batch_4.bin",
                                                "data_batch_5.bin"};

  auto load_split = [&](const std::vector<std::string>& names, std::size_t per_class,
                        Rng& rng, const std::string& split) {
    std::vector<std::vector<std::uint8_t>> files;
    std::vector<int> labels;
    std::vector<CifarRecordRef> records;
    for (std::size_t f = 0; f < names.size(); ++f) {
      files.push_back(read_file(dir / names[f]));
      const std::vector<std::uint8_t>& bytes = files.back();
      for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
        const int label = bytes[off];
        if (label >= static_cast<int>(kCifarClasses)) {
          throw DataError((dir / names[f]).string() + ": invalid label " + std::to_string(label) +
                          " at byte offset " + std::to_string(off));
        }
        labels.push_back(label);
        records.push_back({f, off});
      }
    }
    const std::vector<std::size_t> picked =
        stratified_pick(labels, per_class, kCifarClasses, rng, split + " split");

    Dataset data;
    data.num_classes = kCifarClasses;
    data.split = split;
    data.inputs = Tensor({picked.size(), 32, 32, 3});
    double* x = data.inputs.data();
    for (std::size_t i = 0; i < picked.size(); ++i) {
      const CifarRecordRef& rec = records[picked[i]];
      const std::uint8_t* px = files[rec.file].data() + rec.offset + 1;
      data.labels.push_back(labels[picked[i]]);
      // Planar RGB in the record -> interleaved (H, W, C), scaled to [0, 1].
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < 1024; ++p) {
          x[(i * 1024 + p) * 3 + c] = static_cast<double>(px[c * 1024 + p]) / 255.0;
        }
      }
    }
    data.targets = one_hot(data.labels, kCifarClasses);
    return data;
  };

  Rng rng(seed);
  Dataset train = load_split(train_files, train_per_class, rng, "train");
  Dataset test = load_split({"test_batch.bin"}, test_per_class, rng, "test");

  // Per-channel mean of the training subset, subtracted from both splits.
  double mean[3] = {0.0, 0.0, 0.0};
  const std::size_t train_px = train.inputs.size() / 3;
  for (std::size_t p = 0; p < train_px; ++p) {
    for (std::size_t c = 0; c < 3; ++c) mean[c] += train.inputs[p * 3 + c];
  }
  for (double& m : mean) m /= static_cast<double>(train_px);
  for (Dataset* split : {&train, &test}) {
    double* x = split->inputs.data();
    for (std::size_t p = 0; p < split->inputs.size() / 3; ++p) {
      for (std::size_t c = 0; c < 3; ++c) x[p * 3 + c] -= mean[c];
    }
  }
  return {std::move(train), std::move(test)};
}

std::pair<Tensor, Tensor> gather_batch(const Dataset& data, const std::vector<std::size_t>& rows) {
  const std::size_t n = data.size();
  const std::size_t feat = data.inputs.size() / n;
  const std::size_t classes = data.num_classes;

  std::vector<std::size_t> shape = data.inputs.shape();
  shape[0] = rows.size();
  Tensor x(shape);
  Tensor t({rows.size(), classes});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw UsageError("batch row out of range");
    std::copy_n(data.inputs.data() + rows[i] * feat, feat, x.data() + i * feat);
    std::copy_n(data.targets.data() + rows[i] * classes, classes, t.data() + i * classes);
  }
  return {std::move(x), std::move(t)};
}

}  // namespace nnwm
