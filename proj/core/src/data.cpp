#include "clab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "clab/rng.hpp"

namespace clab {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTestFraction = 1.0 / 6.0;

// Seed tags keeping the independent random streams apart.
constexpr std::uint64_t kTagSynthetic = 0x53594eu;
constexpr std::uint64_t kTagAngles = 0x414e47u;
constexpr std::uint64_t kTagAugPair = 0x415550u;
constexpr std::uint64_t kTagAugSingle = 0x415553u;
constexpr std::uint64_t kTagLabelNoise = 0x4c4e53u;
constexpr std::uint64_t kTagCorrupt = 0x434f52u;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

void clamp_image(Tensor& img) {
  for (double& v : img.data) v = clamp01(v);
}

double pixel_clamped(const Tensor& img, long i, long j) {
  const long h = long(img.rows()), w = long(img.cols());
  i = std::min(h - 1, std::max(0L, i));
  j = std::min(w - 1, std::max(0L, j));
  return img.at(std::size_t(i), std::size_t(j));
}

double bilinear_clamped(const Tensor& img, double y, double x) {
  const long i0 = long(std::floor(y)), j0 = long(std::floor(x));
  const double dy = y - double(i0), dx = x - double(j0);
  const double v00 = pixel_clamped(img, i0, j0);
  const double v01 = pixel_clamped(img, i0, j0 + 1);
  const double v10 = pixel_clamped(img, i0 + 1, j0);
  const double v11 = pixel_clamped(img, i0 + 1, j0 + 1);
  const double top = v00 + dx * (v01 - v00);
  const double bot = v10 + dx * (v11 - v10);
  return top + dy * (bot - top);
}

std::uint32_t read_u32_be(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error(std::string("idx: truncated ") + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>((v >> 24) & 0xff),
      static_cast<unsigned char>((v >> 16) & 0xff),
      static_cast<unsigned char>((v >> 8) & 0xff),
      static_cast<unsigned char>(v & 0xff),
  };
  out.write(reinterpret_cast<const char*>(b), 4);
}

// Per-class index lists in dataset order, split into head (train) and a
// held-out tail (test).
struct ClassSplit {
  std::vector<std::vector<std::size_t>> train;
  std::vector<std::vector<std::size_t>> test;
};

ClassSplit split_by_class(const Dataset& ds) {
  ClassSplit split;
  split.train.resize(ds.num_classes);
  split.test.resize(ds.num_classes);
  std::vector<std::vector<std::size_t>> per_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    per_class[ds.samples[i].label].push_back(i);
  }
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    const std::size_t n = per_class[c].size();
    const std::size_t n_test = std::size_t(std::ceil(double(n) * kTestFraction));
    const std::size_t n_train = n - n_test;
    split.train[c].assign(per_class[c].begin(), per_class[c].begin() + long(n_train));
    split.test[c].assign(per_class[c].begin() + long(n_train), per_class[c].end());
  }
  return split;
}

Tensor one_view(const Tensor& img, Rng& rng, bool allow_flip) {
  const std::size_t h = img.rows(), w = img.cols();
  const double area = rng.uniform(0.6, 1.0);
  const double side = std::sqrt(area);
  const std::size_t ch =
      std::min(h, std::max<std::size_t>(1, std::size_t(std::lround(side * double(h)))));
  const std::size_t cw =
      std::min(w, std::max<std::size_t>(1, std::size_t(std::lround(side * double(w)))));
  const std::size_t top = rng.uniform_index(h - ch + 1);
  const std::size_t left = rng.uniform_index(w - cw + 1);

  Tensor out = Tensor::zeros({h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double y = double(top) + (double(i) + 0.5) * double(ch) / double(h) - 0.5;
      const double x = double(left) + (double(j) + 0.5) * double(cw) / double(w) - 0.5;
      out.at(i, j) = bilinear_clamped(img, y, x);
    }
  }
  if (allow_flip && rng.bernoulli(0.5)) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w / 2; ++j) std::swap(out.at(i, j), out.at(i, w - 1 - j));
    }
  }
  const double brightness = rng.uniform(-0.4, 0.4);
  const double contrast = 1.0 + rng.uniform(-0.4, 0.4);
  double mean = 0.0;
  for (double v : out.data) mean += v;
  mean /= double(out.numel());
  for (double& v : out.data) v = clamp01(mean + contrast * (v - mean) + brightness);
  return out;
}

std::size_t poisson_draw(Rng& rng, double lambda) {
  const double floor_p = std::exp(-lambda);
  std::size_t k = 0;
  double p = 1.0;
  do {
    ++k;
    p *= rng.uniform();
  } while (p > floor_p);
  return k - 1;
}

Tensor separable_gaussian_blur(const Tensor& img, double sigma) {
  const long radius = std::max(1L, long(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(std::size_t(2 * radius + 1));
  double total = 0.0;
  for (long t = -radius; t <= radius; ++t) {
    kernel[std::size_t(t + radius)] = std::exp(-double(t * t) / (2.0 * sigma * sigma));
    total += kernel[std::size_t(t + radius)];
  }
  for (double& kv : kernel) kv /= total;

  const std::size_t h = img.rows(), w = img.cols();
  Tensor tmp = Tensor::zeros({h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (long t = -radius; t <= radius; ++t) {
        acc += kernel[std::size_t(t + radius)] * pixel_clamped(img, long(i), long(j) + t);
      }
      tmp.at(i, j) = acc;
    }
  }
  Tensor out = Tensor::zeros({h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (long t = -radius; t <= radius; ++t) {
        acc += kernel[std::size_t(t + radius)] * pixel_clamped(tmp, long(i) + t, long(j));
      }
      out.at(i, j) = acc;
    }
  }
  return out;
}

}  // namespace

std::size_t Dataset::image_rows() const {
  return samples.empty() ? 0 : samples.front().image.rows();
}

std::size_t Dataset::image_cols() const {
  return samples.empty() ? 0 : samples.front().image.cols();
}

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kClassIl: return "class_il";
    case Scenario::kDomainIl: return "domain_il";
    case Scenario::kGeneralIl: return "general_il";
  }
  throw std::logic_error("scenario_name: unknown scenario");
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream fi(images_path, std::ios::binary);
  if (!fi) throw std::runtime_error("idx: cannot open " + images_path);
  if (read_u32_be(fi, "image header") != 0x00000803u) {
    throw std::runtime_error("idx: bad image magic in " + images_path);
  }
  const std::uint32_t count = read_u32_be(fi, "image header");
  const std::uint32_t rows = read_u32_be(fi, "image header");
  const std::uint32_t cols = read_u32_be(fi, "image header");
  std::vector<unsigned char> pixels(std::size_t(count) * rows * cols);
  fi.read(reinterpret_cast<char*>(pixels.data()), long(pixels.size()));
  if (!fi) throw std::runtime_error("idx: truncated image data in " + images_path);

  std::ifstream fl(labels_path, std::ios::binary);
  if (!fl) throw std::runtime_error("idx: cannot open " + labels_path);
  if (read_u32_be(fl, "label header") != 0x00000801u) {
    throw std::runtime_error("idx: bad label magic in " + labels_path);
  }
  const std::uint32_t label_count = read_u32_be(fl, "label header");
  if (label_count != count) {
    throw std::runtime_error("idx: image/label count mismatch (" + std::to_string(count) +
                             " vs " + std::to_string(label_count) + ")");
  }
  std::vector<unsigned char> labels(label_count);
  fl.read(reinterpret_cast<char*>(labels.data()), long(labels.size()));
  if (!fl) throw std::runtime_error("idx: truncated label data in " + labels_path);

  Dataset ds;
  ds.samples.reserve(count);
  std::size_t max_label = 0;
  for (std::size_t n = 0; n < count; ++n) {
    Sample s;
    s.image = Tensor::zeros({rows, cols});
    for (std::size_t p = 0; p < std::size_t(rows) * cols; ++p) {
      s.image.data[p] = double(pixels[n * rows * cols + p]) / 255.0;
    }
    s.label = labels[n];
    s.source_index = n;
    max_label = std::max(max_label, s.label);
    ds.samples.push_back(std::move(s));
  }
  ds.num_classes = ds.samples.empty() ? 0 : max_label + 1;
  return ds;
}

void write_idx(const std::string& images_path, const std::string& labels_path,
               const Dataset& dataset) {
  std::ofstream fi(images_path, std::ios::binary);
  if (!fi) throw std::runtime_error("idx: cannot open " + images_path + " for writing");
  const std::uint32_t rows = std::uint32_t(dataset.image_rows());
  const std::uint32_t cols = std::uint32_t(dataset.image_cols());
  write_u32_be(fi, 0x00000803u);
  write_u32_be(fi, std::uint32_t(dataset.size()));
  write_u32_be(fi, rows);
  write_u32_be(fi, cols);
  for (const Sample& s : dataset.samples) {
    for (double v : s.image.data) {
      const long byte = std::lround(clamp01(v) * 255.0);
      const unsigned char b = static_cast<unsigned char>(byte);
      fi.write(reinterpret_cast<const char*>(&b), 1);
    }
  }
  if (!fi) throw std::runtime_error("idx: write failed for " + images_path);

  std::ofstream fl(labels_path, std::ios::binary);
  if (!fl) throw std::runtime_error("idx: cannot open " + labels_path + " for writing");
  write_u32_be(fl, 0x00000801u);
  write_u32_be(fl, std::uint32_t(dataset.size()));
  for (const Sample& s : dataset.samples) {
    const unsigned char b = static_cast<unsigned char>(s.label);
    fl.write(reinterpret_cast<const char*>(&b), 1);
  }
  if (!fl) throw std::runtime_error("idx: write failed for " + labels_path);
}

Dataset synthetic_digits(std::size_t num_classes, std::size_t per_class,
                         std::size_t image_size, std::uint64_t seed) {
  if (num_classes == 0 || num_classes > 10) {
    throw std::invalid_argument("synthetic_digits: num_classes must be 1..10");
  }
  if (image_size < 4) throw std::invalid_argument("synthetic_digits: image_size too small");

  Dataset ds;
  ds.num_classes = num_classes;
  ds.samples.reserve(num_classes * per_class);
  std::size_t index = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    // Class identity: blob center on a scrambled grid, orientation, grating.
    const double cx = 0.30 + 0.40 * double((c * 7) % 10) / 9.0;
    const double cy = 0.30 + 0.40 * double((c * 3) % 10) / 9.0;
    const double theta = kPi * double(c) / double(num_classes);
    const double freq = 2.0 + double(c % 5);
    const double phase = 2.0 * kPi * double((c * 5) % 10) / 10.0;
    for (std::size_t k = 0; k < per_class; ++k, ++index) {
      Rng rng(mix_seed(seed, kTagSynthetic, index));
      const double jx = cx + rng.uniform(-0.04, 0.04);
      const double jy = cy + rng.uniform(-0.04, 0.04);
      const double jth = theta + rng.uniform(-0.08, 0.08);
      const double amp = 1.0 + rng.uniform(-0.1, 0.1);

      Sample s;
      s.image = Tensor::zeros({image_size, image_size});
      for (std::size_t i = 0; i < image_size; ++i) {
        for (std::size_t j = 0; j < image_size; ++j) {
          const double u = (double(j) + 0.5) / double(image_size);
          const double v = (double(i) + 0.5) / double(image_size);
          const double du = u - jx, dv = v - jy;
          const double a = std::cos(jth) * du + std::sin(jth) * dv;
          const double b = -std::sin(jth) * du + std::cos(jth) * dv;
          const double blob =
              std::exp(-(a * a / (2.0 * 0.10 * 0.10) + b * b / (2.0 * 0.035 * 0.035)));
          const double grating = 0.5 + 0.5 * std::sin(2.0 * kPi * freq * a + phase);
          const double value =
              amp * (0.55 * blob + 0.30 * blob * grating) + 0.06 + 0.04 * rng.normal();
          s.image.at(i, j) = clamp01(value);
        }
      }
      s.label = c;
      s.source_index = index;
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

ScenarioStream build_class_il(const Dataset& dataset, std::size_t classes_per_task) {
  if (classes_per_task == 0 || dataset.num_classes % classes_per_task != 0) {
    throw std::invalid_argument("class_il: class count " +
                                std::to_string(dataset.num_classes) +
                                " is not divisible by " + std::to_string(classes_per_task));
  }
  const ClassSplit split = split_by_class(dataset);
  ScenarioStream stream;
  stream.scenario = Scenario::kClassIl;
  stream.num_classes = dataset.num_classes;
  const std::size_t n_tasks = dataset.num_classes / classes_per_task;
  for (std::size_t t = 0; t < n_tasks; ++t) {
    TaskSpec task;
    task.task_id = t;
    for (std::size_t c = t * classes_per_task; c < (t + 1) * classes_per_task; ++c) {
      task.classes.push_back(c);
      task.train_indices.insert(task.train_indices.end(), split.train[c].begin(),
                                split.train[c].end());
      task.test_indices.insert(task.test_indices.end(), split.test[c].begin(),
                               split.test[c].end());
    }
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

ScenarioStream build_rotated_domain_il(const Dataset& dataset, std::size_t n_tasks,
                                       std::uint64_t seed) {
  if (n_tasks == 0) throw std::invalid_argument("domain_il: n_tasks must be >= 1");
  const ClassSplit split = split_by_class(dataset);
  std::vector<std::size_t> all_train, all_test;
  for (std::size_t c = 0; c < dataset.num_classes; ++c) {
    all_train.insert(all_train.end(), split.train[c].begin(), split.train[c].end());
    all_test.insert(all_test.end(), split.test[c].begin(), split.test[c].end());
  }

  ScenarioStream stream;
  stream.scenario = Scenario::kDomainIl;
  stream.num_classes = dataset.num_classes;
  stream.seed = seed;
  Rng rng(mix_seed(seed, kTagAngles));
  for (std::size_t t = 0; t < n_tasks; ++t) {
    TaskSpec task;
    task.task_id = t;
    for (std::size_t c = 0; c < dataset.num_classes; ++c) task.classes.push_back(c);
    task.rotated = true;
    task.angle = rng.uniform(0.0, kPi);
    task.train_indices = all_train;
    task.test_indices = all_test;
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

ScenarioStream build_general_il(const Dataset& dataset, std::size_t rounds) {
  if (dataset.num_classes != 10) {
    throw std::invalid_argument("general_il: needs a 10-class dataset");
  }
  if (rounds == 0) throw std::invalid_argument("general_il: rounds must be >= 1");
  const ClassSplit split = split_by_class(dataset);

  // Each class's train indices split into one contiguous shard per round.
  auto shard = [&](std::size_t c, std::size_t r) {
    const std::vector<std::size_t>& list = split.train[c];
    const std::size_t n = list.size();
    const std::size_t lo = r * n / rounds, hi = (r + 1) * n / rounds;
    return std::vector<std::size_t>(list.begin() + long(lo), list.begin() + long(hi));
  };

  ScenarioStream stream;
  stream.scenario = Scenario::kGeneralIl;
  stream.num_classes = dataset.num_classes;
  const std::size_t pairs = 9;
  const std::size_t total = pairs * rounds;
  for (std::size_t t = 0; t < total; ++t) {
    const std::size_t r = t / pairs, p = t % pairs;
    TaskSpec task;
    task.task_id = t;
    task.classes = {p, p + 1};
    task.rotated = true;
    // One full revolution across the stream, so a digit pair reappearing a
    // round later sits 60 degrees further around.
    task.angle = 2.0 * kPi * double(t) / double(total);
    for (std::size_t c : task.classes) {
      const std::vector<std::size_t> part = shard(c, r);
      task.train_indices.insert(task.train_indices.end(), part.begin(), part.end());
      task.test_indices.insert(task.test_indices.end(), split.test[c].begin(),
                               split.test[c].end());
    }
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

std::pair<Tensor, Tensor> augment_pair(const Tensor& image, std::uint64_t seed,
                                       bool allow_flip) {
  Rng rng(mix_seed(seed, kTagAugPair));
  Tensor a = one_view(image, rng, allow_flip);
  Tensor b = one_view(image, rng, allow_flip);
  return {std::move(a), std::move(b)};
}

Tensor augment_single(const Tensor& image, std::uint64_t seed, bool allow_flip) {
  Rng rng(mix_seed(seed, kTagAugSingle));
  return one_view(image, rng, allow_flip);
}

std::pair<Tensor, std::size_t> rotate90(const Tensor& image, std::size_t k) {
  if (image.rank() != 2 || image.rows() != image.cols()) {
    throw std::invalid_argument("rotate90: image must be square, got " +
                                shape_str(image.shape));
  }
  if (k > 3) throw std::invalid_argument("rotate90: k must be 0..3");
  const std::size_t n = image.rows();
  Tensor out = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      switch (k) {
        case 0: out.at(i, j) = image.at(i, j); break;
        case 1: out.at(i, j) = image.at(j, n - 1 - i); break;
        case 2: out.at(i, j) = image.at(n - 1 - i, n - 1 - j); break;
        case 3: out.at(i, j) = image.at(n - 1 - j, i); break;
      }
    }
  }
  return {std::move(out), k};
}

Tensor rotate_image(const Tensor& image, double angle) {
  if (image.rank() != 2) {
    throw std::invalid_argument("rotate_image: image must be rank-2, got " +
                                shape_str(image.shape));
  }
  const std::size_t h = image.rows(), w = image.cols();
  const double cy = (double(h) - 1.0) / 2.0, cx = (double(w) - 1.0) / 2.0;
  const double c = std::cos(angle), s = std::sin(angle);
  Tensor out = Tensor::zeros({h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double dy = double(i) - cy, dx = double(j) - cx;
      const double sy = cy + c * dy + s * dx;
      const double sx = cx - s * dy + c * dx;
      if (sy < -0.5 || sy > double(h) - 0.5 || sx < -0.5 || sx > double(w) - 0.5) {
        continue;  // outside the frame stays 0
      }
      out.at(i, j) = bilinear_clamped(image, sy, sx);
    }
  }
  return out;
}

Dataset inject_label_noise(const Dataset& dataset, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) {
    throw std::invalid_argument("label_noise: rate must lie in [0,1]");
  }
  Dataset out = dataset;
  for (std::size_t i = 0; i < out.size(); ++i) {
    Rng rng(mix_seed(seed, kTagLabelNoise, i));
    if (rng.uniform() < rate) {
      out.samples[i].label = rng.uniform_index(out.num_classes);
    }
  }
  return out;
}

const std::vector<CorruptionKind>& all_corruption_kinds() {
  static const std::vector<CorruptionKind> kinds = {
      CorruptionKind::kGaussianNoise, CorruptionKind::kShotNoise,
      CorruptionKind::kImpulseNoise,  CorruptionKind::kGaussianBlur,
      CorruptionKind::kContrast,      CorruptionKind::kBrightness,
      CorruptionKind::kPixelate,      CorruptionKind::kOcclusion,
  };
  return kinds;
}

std::string corruption_name(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::kGaussianNoise: return "gaussian_noise";
    case CorruptionKind::kShotNoise: return "shot_noise";
    case CorruptionKind::kImpulseNoise: return "impulse_noise";
    case CorruptionKind::kGaussianBlur: return "gaussian_blur";
    case CorruptionKind::kContrast: return "contrast";
    case CorruptionKind::kBrightness: return "brightness";
    case CorruptionKind::kPixelate: return "pixelate";
    case CorruptionKind::kOcclusion: return "occlusion";
  }
  throw std::logic_error("corruption_name: unknown kind");
}

CorruptionKind corruption_from_name(const std::string& name) {
  for (CorruptionKind kind : all_corruption_kinds()) {
    if (corruption_name(kind) == name) return kind;
  }
  throw std::invalid_argument("corrupt: unknown kind '" + name + "'");
}

Tensor corrupt(const Tensor& image, CorruptionKind kind, int severity,
               std::uint64_t seed) {
  if (severity < 1 || severity > 5) {
    throw std::invalid_argument("corrupt: severity must be 1..5, got " +
                                std::to_string(severity));
  }
  const std::size_t s = std::size_t(severity - 1);
  const std::size_t h = image.rows(), w = image.cols();
  Rng rng(mix_seed(seed, kTagCorrupt, std::uint64_t(kind)));
  Tensor out = image;

  switch (kind) {
    case CorruptionKind::kGaussianNoise: {
      static constexpr double kSigma[5] = {0.04, 0.08, 0.12, 0.18, 0.26};
      for (double& v : out.data) v += kSigma[s] * rng.normal();
      break;
    }
    case CorruptionKind::kShotNoise: {
      static constexpr double kLambda[5] = {60.0, 25.0, 12.0, 5.0, 3.0};
      for (double& v : out.data) {
        v = double(poisson_draw(rng, clamp01(v) * kLambda[s])) / kLambda[s];
      }
      break;
    }
    case CorruptionKind::kImpulseNoise: {
      static constexpr double kFraction[5] = {0.03, 0.06, 0.09, 0.17, 0.27};
      // Both draws happen for every pixel so higher severities flip a
      // superset of the lower-severity pixels under the same seed.
      for (double& v : out.data) {
        const double flip = rng.uniform();
        const double salt = rng.uniform();
        if (flip < kFraction[s]) v = salt < 0.5 ? 0.0 : 1.0;
      }
      break;
    }
    case CorruptionKind::kGaussianBlur: {
      static constexpr double kSigmaB[5] = {0.5, 0.75, 1.0, 1.4, 2.0};
      out = separable_gaussian_blur(image, kSigmaB[s]);
      break;
    }
    case CorruptionKind::kContrast: {
      static constexpr double kFactor[5] = {0.75, 0.6, 0.45, 0.3, 0.2};
      double mean = 0.0;
      for (double v : image.data) mean += v;
      mean /= double(image.numel());
      for (double& v : out.data) v = mean + kFactor[s] * (v - mean);
      break;
    }
    case CorruptionKind::kBrightness: {
      static constexpr double kShift[5] = {0.08, 0.16, 0.24, 0.32, 0.4};
      for (double& v : out.data) v += kShift[s];
      break;
    }
    case CorruptionKind::kPixelate: {
      static constexpr std::size_t kBlock[5] = {2, 3, 4, 5, 8};
      const std::size_t b = kBlock[s];
      for (std::size_t bi = 0; bi < h; bi += b) {
        for (std::size_t bj = 0; bj < w; bj += b) {
          const std::size_t ei = std::min(h, bi + b), ej = std::min(w, bj + b);
          double acc = 0.0;
          for (std::size_t i = bi; i < ei; ++i) {
            for (std::size_t j = bj; j < ej; ++j) acc += image.at(i, j);
          }
          acc /= double((ei - bi) * (ej - bj));
          for (std::size_t i = bi; i < ei; ++i) {
            for (std::size_t j = bj; j < ej; ++j) out.at(i, j) = acc;
          }
        }
      }
      break;
    }
    case CorruptionKind::kOcclusion: {
      static constexpr double kSide[5] = {0.15, 0.25, 0.35, 0.45, 0.55};
      // Center drawn before the severity is applied: the five squares nest.
      const double ucy = rng.uniform(), ucx = rng.uniform();
      const long side = std::max(1L, std::lround(kSide[s] * double(std::min(h, w))));
      const long ci = std::lround(ucy * double(h - 1)), cj = std::lround(ucx * double(w - 1));
      for (long i = ci - side / 2; i < ci - side / 2 + side; ++i) {
        for (long j = cj - side / 2; j < cj - side / 2 + side; ++j) {
          if (i >= 0 && j >= 0 && i < long(h) && j < long(w)) {
            out.at(std::size_t(i), std::size_t(j)) = 0.0;
          }
        }
      }
      break;
    }
  }
  clamp_image(out);
  return out;
}

Tensor task_image(const Dataset& dataset, const TaskSpec& task, std::size_t sample_index) {
  if (sample_index >= dataset.size()) {
    throw std::invalid_argument("task_image: sample index out of range");
  }
  const Tensor& img = dataset.samples[sample_index].image;
  if (!task.rotated || task.angle == 0.0) return img;
  return rotate_image(img, task.angle);
}

}  // namespace clab
