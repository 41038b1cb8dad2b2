#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "clab/tensor.hpp"

namespace clab {

struct Sample {
  Tensor image;  // [H, W], pixels in [0,1]
  std::size_t label = 0;
  std::size_t source_index = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t num_classes = 0;

  std::size_t size() const { return samples.size(); }
  std::size_t image_rows() const;
  std::size_t image_cols() const;
};

enum class Scenario { kClassIl, kDomainIl, kGeneralIl };

std::string scenario_name(Scenario s);

struct TaskSpec {
  std::size_t task_id = 0;
  std::vector<std::size_t> classes;  // ascending
  bool rotated = false;
  double angle = 0.0;  // radians, applied to train and test alike
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

struct ScenarioStream {
  Scenario scenario = Scenario::kClassIl;
  std::vector<TaskSpec> tasks;
  std::uint64_t seed = 0;
  std::size_t num_classes = 0;
};

// IDX container IO (big-endian, magics 0x00000803 / 0x00000801).
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void write_idx(const std::string& images_path, const std::string& labels_path,
               const Dataset& dataset);

// Class-conditional synthetic digits: oriented Gaussian blob plus a per-class
// grating, with per-sample jitter and additive noise. Linearly separable.
Dataset synthetic_digits(std::size_t num_classes, std::size_t per_class,
                         std::size_t image_size, std::uint64_t seed);

// Scenario builders. A fixed per-class tail of the dataset (one sixth) is held
// out as the test split; train/test index sets are disjoint by construction.
ScenarioStream build_class_il(const Dataset& dataset, std::size_t classes_per_task);
ScenarioStream build_rotated_domain_il(const Dataset& dataset, std::size_t n_tasks,
                                       std::uint64_t seed);
ScenarioStream build_general_il(const Dataset& dataset, std::size_t rounds = 6);

// Stochastic two-view augmentation: random resized crop (area scale 0.6..1.0),
// optional horizontal flip (p=0.5), brightness/contrast jitter (+-0.4), clamp.
std::pair<Tensor, Tensor> augment_pair(const Tensor& image, std::uint64_t seed,
                                       bool allow_flip = true);
Tensor augment_single(const Tensor& image, std::uint64_t seed, bool allow_flip = true);

// Exact quarter-turn rotation (counter-clockwise) with its rotation label k.
std::pair<Tensor, std::size_t> rotate90(const Tensor& image, std::size_t k);

// Bilinear rotation about the image center; out-of-frame pixels are 0.
Tensor rotate_image(const Tensor& image, double angle);

// Symmetric label noise: each label is resampled uniformly (over all classes,
// possibly to itself) with the given probability.
Dataset inject_label_noise(const Dataset& dataset, double rate, std::uint64_t seed);

enum class CorruptionKind {
  kGaussianNoise,
  kShotNoise,
  kImpulseNoise,
  kGaussianBlur,
  kContrast,
  kBrightness,
  kPixelate,
  kOcclusion,
};

const std::vector<CorruptionKind>& all_corruption_kinds();
std::string corruption_name(CorruptionKind kind);
CorruptionKind corruption_from_name(const std::string& name);

Tensor corrupt(const Tensor& image, CorruptionKind kind, int severity,
               std::uint64_t seed);

// Image materialized for a task: the task rotation applied when present.
Tensor task_image(const Dataset& dataset, const TaskSpec& task, std::size_t sample_index);

}  // namespace clab
