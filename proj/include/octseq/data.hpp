#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "octseq/common.hpp"

namespace octseq::data {

enum class Laterality { left, right, unknown };

Laterality laterality_from_string(const std::string& s);
std::string to_string(Laterality lat);

// One 3D scan. Voxels are slice-major (depth outermost) unsigned 8-bit and
// stay empty until load_voxels populates them.
struct VolumeRecord {
  std::string volume_id;
  std::string subject_id;
  int label = 0;  // 1 glaucoma, 0 normal
  Laterality laterality = Laterality::unknown;
  std::optional<int> signal_strength;
  std::string relative_path;
  int depth = 0;
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> voxels;

  bool loaded() const { return !voxels.empty(); }
  const std::uint8_t* slice(int d) const {
    return voxels.data() + static_cast<std::size_t>(d) * height * width;
  }
};

// Resize target plus the per-channel normalization constants. The defaults
// are the conventional ImageNet statistics with the grayscale slice
// replicated across three channels.
struct PrepConfig {
  int target_h = 128;
  int target_w = 128;
  std::vector<double> mean{0.485, 0.456, 0.406};
  std::vector<double> stdev{0.229, 0.224, 0.225};

  std::string fingerprint() const;  // hex hash over all constants
};

struct PreprocessedVolume {
  std::string volume_id;
  int depth = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  // plane (d, c) lives at planes[d * channels + c]
  std::vector<Eigen::MatrixXd> planes;
  std::vector<double> mean_applied;
  std::vector<double> stdev_applied;

  const Eigen::MatrixXd& plane(int d, int c) const {
    return planes[static_cast<std::size_t>(d) * channels + c];
  }
};

// Subject-level split for one fold; members are sorted subject ids.
struct FoldAssignment {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<FoldAssignment> folds;
};

struct BatchPlan {
  int batch_size = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<int>> batches;  // indices into the record list
};

std::vector<VolumeRecord> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path,
                   const std::vector<VolumeRecord>& records);

void load_voxels(VolumeRecord& record, const std::filesystem::path& data_dir);
void save_voxels(const VolumeRecord& record,
                 const std::filesystem::path& data_dir);

// Corner-aligned bilinear interpolation of a single plane.
Eigen::MatrixXd bilinear_resize(const Eigen::MatrixXd& src, int out_h,
                                int out_w);

// Maps intensities to [0,1], resizes each slice to the target, then applies
// (x - mean_c) / std_c per channel. Slice order is preserved.
PreprocessedVolume preprocess(const VolumeRecord& volume,
                              const PrepConfig& cfg);

FoldPlan make_fold_plan(const std::vector<VolumeRecord>& records, int k,
                        std::uint64_t seed);

void save_fold_plan(const std::filesystem::path& path, const FoldPlan& plan);
FoldPlan load_fold_plan(const std::filesystem::path& path);

BatchPlan balanced_batches(const std::vector<int>& labels,
                           const std::vector<int>& train_indices,
                           int batch_size, std::uint64_t seed);

// Volume indices of the records whose subject falls in the given subset.
std::vector<int> indices_for_subjects(
    const std::vector<VolumeRecord>& records,
    const std::vector<std::string>& subjects);

}  // namespace octseq::data
