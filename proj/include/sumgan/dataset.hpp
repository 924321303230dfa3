#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sumgan/tensor.hpp"

namespace sumgan::data {

enum class MetricProtocol { fscore_max, fscore_avg, auc };

MetricProtocol protocol_from_string(const std::string& s);  // throws ConfigError
const char* to_string(MetricProtocol p);

/// One video: pre-extracted frame features at the subsampled rate plus the
/// full-rate annotations used for evaluation.
struct VideoRecord {
    std::string id;
    std::size_t n_frames = 0;      // N, subsampled
    std::size_t feature_dim = 0;   // M
    std::vector<double> features;  // N x M, row-major

    std::int32_t n_frames_original = 0;
    std::vector<std::int32_t> picks;  // length N, strictly increasing
    std::vector<std::array<std::int32_t, 2>> change_points;  // [start, end) shots

    std::vector<double> gt_frame_scores;  // per original frame, or empty
    std::vector<std::vector<std::int32_t>> user_summaries;  // 0/1 rows

    void validate() const;  // throws ValidationError naming the video and field
    ad::Tensor features_tensor() const;
};

struct Dataset {
    std::string name;
    MetricProtocol protocol = MetricProtocol::fscore_avg;
    std::vector<VideoRecord> videos;
};

/// Writes `<manifest_path>` (JSON) plus the binary data file it references.
void save_dataset(const Dataset& ds, const std::string& manifest_path);

/// Loads and fully validates a dataset; any invariant violation is an error
/// naming the offending video and field.
Dataset load_dataset(const std::string& manifest_path);

/// Synthetic verification corpus: background frames from one Gaussian
/// cluster plus one contiguous planted segment (~15% of frames) from a
/// well-separated cluster. Ground truth marks the planted segment. The
/// original frame rate is twice the subsampled rate, exercising score
/// expansion.
Dataset synth_planted(std::size_t num_videos, std::size_t n_frames,
                      std::size_t feature_dim, std::uint64_t seed,
                      MetricProtocol protocol = MetricProtocol::fscore_avg);

/// Step-function expansion to the original frame rate: each original frame
/// takes the score of the nearest preceding picked frame.
std::vector<double> expand_scores(std::span<const double> scores,
                                  std::span<const std::int32_t> picks,
                                  std::size_t n_frames_original);

}  // namespace sumgan::data
