#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "sumgan/models.hpp"
#include "sumgan/trainer.hpp"

namespace sumgan::cli {

// Exit codes: 0 success, 2 configuration/validation failure, 3 numeric abort.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

struct RunConfig {
    std::string variant = "AED";
    bool variant_explicit = false;  // user passed --variant (checked vs checkpoints)
    std::string dataset;
    std::string out_dir;
    std::string checkpoint;
    std::string video_id;

    train::TrainConfig tc;
    models::Dims dims;  // 1024 -> 500, H = 500 by default
    std::size_t heads = 4;
    double budget_fraction = 0.15;
    std::string protocol_override;  // empty: use the dataset's protocol

    std::size_t synth_videos = 25;
    std::size_t synth_frames = 120;
    std::size_t synth_dim = 64;
    std::string synth_protocol = "fscore_avg";

    bool inject_backward_fault = false;  // gradcheck negative control
};

/// Flat key=value configuration file; '#' starts a comment. Unknown keys are
/// rejected. `skip` lists keys already pinned by CLI flags. Returns the keys
/// the file actually applied.
std::vector<std::string> apply_config_file(const std::string& path, RunConfig& rc,
                                           const std::vector<std::string>& skip);

int run_train(const RunConfig& rc, std::ostream& out);
int run_eval(const RunConfig& rc, std::ostream& out);
int run_summarize(const RunConfig& rc, std::ostream& out);
int run_gradcheck(const RunConfig& rc, std::ostream& out);
int run_synth(const RunConfig& rc, std::ostream& out);

struct GradCheckOutcome {
    std::string variant;
    double max_rel_err = 0;
    std::string worst_param;
};

/// Finite-difference sweep over every variant at probe scale (4 frames,
/// 8 -> 8 features, 6 hidden units).
std::vector<GradCheckOutcome> gradcheck_all(std::uint64_t seed, bool inject_fault);

/// Parse argv, merge config file and SUMGAN_SEED, dispatch, map exceptions
/// to exit codes.
int main_entry(int argc, const char* const* argv);

}  // namespace sumgan::cli
