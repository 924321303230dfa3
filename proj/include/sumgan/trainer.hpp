#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sumgan/dataset.hpp"
#include "sumgan/evaluation.hpp"
#include "sumgan/models.hpp"
#include "sumgan/rng.hpp"

namespace sumgan::train {

using ad::NamedParam;
using ad::Tensor;

struct TrainConfig {
    std::size_t epochs = 50;
    double lr_main = 1e-4;  // every component except the discriminator
    double lr_disc = 1e-5;
    double sigma = 0.3;  // target summary rate
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    double grad_clip_norm = 5.0;  // 0 disables clipping
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t parallel_folds = 1;

    void validate() const;  // throws ConfigError
};

/// Adam over one parameter group, with bias correction.
class Adam {
public:
    Adam(std::vector<NamedParam> params, double lr, double beta1, double beta2,
         double eps);

    void zero_grad();
    void step();
    const std::vector<NamedParam>& params() const { return params_; }
    std::size_t step_count() const { return t_; }

private:
    std::vector<NamedParam> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

/// Scale gradients so their global L2 norm is at most max_norm; returns the
/// pre-clip norm. max_norm <= 0 disables clipping.
double clip_global_norm(const std::vector<NamedParam>& params, double max_norm);

struct StepRecord {
    std::size_t epoch = 0;
    std::string video_id;
    double reconst = 0, sparsity = 0, gan_d = 0, gan_g = 0;
    bool has_prior = false;
    double prior = 0;
    double d_x = 0, d_xhat = 0, d_xhat_p = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double reconst = 0, sparsity = 0, gan_d = 0, gan_g = 0;
    bool has_prior = false;
    double prior = 0;
    double disc_real_acc = 0, disc_fake_acc = 0;
};

/// Line-delimited structured records: one JSON object per step and one per
/// epoch aggregate. Deterministic given seed and config.
struct TrainLog {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;

    void append(const TrainLog& other);
    std::string to_jsonl() const;
};

/// The adversarial game's three parameter groups and their optimizers.
struct Optimizers {
    Adam summarizer;      // selector + compression + encoder
    Adam generator;       // decoder
    Adam discriminator;   // classifier

    static Optimizers create(const models::SumGanModel& model, const TrainConfig& cfg);
};

/// One video, three sub-updates in order: summarizer (reconstruction +
/// prior + sparsity), generator (reconstruction + GAN), discriminator
/// (negated GAN objective). Gradients are clipped per group before each
/// update. Throws NumericError naming the loss term on NaN.
StepRecord train_step(models::SumGanModel& model, const Tensor& X,
                      const std::string& video_id, std::size_t epoch,
                      const TrainConfig& cfg, Optimizers& opt, Rng& noise_rng);

/// Deterministic 80/20-style split: videos shuffled once by seed, then cut
/// into `folds` contiguous groups. Returns the test-index group per fold.
std::vector<std::vector<std::size_t>> fold_partition(std::size_t n_videos,
                                                     std::size_t folds,
                                                     std::uint64_t seed);

struct FoldResult {
    std::size_t fold_index = 0;
    models::SumGanModel model;
    TrainLog log;
    std::vector<std::string> test_ids;
    std::vector<double> per_video_metric;
    double mean_metric = 0;
    double wall_seconds = 0;  // reported separately; never part of the log
};

FoldResult run_fold(const data::Dataset& ds, std::size_t fold_index,
                    const models::VariantSpec& base_spec, const TrainConfig& cfg,
                    const eval::Protocol& protocol);

struct ExperimentReport {
    std::string variant;
    std::string fingerprint;
    std::string protocol;
    struct FoldSummary {
        std::size_t index = 0;
        std::vector<std::string> ids;
        std::vector<double> metrics;
        double mean = 0;
    };
    std::vector<FoldSummary> folds;
    double mean_metric = 0;

    std::string to_json() const;
};

struct ExperimentResult {
    ExperimentReport report;
    TrainLog log;  // merged fold-major
    std::vector<models::SumGanModel> fold_models;
    std::vector<double> fold_wall_seconds;
};

/// All folds, each trained for cfg.epochs and evaluated on its test split.
/// Folds run concurrently when cfg.parallel_folds > 1; results are merged in
/// fold order so the outputs do not depend on scheduling.
ExperimentResult run_experiment(const data::Dataset& ds,
                                const models::VariantSpec& base_spec,
                                const TrainConfig& cfg,
                                const eval::Protocol& protocol);

std::string config_fingerprint(const models::VariantSpec& spec, const TrainConfig& cfg,
                               const eval::Protocol& protocol);

}  // namespace sumgan::train
