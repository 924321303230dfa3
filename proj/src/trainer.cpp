#include "sumgan/trainer.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace sumgan::train {

using namespace sumgan::ad;
using json = nlohmann::json;

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (lr_main <= 0.0 || lr_disc <= 0.0) {
        // lr = 0 is allowed only explicitly by tests; the CLI never passes it
        if (lr_main < 0.0 || lr_disc < 0.0) {
            throw ConfigError("learning rates must be nonnegative");
        }
    }
    if (sigma < 0.0 || sigma > 1.0) throw ConfigError("sigma must lie in [0, 1]");
    if (folds < 2) throw ConfigError("need at least 2 folds");
    if (parallel_folds == 0) throw ConfigError("parallel_folds must be positive");
}

Adam::Adam(std::vector<NamedParam> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& value = params_[i].tensor.raw_value();
        auto grad = params_[i].tensor.grad();
        if (grad.empty()) continue;  // never touched by backward
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double g = grad[j];
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            value[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

double clip_global_norm(const std::vector<NamedParam>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (double g : p.tensor.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (const auto& p : params) {
            auto& t = const_cast<Tensor&>(p.tensor);
            if (!t.has_grad()) continue;
            for (auto& g : t.grad_buffer()) g *= scale;
        }
    }
    return norm;
}

void TrainLog::append(const TrainLog& other) {
    steps.insert(steps.end(), other.steps.begin(), other.steps.end());
    epochs.insert(epochs.end(), other.epochs.begin(), other.epochs.end());
}

std::string TrainLog::to_jsonl() const {
    std::string out;
    for (const auto& s : steps) {
        json j = {
            {"type", "step"},     {"epoch", s.epoch},   {"video", s.video_id},
            {"reconst", s.reconst}, {"sparsity", s.sparsity}, {"gan_d", s.gan_d},
            {"gan_g", s.gan_g},
        };
        if (s.has_prior) j["prior"] = s.prior;
        out += j.dump();
        out += '\n';
    }
    for (const auto& e : epochs) {
        json j = {
            {"type", "epoch"},        {"epoch", e.epoch},
            {"reconst", e.reconst},   {"sparsity", e.sparsity},
            {"gan_d", e.gan_d},       {"gan_g", e.gan_g},
            {"disc_real_acc", e.disc_real_acc},
            {"disc_fake_acc", e.disc_fake_acc},
        };
        if (e.has_prior) j["prior"] = e.prior;
        out += j.dump();
        out += '\n';
    }
    return out;
}

Optimizers Optimizers::create(const models::SumGanModel& model, const TrainConfig& cfg) {
    return Optimizers{
        Adam(model.summarizer_params(), cfg.lr_main, cfg.adam_beta1, cfg.adam_beta2,
             cfg.adam_eps),
        Adam(model.generator_params(), cfg.lr_main, cfg.adam_beta1, cfg.adam_beta2,
             cfg.adam_eps),
        Adam(model.discriminator_params(), cfg.lr_disc, cfg.adam_beta1,
             cfg.adam_beta2, cfg.adam_eps),
    };
}

namespace {

double finite_or_throw(const Tensor& t, const char* term, std::size_t epoch,
                       const std::string& video) {
    const double v = t.item();
    if (!std::isfinite(v)) {
        throw NumericError(std::string("NaN in ") + term + " at epoch " +
                           std::to_string(epoch) + ", video '" + video + "'");
    }
    return v;
}

void zero_all(Optimizers& opt) {
    opt.summarizer.zero_grad();
    opt.generator.zero_grad();
    opt.discriminator.zero_grad();
}

}  // namespace

StepRecord train_step(models::SumGanModel& model, const Tensor& X,
                      const std::string& video_id, std::size_t epoch,
                      const TrainConfig& cfg, Optimizers& opt, Rng& noise_rng) {
    using models::ForwardOptions;
    using models::Noise;

    StepRecord rec;
    rec.epoch = epoch;
    rec.video_id = video_id;
    const std::size_t n = X.rows();
    const auto& spec = model.spec();

    // (1) summarizer: reconstruction + prior + sparsity
    {
        Noise noise = Noise::draw(spec, n, noise_rng);
        ForwardOptions fo;
        fo.with_prior_sample = false;
        fo.with_gan = false;
        Graph g;
        Graph::Scope scope(g);
        auto trace = model.forward_full(X, noise, fo);
        auto bundle = models::model_losses(spec, trace, cfg.sigma);
        rec.reconst = finite_or_throw(bundle.reconst, "reconstruction loss", epoch, video_id);
        rec.sparsity = finite_or_throw(bundle.sparsity, "sparsity loss", epoch, video_id);
        Tensor loss = add(bundle.reconst, bundle.sparsity);
        if (bundle.has_prior()) {
            rec.has_prior = true;
            rec.prior = finite_or_throw(bundle.prior, "prior loss", epoch, video_id);
            loss = add(loss, bundle.prior);
        }
        zero_all(opt);
        g.backward(loss);
        clip_global_norm(opt.summarizer.params(), cfg.grad_clip_norm);
        opt.summarizer.step();
    }

    // (2) generator: reconstruction + non-saturating GAN
    {
        Noise noise = Noise::draw(spec, n, noise_rng);
        ForwardOptions fo;
        fo.detach_latent = true;
        fo.phi_x_constant = true;
        Graph g;
        Graph::Scope scope(g);
        auto trace = model.forward_full(X, noise, fo);
        auto bundle = models::model_losses(spec, trace, cfg.sigma);
        rec.gan_g = finite_or_throw(bundle.gan_g, "generator GAN loss", epoch, video_id);
        finite_or_throw(bundle.reconst, "reconstruction loss", epoch, video_id);
        Tensor loss = add(bundle.reconst, bundle.gan_g);
        zero_all(opt);
        g.backward(loss);
        clip_global_norm(opt.generator.params(), cfg.grad_clip_norm);
        opt.generator.step();
    }

    // (3) discriminator: maximize the GAN objective
    {
        Noise noise = Noise::draw(spec, n, noise_rng);
        ForwardOptions fo;
        fo.detach_disc_inputs = true;
        Graph g;
        Graph::Scope scope(g);
        auto trace = model.forward_full(X, noise, fo);
        auto bundle = models::model_losses(spec, trace, cfg.sigma);
        rec.gan_d = finite_or_throw(bundle.gan_d, "GAN objective", epoch, video_id);
        Tensor loss = neg(bundle.gan_d);
        zero_all(opt);
        g.backward(loss);
        clip_global_norm(opt.discriminator.params(), cfg.grad_clip_norm);
        opt.discriminator.step();
        rec.d_x = trace.d_x.item();
        rec.d_xhat = trace.d_xhat.item();
        rec.d_xhat_p = trace.d_xhat_p.item();
    }

    return rec;
}

std::vector<std::vector<std::size_t>> fold_partition(std::size_t n_videos,
                                                     std::size_t folds,
                                                     std::uint64_t seed) {
    if (folds < 2) throw ConfigError("fold_partition: need at least 2 folds");
    if (n_videos < folds) {
        throw ConfigError("fold_partition: need at least one video per fold");
    }
    std::vector<std::size_t> order(n_videos);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed).child(0xf01d);
    rng.shuffle(order);

    std::vector<std::vector<std::size_t>> groups(folds);
    for (std::size_t g = 0; g < folds; ++g) {
        const std::size_t lo = g * n_videos / folds;
        const std::size_t hi = (g + 1) * n_videos / folds;
        groups[g].assign(order.begin() + lo, order.begin() + hi);
    }
    return groups;
}

FoldResult run_fold(const data::Dataset& ds, std::size_t fold_index,
                    const models::VariantSpec& base_spec, const TrainConfig& cfg,
                    const eval::Protocol& protocol) {
    cfg.validate();
    const auto groups = fold_partition(ds.videos.size(), cfg.folds, cfg.seed);
    if (fold_index >= groups.size()) throw ConfigError("fold index out of range");

    std::vector<std::size_t> train_idx;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (g == fold_index) continue;
        train_idx.insert(train_idx.end(), groups[g].begin(), groups[g].end());
    }

    models::VariantSpec spec = base_spec;
    spec.seed = splitmix64(cfg.seed ^ splitmix64(0x10de1 + fold_index));
    models::SumGanModel model(spec);
    Optimizers opt = Optimizers::create(model, cfg);
    Rng noise_rng(splitmix64(cfg.seed ^ splitmix64(0x4015e + fold_index)));
    Rng order_rng(splitmix64(cfg.seed ^ splitmix64(0x0bde6 + fold_index)));

    const auto t0 = std::chrono::steady_clock::now();
    TrainLog log;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        order_rng.shuffle(order);

        EpochRecord er;
        er.epoch = epoch;
        double real_correct = 0.0, fake_correct = 0.0;
        for (std::size_t idx : order) {
            const auto& rec = ds.videos[idx];
            StepRecord sr = train_step(model, rec.features_tensor(), rec.id, epoch,
                                       cfg, opt, noise_rng);
            er.reconst += sr.reconst;
            er.sparsity += sr.sparsity;
            er.gan_d += sr.gan_d;
            er.gan_g += sr.gan_g;
            if (sr.has_prior) {
                er.has_prior = true;
                er.prior += sr.prior;
            }
            real_correct += sr.d_x >= 0.5 ? 1.0 : 0.0;
            fake_correct += (sr.d_xhat < 0.5 ? 0.5 : 0.0) + (sr.d_xhat_p < 0.5 ? 0.5 : 0.0);
            log.steps.push_back(std::move(sr));
        }
        const double denom = static_cast<double>(order.size());
        er.reconst /= denom;
        er.sparsity /= denom;
        er.gan_d /= denom;
        er.gan_g /= denom;
        if (er.has_prior) er.prior /= denom;
        er.disc_real_acc = real_correct / denom;
        er.disc_fake_acc = fake_correct / denom;
        log.epochs.push_back(er);
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    FoldResult out{fold_index, std::move(model), std::move(log), {}, {}, 0.0, wall};
    double acc = 0.0;
    for (std::size_t idx : groups[fold_index]) {
        const auto& rec = ds.videos[idx];
        const double metric = eval::evaluate_video(out.model, rec, protocol);
        out.test_ids.push_back(rec.id);
        out.per_video_metric.push_back(metric);
        acc += metric;
    }
    out.mean_metric = acc / static_cast<double>(out.per_video_metric.size());
    return out;
}

std::string config_fingerprint(const models::VariantSpec& spec, const TrainConfig& cfg,
                               const eval::Protocol& protocol) {
    std::ostringstream os;
    os << "variant=" << models::to_string(spec.name)
       << " input_dim=" << spec.dims.input
       << " compressed_dim=" << spec.dims.compressed
       << " hidden_dim=" << spec.dims.hidden << " heads=" << spec.heads
       << " epochs=" << cfg.epochs << " lr_main=" << cfg.lr_main
       << " lr_disc=" << cfg.lr_disc << " sigma=" << cfg.sigma
       << " folds=" << cfg.folds << " grad_clip_norm=" << cfg.grad_clip_norm
       << " budget_fraction=" << protocol.budget_fraction << " seed=" << cfg.seed;
    return os.str();
}

std::string ExperimentReport::to_json() const {
    json folds_json = json::array();
    for (const auto& f : folds) {
        json videos = json::array();
        for (std::size_t i = 0; i < f.ids.size(); ++i) {
            videos.push_back({{"id", f.ids[i]}, {"metric", f.metrics[i]}});
        }
        folds_json.push_back(
            {{"fold", f.index}, {"mean", f.mean}, {"videos", videos}});
    }
    json j = {
        {"variant", variant},
        {"protocol", protocol},
        {"config", fingerprint},
        {"folds", folds_json},
        {"mean_metric", mean_metric},
    };
    return j.dump(2) + "\n";
}

ExperimentResult run_experiment(const data::Dataset& ds,
                                const models::VariantSpec& base_spec,
                                const TrainConfig& cfg,
                                const eval::Protocol& protocol) {
    cfg.validate();
    const std::size_t folds = cfg.folds;
    std::vector<std::optional<FoldResult>> results(folds);
    std::vector<std::exception_ptr> errors(folds);

    const std::size_t workers = std::min(cfg.parallel_folds, folds);
    for (std::size_t base = 0; base < folds; base += workers) {
        const std::size_t batch = std::min(workers, folds - base);
        std::vector<std::thread> threads;
        threads.reserve(batch);
        for (std::size_t k = 0; k < batch; ++k) {
            const std::size_t fold = base + k;
            threads.emplace_back([&, fold]() {
                try {
                    results[fold].emplace(run_fold(ds, fold, base_spec, cfg, protocol));
                } catch (...) {
                    errors[fold] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    ExperimentResult out;
    out.report.variant = models::to_string(base_spec.name);
    out.report.protocol = data::to_string(protocol.kind);
    out.report.fingerprint = config_fingerprint(base_spec, cfg, protocol);
    double acc = 0.0;
    for (std::size_t fold = 0; fold < folds; ++fold) {
        FoldResult& r = *results[fold];
        out.log.append(r.log);
        out.report.folds.push_back(
            {fold, r.test_ids, r.per_video_metric, r.mean_metric});
        acc += r.mean_metric;
        out.fold_wall_seconds.push_back(r.wall_seconds);
        out.fold_models.push_back(std::move(r.model));
    }
    out.report.mean_metric = acc / static_cast<double>(folds);
    return out;
}

}  // namespace sumgan::train
