#include "sumgan/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sumgan/dataset.hpp"
#include "sumgan/evaluation.hpp"
#include "sumgan/gradcheck.hpp"

namespace sumgan::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad integer '" + v + "'");
    }
}

double parse_f64(const std::string& v, const std::string& key) {
    try {
        return std::stod(v);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad number '" + v + "'");
    }
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

eval::Protocol resolve_protocol(const RunConfig& rc, const data::Dataset& ds) {
    eval::Protocol p;
    p.kind = rc.protocol_override.empty()
                 ? ds.protocol
                 : data::protocol_from_string(rc.protocol_override);
    p.budget_fraction = rc.budget_fraction;
    return p;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot write " + path.string());
    os << content;
}

}  // namespace

std::vector<std::string> apply_config_file(const std::string& path, RunConfig& rc,
                                           const std::vector<std::string>& skip) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::vector<std::string> applied;
    auto skipped = [&](const std::string& key) {
        return std::find(skip.begin(), skip.end(), key) != skip.end();
    };
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (skipped(key)) continue;
        applied.push_back(key);

        if (key == "variant") {
            rc.variant = value;
            rc.variant_explicit = true;
        } else if (key == "dataset") {
            rc.dataset = value;
        } else if (key == "out") {
            rc.out_dir = value;
        } else if (key == "seed") {
            rc.tc.seed = parse_u64(value, key);
        } else if (key == "epochs") {
            rc.tc.epochs = parse_u64(value, key);
        } else if (key == "lr_main") {
            rc.tc.lr_main = parse_f64(value, key);
        } else if (key == "lr_disc") {
            rc.tc.lr_disc = parse_f64(value, key);
        } else if (key == "sigma") {
            rc.tc.sigma = parse_f64(value, key);
        } else if (key == "folds") {
            rc.tc.folds = parse_u64(value, key);
        } else if (key == "grad_clip_norm") {
            rc.tc.grad_clip_norm = parse_f64(value, key);
        } else if (key == "parallel_folds") {
            rc.tc.parallel_folds = parse_u64(value, key);
        } else if (key == "input_dim") {
            rc.dims.input = parse_u64(value, key);
        } else if (key == "compressed_dim") {
            rc.dims.compressed = parse_u64(value, key);
        } else if (key == "hidden_dim") {
            rc.dims.hidden = parse_u64(value, key);
        } else if (key == "heads") {
            rc.heads = parse_u64(value, key);
        } else if (key == "protocol") {
            rc.protocol_override = value;
        } else if (key == "budget_fraction") {
            rc.budget_fraction = parse_f64(value, key);
        } else {
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": unknown config key '" + key + "'");
        }
    }
    return applied;
}

int run_train(const RunConfig& rc, std::ostream& out) {
    if (rc.dataset.empty()) throw ConfigError("train: --dataset is required");
    if (rc.out_dir.empty()) throw ConfigError("train: --out is required");
    data::Dataset ds = data::load_dataset(rc.dataset);
    const eval::Protocol protocol = resolve_protocol(rc, ds);
    const auto spec = models::VariantSpec::make(
        models::variant_from_string(rc.variant), rc.dims, rc.heads, rc.tc.seed);

    auto result = train::run_experiment(ds, spec, rc.tc, protocol);

    fs::create_directories(rc.out_dir);
    const fs::path dir(rc.out_dir);
    for (std::size_t fold = 0; fold < result.fold_models.size(); ++fold) {
        result.fold_models[fold].save_checkpoint(
            (dir / ("fold" + std::to_string(fold) + ".ckpt")).string(), rc.tc.epochs);
    }
    write_file(dir / "trainlog.jsonl", result.log.to_jsonl());
    write_file(dir / "report.json", result.report.to_json());

    std::string timing;
    double total = 0.0;
    for (std::size_t fold = 0; fold < result.fold_wall_seconds.size(); ++fold) {
        timing += "fold " + std::to_string(fold) + " wall_seconds " +
                  std::to_string(result.fold_wall_seconds[fold]) + "\n";
        total += result.fold_wall_seconds[fold];
    }
    timing += "total wall_seconds " + std::to_string(total) + "\n";
    write_file(dir / "timing.txt", timing);

    out << "variant " << result.report.variant << " mean "
        << data::to_string(protocol.kind) << " = " << result.report.mean_metric
        << " over " << result.report.folds.size() << " folds\n";
    return kExitOk;
}

int run_eval(const RunConfig& rc, std::ostream& out) {
    if (rc.checkpoint.empty()) throw ConfigError("eval: --checkpoint is required");
    if (rc.dataset.empty()) throw ConfigError("eval: --dataset is required");
    auto model = models::SumGanModel::load_checkpoint(rc.checkpoint);
    data::Dataset ds = data::load_dataset(rc.dataset);
    const eval::Protocol protocol = resolve_protocol(rc, ds);

    json videos = json::array();
    std::string table = "video\tmetric\n";
    std::string roc_rows = "video\tthreshold\tfpr\ttpr\n";
    double acc = 0.0;
    std::ostringstream fmt;
    for (const auto& rec : ds.videos) {
        const double metric = eval::evaluate_video(model, rec, protocol);
        videos.push_back({{"id", rec.id}, {"metric", metric}});
        acc += metric;
        fmt.str("");
        fmt << rec.id << "\t" << metric << "\n";
        table += fmt.str();
        if (protocol.kind == data::MetricProtocol::auc) {
            ad::Tensor s = model.scores_for(rec.features_tensor());
            const std::vector<double> sub(s.value().begin(), s.value().end());
            const auto frame_scores = data::expand_scores(
                sub, rec.picks, static_cast<std::size_t>(rec.n_frames_original));
            std::vector<std::int32_t> labels(rec.gt_frame_scores.size());
            for (std::size_t i = 0; i < labels.size(); ++i) {
                labels[i] = rec.gt_frame_scores[i] >= protocol.auc_binarize_threshold;
            }
            for (const auto& p : eval::auc_sweep(frame_scores, labels).points) {
                fmt.str("");
                fmt << rec.id << "\t" << p.threshold << "\t" << p.fpr << "\t"
                    << p.tpr << "\n";
                roc_rows += fmt.str();
            }
        }
    }
    json report = {
        {"variant", models::to_string(model.spec().name)},
        {"protocol", data::to_string(protocol.kind)},
        {"videos", videos},
        {"mean_metric", acc / static_cast<double>(ds.videos.size())},
    };
    const std::string text = report.dump(2) + "\n";
    out << text;
    if (!rc.out_dir.empty()) {
        fs::create_directories(rc.out_dir);
        write_file(fs::path(rc.out_dir) / "eval.json", text);
        write_file(fs::path(rc.out_dir) / "eval.tsv", table);
        if (protocol.kind == data::MetricProtocol::auc) {
            write_file(fs::path(rc.out_dir) / "roc.tsv", roc_rows);
        }
    }
    return kExitOk;
}

int run_summarize(const RunConfig& rc, std::ostream& out) {
    if (rc.checkpoint.empty()) throw ConfigError("summarize: --checkpoint is required");
    if (rc.dataset.empty()) throw ConfigError("summarize: --dataset is required");
    if (rc.video_id.empty()) throw ConfigError("summarize: --video is required");
    auto model = models::SumGanModel::load_checkpoint(rc.checkpoint);
    if (rc.variant_explicit &&
        models::variant_from_string(rc.variant) != model.spec().name) {
        throw ConfigError("summarize: checkpoint holds variant " +
                          std::string(models::to_string(model.spec().name)) +
                          ", not " + rc.variant);
    }
    data::Dataset ds = data::load_dataset(rc.dataset);
    const auto it = std::find_if(ds.videos.begin(), ds.videos.end(),
                                 [&](const auto& r) { return r.id == rc.video_id; });
    if (it == ds.videos.end()) {
        throw ConfigError("unknown video '" + rc.video_id + "'");
    }

    ad::Tensor s = model.scores_for(it->features_tensor());
    const std::vector<double> sub_scores(s.value().begin(), s.value().end());
    const auto frame_scores = data::expand_scores(
        sub_scores, it->picks, static_cast<std::size_t>(it->n_frames_original));
    auto prop = eval::build_proposal(frame_scores, it->change_points, rc.budget_fraction);

    json summary = {
        {"video", it->id},
        {"variant", models::to_string(model.spec().name)},
        {"n_frames_original", it->n_frames_original},
        {"budget_fraction", prop.budget_fraction},
        {"scores", sub_scores},
        {"selected_shots", prop.selected_shots},
        {"mask", prop.mask},
    };
    const std::string text = summary.dump(2) + "\n";
    out << text;
    if (!rc.out_dir.empty()) {
        fs::create_directories(rc.out_dir);
        write_file(fs::path(rc.out_dir) / ("summary_" + it->id + ".json"), text);
    }
    return kExitOk;
}

std::vector<GradCheckOutcome> gradcheck_all(std::uint64_t seed, bool inject_fault) {
    models::Dims dims;
    dims.input = 8;
    dims.compressed = 8;
    dims.hidden = 6;
    const std::size_t n_frames = 4;

    ad::set_backward_fault_injection(inject_fault);
    std::vector<GradCheckOutcome> outcomes;
    std::uint64_t k = 0;
    for (auto name : models::all_variants()) {
        ++k;
        models::SumGanModel model(
            models::VariantSpec::make(name, dims, 2, splitmix64(seed + k)));
        Rng data_rng(splitmix64(seed ^ (k * 7919)));
        ad::Tensor X = ad::Tensor::uniform({n_frames, dims.input}, data_rng, -1.0, 1.0);
        Rng noise_rng(splitmix64(seed + 31 * k));
        const auto noise = models::Noise::draw(model.spec(), n_frames, noise_rng);

        auto params = model.parameters();
        auto rep = ad::grad_check(
            [&] {
                auto trace = model.forward_full(X, noise);
                return models::total_check_loss(model.spec(), trace, 0.3);
            },
            params, 1e-5);
        outcomes.push_back({models::to_string(name), rep.max_rel_err, rep.worst_param});
    }
    ad::set_backward_fault_injection(false);
    return outcomes;
}

int run_gradcheck(const RunConfig& rc, std::ostream& out) {
    const auto outcomes = gradcheck_all(rc.tc.seed, rc.inject_backward_fault);
    bool ok = true;
    for (const auto& o : outcomes) {
        const bool pass = o.max_rel_err < 1e-4;
        ok = ok && pass;
        out << "variant " << o.variant << ": max rel err " << o.max_rel_err
            << " (worst " << o.worst_param << ") " << (pass ? "ok" : "FAIL") << "\n";
    }
    out << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
    return ok ? kExitOk : 1;
}

int run_synth(const RunConfig& rc, std::ostream& out) {
    if (rc.out_dir.empty()) throw ConfigError("synth: --out is required");
    data::Dataset ds =
        data::synth_planted(rc.synth_videos, rc.synth_frames, rc.synth_dim, rc.tc.seed,
                            data::protocol_from_string(rc.synth_protocol));
    fs::create_directories(rc.out_dir);
    const std::string manifest = (fs::path(rc.out_dir) / "synth.manifest").string();
    data::save_dataset(ds, manifest);
    out << "wrote " << manifest << " (" << ds.videos.size() << " videos)\n";
    return kExitOk;
}

int main_entry(int argc, const char* const* argv) {
    RunConfig rc;
    std::string config_file;

    CLI::App app{"SUM-GAN family video summarization (training + evaluation)"};
    app.require_subcommand(1);

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_file, "flat key=value config file");
        cmd->add_option("--seed", rc.tc.seed, "master seed");
        cmd->add_option("--out", rc.out_dir, "output directory");
    };
    auto add_model_opts = [&](CLI::App* cmd) {
        cmd->add_option("--variant", rc.variant,
                        "SUM-GAN | AED | STD | ST | STSED | SAT");
        cmd->add_option("--input-dim", rc.dims.input, "raw feature width");
        cmd->add_option("--compressed-dim", rc.dims.compressed, "compressed width");
        cmd->add_option("--hidden-dim", rc.dims.hidden, "hidden units");
        cmd->add_option("--heads", rc.heads, "attention heads");
    };
    auto add_eval_opts = [&](CLI::App* cmd) {
        cmd->add_option("--protocol", rc.protocol_override,
                        "fscore_max | fscore_avg | auc (default: dataset's)");
        cmd->add_option("--budget-fraction", rc.budget_fraction, "summary budget");
    };

    CLI::App* train_cmd = app.add_subcommand("train", "k-fold adversarial training");
    add_common(train_cmd);
    add_model_opts(train_cmd);
    add_eval_opts(train_cmd);
    train_cmd->add_option("--dataset", rc.dataset, "dataset manifest path");
    train_cmd->add_option("--epochs", rc.tc.epochs, "training epochs");
    train_cmd->add_option("--lr-main", rc.tc.lr_main, "summarizer/generator LR");
    train_cmd->add_option("--lr-disc", rc.tc.lr_disc, "discriminator LR");
    train_cmd->add_option("--sigma", rc.tc.sigma, "target summary rate");
    train_cmd->add_option("--folds", rc.tc.folds, "cross-validation folds");
    train_cmd->add_option("--grad-clip", rc.tc.grad_clip_norm, "gradient clip norm");
    train_cmd->add_option("--parallel-folds", rc.tc.parallel_folds,
                          "folds trained concurrently");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd);
    add_eval_opts(eval_cmd);
    eval_cmd->add_option("--checkpoint", rc.checkpoint, "model checkpoint");
    eval_cmd->add_option("--dataset", rc.dataset, "dataset manifest path");

    CLI::App* sum_cmd = app.add_subcommand("summarize", "emit one video's summary");
    add_common(sum_cmd);
    add_eval_opts(sum_cmd);
    sum_cmd->add_option("--checkpoint", rc.checkpoint, "model checkpoint");
    sum_cmd->add_option("--dataset", rc.dataset, "dataset manifest path");
    sum_cmd->add_option("--video", rc.video_id, "video id");
    sum_cmd->add_option("--variant", rc.variant, "expected checkpoint variant");

    CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference sweep");
    add_common(grad_cmd);
    grad_cmd->add_flag("--inject-backward-fault", rc.inject_backward_fault,
                       "corrupt one backward rule (harness self-test)");

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth_cmd);
    synth_cmd->add_option("--videos", rc.synth_videos, "video count");
    synth_cmd->add_option("--frames", rc.synth_frames, "frames per video");
    synth_cmd->add_option("--dim", rc.synth_dim, "feature width");
    synth_cmd->add_option("--protocol", rc.synth_protocol, "metric protocol");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            app.exit(e);
            return kExitOk;
        }
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    CLI::App* active = app.get_subcommands().front();

    try {
        // flags beat the config file; the config file beats defaults
        rc.variant_explicit =
            active->get_option_no_throw("--variant") != nullptr &&
            active->count("--variant") > 0;
        std::vector<std::string> config_applied;
        if (!config_file.empty()) {
            std::vector<std::string> pinned;
            const std::pair<const char*, const char*> mapping[] = {
                {"--variant", "variant"},       {"--dataset", "dataset"},
                {"--out", "out"},               {"--seed", "seed"},
                {"--epochs", "epochs"},         {"--lr-main", "lr_main"},
                {"--lr-disc", "lr_disc"},       {"--sigma", "sigma"},
                {"--folds", "folds"},           {"--grad-clip", "grad_clip_norm"},
                {"--parallel-folds", "parallel_folds"},
                {"--input-dim", "input_dim"},   {"--compressed-dim", "compressed_dim"},
                {"--hidden-dim", "hidden_dim"}, {"--heads", "heads"},
                {"--protocol", "protocol"},     {"--budget-fraction", "budget_fraction"},
            };
            for (const auto& [flag, key] : mapping) {
                if (active->get_option_no_throw(flag) != nullptr &&
                    active->count(flag) > 0) {
                    pinned.push_back(key);
                }
            }
            config_applied = apply_config_file(config_file, rc, pinned);
        }
        const bool seed_pinned =
            active->count("--seed") > 0 ||
            std::find(config_applied.begin(), config_applied.end(), "seed") !=
                config_applied.end();
        if (!seed_pinned) {
            if (const char* env = std::getenv("SUMGAN_SEED"); env != nullptr) {
                rc.tc.seed = parse_u64(env, "SUMGAN_SEED");
            }
        }

        if (active == train_cmd) return run_train(rc, std::cout);
        if (active == eval_cmd) return run_eval(rc, std::cout);
        if (active == sum_cmd) return run_summarize(rc, std::cout);
        if (active == grad_cmd) return run_gradcheck(rc, std::cout);
        if (active == synth_cmd) return run_synth(rc, std::cout);
        std::cerr << "error: no command\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}

}  // namespace sumgan::cli
