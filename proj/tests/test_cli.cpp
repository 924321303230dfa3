#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "sumgan/cli.hpp"
#include "sumgan/dataset.hpp"

using namespace sumgan;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& f) const { return (path / f).string(); }
};

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv = {"sumgan"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::main_entry(static_cast<int>(argv.size()), argv.data());
}

cli::RunConfig small_train_config(const TempDir& tmp) {
    cli::RunConfig rc;
    rc.variant = "AED";
    rc.dataset = tmp.file("ds.manifest");
    rc.out_dir = tmp.file("out");
    rc.dims.input = 8;
    rc.dims.compressed = 8;
    rc.dims.hidden = 6;
    rc.heads = 2;
    rc.tc.epochs = 1;
    rc.tc.folds = 2;
    rc.tc.seed = 5;
    return rc;
}

}  // namespace

TEST_CASE("config file parsing: overrides, precedence, unknown keys") {
    TempDir tmp("sumgan_cli_cfg");
    {
        std::ofstream os(tmp.file("good.cfg"));
        os << "# comment line\n"
           << "epochs = 7\n"
           << "sigma=0.25   # trailing comment\n"
           << "variant =STD\n"
           << "seed=99\n";
    }
    cli::RunConfig rc;
    auto applied = cli::apply_config_file(tmp.file("good.cfg"), rc, {});
    CHECK(rc.tc.epochs == 7);
    CHECK(rc.tc.sigma == 0.25);
    CHECK(rc.variant == "STD");
    CHECK(rc.tc.seed == 99);
    CHECK(applied.size() == 4);

    // keys pinned by flags are skipped
    cli::RunConfig rc2;
    rc2.tc.epochs = 50;
    cli::apply_config_file(tmp.file("good.cfg"), rc2, {"epochs"});
    CHECK(rc2.tc.epochs == 50);
    CHECK(rc2.tc.seed == 99);

    {
        std::ofstream os(tmp.file("bad.cfg"));
        os << "not_a_key=1\n";
    }
    cli::RunConfig rc3;
    CHECK_THROWS_AS(cli::apply_config_file(tmp.file("bad.cfg"), rc3, {}), ConfigError);

    {
        std::ofstream os(tmp.file("malformed.cfg"));
        os << "epochs 7\n";
    }
    CHECK_THROWS_AS(cli::apply_config_file(tmp.file("malformed.cfg"), rc3, {}),
                    ConfigError);
}

TEST_CASE("synth + train + eval + summarize round trip through the CLI surface") {
    TempDir tmp("sumgan_cli_e2e");

    // synth
    CHECK(run_cli({"synth", "--out", tmp.file(""), "--videos", "6", "--frames", "16",
                   "--dim", "8", "--seed", "3"}) == cli::kExitOk);
    const std::string manifest = tmp.file("synth.manifest");
    CHECK(fs::exists(manifest));

    // train
    cli::RunConfig rc = small_train_config(tmp);
    rc.dataset = manifest;
    std::ostringstream out;
    CHECK(cli::run_train(rc, out) == cli::kExitOk);
    CHECK(fs::exists(tmp.path / "out" / "fold0.ckpt"));
    CHECK(fs::exists(tmp.path / "out" / "fold1.ckpt"));
    CHECK(fs::exists(tmp.path / "out" / "report.json"));
    CHECK(fs::exists(tmp.path / "out" / "trainlog.jsonl"));
    CHECK(fs::exists(tmp.path / "out" / "timing.txt"));

    {
        std::ifstream is(tmp.file("out/report.json"));
        json report = json::parse(is);
        CHECK(report.at("variant") == "AED");
        CHECK(report.at("folds").size() == 2);
        const double mean = report.at("mean_metric").get<double>();
        CHECK(mean >= 0.0);
        CHECK(mean <= 1.0);
    }

    // eval
    cli::RunConfig er;
    er.checkpoint = tmp.file("out/fold0.ckpt");
    er.dataset = manifest;
    std::ostringstream eval_out;
    CHECK(cli::run_eval(er, eval_out) == cli::kExitOk);
    json eval_report = json::parse(eval_out.str());
    CHECK(eval_report.at("videos").size() == 6);

    // summarize
    cli::RunConfig sr;
    sr.checkpoint = tmp.file("out/fold0.ckpt");
    sr.dataset = manifest;
    sr.video_id = "synth2";
    std::ostringstream sum_out;
    CHECK(cli::run_summarize(sr, sum_out) == cli::kExitOk);
    json summary = json::parse(sum_out.str());
    const auto mask = summary.at("mask").get<std::vector<int>>();
    CHECK(mask.size() == 32);  // n_frames_original = 2 x 16
    int selected = 0;
    for (int v : mask) selected += v;
    CHECK(selected <= static_cast<int>(0.15 * 32));
    CHECK(summary.at("scores").size() == 16);

    // auc-protocol evaluation emits the flat table and ROC rows
    cli::RunConfig ar = er;
    ar.protocol_override = "auc";
    ar.out_dir = tmp.file("evalout");
    std::ostringstream auc_out;
    CHECK(cli::run_eval(ar, auc_out) == cli::kExitOk);
    CHECK(fs::exists(tmp.path / "evalout" / "eval.tsv"));
    CHECK(fs::exists(tmp.path / "evalout" / "roc.tsv"));
    {
        std::ifstream roc(tmp.file("evalout/roc.tsv"));
        std::string header;
        std::getline(roc, header);
        CHECK(header == "video\tthreshold\tfpr\ttpr");
    }

    // unknown video id is a config error
    sr.video_id = "nope";
    CHECK_THROWS_AS(cli::run_summarize(sr, sum_out), ConfigError);

    // variant mismatch is a config error
    sr.video_id = "synth2";
    sr.variant = "ST";
    sr.variant_explicit = true;
    CHECK_THROWS_AS(cli::run_summarize(sr, sum_out), ConfigError);
}

TEST_CASE("exit codes: config errors give 2, parse errors give 2") {
    CHECK(run_cli({"train"}) == cli::kExitConfig);              // missing dataset
    CHECK(run_cli({"train", "--bogus-flag"}) == cli::kExitConfig);
    CHECK(run_cli({"eval"}) == cli::kExitConfig);               // missing checkpoint
    CHECK(run_cli({"summarize"}) == cli::kExitConfig);
    CHECK(run_cli({"synth"}) == cli::kExitConfig);              // missing out
    TempDir tmp("sumgan_cli_codes");
    CHECK(run_cli({"train", "--dataset", tmp.file("missing.manifest"), "--out",
                   tmp.file("o")}) == cli::kExitConfig);
}

TEST_CASE("train rerun with the same seed reproduces outputs byte-exactly") {
    TempDir tmp("sumgan_cli_det");
    data::save_dataset(data::synth_planted(6, 16, 8, 21), tmp.file("ds.manifest"));

    cli::RunConfig rc = small_train_config(tmp);
    std::ostringstream sink;
    rc.out_dir = tmp.file("a");
    CHECK(cli::run_train(rc, sink) == cli::kExitOk);
    rc.out_dir = tmp.file("b");
    CHECK(cli::run_train(rc, sink) == cli::kExitOk);

    auto slurp = [](const std::string& p) {
        std::ifstream is(p, std::ios::binary);
        REQUIRE(is.good());
        return std::string(std::istreambuf_iterator<char>(is),
                           std::istreambuf_iterator<char>());
    };
    for (const char* f : {"report.json", "trainlog.jsonl", "fold0.ckpt", "fold1.ckpt"}) {
        CHECK(slurp(tmp.file("a/") + f) == slurp(tmp.file("b/") + f));
    }
}

TEST_CASE("gradcheck command: clean pass and corrupted-backward detection") {
    cli::RunConfig rc;
    rc.tc.seed = 12;
    std::ostringstream out;
    CHECK(cli::run_gradcheck(rc, out) == cli::kExitOk);
    CHECK(out.str().find("gradcheck passed") != std::string::npos);
    // each variant reports its worst parameter
    for (const char* v : {"SUM-GAN", "AED", "STD", "ST", "STSED", "SAT"}) {
        CHECK(out.str().find(v) != std::string::npos);
    }
    CHECK(out.str().find("worst ") != std::string::npos);

    rc.inject_backward_fault = true;
    std::ostringstream out2;
    CHECK(cli::run_gradcheck(rc, out2) != cli::kExitOk);
    CHECK(out2.str().find("FAIL") != std::string::npos);
}

TEST_CASE("SUMGAN_SEED is a fallback, not an override") {
    TempDir tmp("sumgan_cli_env");
    CHECK(run_cli({"synth", "--out", tmp.file("x"), "--videos", "3", "--frames", "12",
                   "--dim", "4", "--seed", "5"}) == cli::kExitOk);

    setenv("SUMGAN_SEED", "5", 1);
    CHECK(run_cli({"synth", "--out", tmp.file("y"), "--videos", "3", "--frames", "12",
                   "--dim", "4"}) == cli::kExitOk);
    unsetenv("SUMGAN_SEED");

    auto slurp = [](const std::string& p) {
        std::ifstream is(p, std::ios::binary);
        REQUIRE(is.good());
        return std::string(std::istreambuf_iterator<char>(is),
                           std::istreambuf_iterator<char>());
    };
    CHECK(slurp(tmp.file("x/synth.data")) == slurp(tmp.file("y/synth.data")));
}
