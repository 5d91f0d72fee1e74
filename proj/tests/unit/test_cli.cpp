// Drives the installed binary end to end through std::system; CAAE_CLI_BIN
// is injected by CMake.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kBin = CAAE_CLI_BIN;

struct RunResult {
    int exit_code;
    std::string output;
};

RunResult run(const std::string& args) {
    const auto out_file = fs::temp_directory_path() / "caae_cli_out.txt";
    const std::string cmd = kBin + " " + args + " > " + out_file.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(out_file);
    std::string output((std::istreambuf_iterator<char>(in)), {});
    return {WEXITSTATUS(status), output};
}

fs::path work_dir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "caae_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

// tiny architecture shared by every training invocation here
const std::string kTinyModel = " --k 6 --style-dim 4 --widths 8,16 --patch 32 --batch 6 ";

}  // namespace

TEST_CASE("synth: reproducible manifests, directory creation, bad counts") {
    const auto dir = work_dir();
    auto a = run("synth --out " + (dir / "data_a").string() + " --seed 7 --counts 12,12,12 --patch 32");
    REQUIRE(a.exit_code == 0);
    auto b = run("synth --out " + (dir / "data_b" / "nested").string() + " --seed 7 --counts 12,12,12 --patch 32");
    REQUIRE(b.exit_code == 0);  // missing directories are created
    CHECK(slurp(dir / "data_a" / "manifest.jsonl") == slurp(dir / "data_b" / "nested" / "manifest.jsonl"));
    CHECK(fs::exists(dir / "data_a" / "config.echo"));

    auto bad = run("synth --out " + (dir / "bad").string() + " --counts 5,5");
    CHECK(bad.exit_code == 2);
    auto worse = run("synth --out " + (dir / "bad").string() + " --counts 5,5,-2");
    CHECK(worse.exit_code == 2);
}

TEST_CASE("train: modes differ only in the reconstruction target; resume replays losses") {
    const auto dir = work_dir();
    const auto data = (dir / "data_a" / "manifest.jsonl").string();
    REQUIRE(fs::exists(data));

    auto a2b = run("train --data " + data + " --out " + (dir / "run_a2b").string() +
                   " --seed 9 --mode a2b --steps 10 --checkpoint-every 5" + kTinyModel);
    REQUIRE(a2b.exit_code == 0);
    auto a2a = run("train --data " + data + " --out " + (dir / "run_a2a").string() +
                   " --seed 9 --mode a2a --steps 10 --checkpoint-every 5" + kTinyModel);
    REQUIRE(a2a.exit_code == 0);

    // same seed, same batches: the non-reconstruction losses of step 0
    // coincide before the weights diverge, the reconstruction loss differs
    auto first_row = [&](const fs::path& p) {
        std::ifstream in(p);
        std::string header, row;
        std::getline(in, header);
        std::getline(in, row);
        return row;
    };
    const auto row_b = first_row(dir / "run_a2b" / "losses.csv");
    const auto row_a = first_row(dir / "run_a2a" / "losses.csv");
    CHECK(row_a != row_b);
    const auto recon_a = row_a.substr(0, row_a.find(',', 2));
    const auto recon_b = row_b.substr(0, row_b.find(',', 2));
    CHECK(recon_a != recon_b);

    // determinism: identical reruns give identical logs
    auto again = run("train --data " + data + " --out " + (dir / "run_a2b_again").string() +
                     " --seed 9 --mode a2b --steps 10 --checkpoint-every 5" + kTinyModel);
    REQUIRE(again.exit_code == 0);
    CHECK(slurp(dir / "run_a2b" / "losses.csv") == slurp(dir / "run_a2b_again" / "losses.csv"));

    // resume from the midpoint: the tail of the loss log replays exactly;
    // the interrupted run dir keeps its checkpoint and partial loss log
    fs::create_directories(dir / "run_resume");
    fs::copy(dir / "run_a2b" / "ckpt_5.caae", dir / "run_resume" / "ckpt_5.caae");
    {
        std::ifstream in(dir / "run_a2b" / "losses.csv");
        std::ofstream out(dir / "run_resume" / "losses.csv");
        std::string line;
        for (int i = 0; i < 1 + 5 && std::getline(in, line); ++i) out << line << "\n";
        out << "7,0.1,0.2,0.3,0.4\n";  // stale row past the checkpoint; resume must drop it
    }
    auto resumed = run("train --data " + data + " --out " + (dir / "run_resume").string() +
                       " --seed 9 --mode a2b --steps 10 --checkpoint-every 5" + kTinyModel + " --resume " +
                       (dir / "run_resume" / "ckpt_5.caae").string());
    REQUIRE(resumed.exit_code == 0);
    CHECK(slurp(dir / "run_resume" / "losses.csv") == slurp(dir / "run_a2b" / "losses.csv"));
    CHECK(slurp(dir / "run_resume" / "ckpt_10.caae") == slurp(dir / "run_a2b" / "ckpt_10.caae"));
}

TEST_CASE("train: a diverging run aborts with exit code 1 and a diagnostic") {
    const auto dir = work_dir();
    const auto data = (dir / "data_a" / "manifest.jsonl").string();
    auto blown = run("train --data " + data + " --out " + (dir / "run_nan").string() +
                     " --seed 9 --mode a2a --steps 40 --lr-recon 1e18" + kTinyModel);
    CHECK(blown.exit_code == 1);
    CHECK(blown.output.find("non-finite") != std::string::npos);
    CHECK(blown.output.find("rolled back") != std::string::npos);
}

TEST_CASE("eval: subset protocol, all-labels dominance, usage errors") {
    const auto dir = work_dir();
    const auto data = (dir / "data_a" / "manifest.jsonl").string();
    const auto ckpt = (dir / "run_a2b" / "ckpt_10.caae").string();

    auto ev = run("eval --checkpoint " + ckpt + " --data " + data + " --out " + (dir / "eval").string() +
                  " --n-per-class 8 --all-labels --seed 11");
    REQUIRE(ev.exit_code == 0);
    nlohmann::json metrics = nlohmann::json::parse(slurp(dir / "eval" / "metrics.json"));
    const double subset_fullset = metrics["subset"]["fullset"]["accuracy_3class"].get<double>();
    const double all_labels = metrics["all_labels"]["accuracy_3class"].get<double>();
    CHECK(all_labels >= subset_fullset);  // optimality of the all-labels mapping
    CHECK(fs::exists(dir / "eval" / "metrics_subset.csv"));
    CHECK(fs::exists(dir / "eval" / "metrics_all_labels.csv"));
    CHECK(fs::exists(dir / "eval" / "mapping_subset.json"));

    auto missing = run("eval --checkpoint " + (dir / "nope.caae").string() + " --data " + data + " --out " +
                       (dir / "eval2").string());
    CHECK(missing.exit_code == 2);
    auto too_many = run("eval --checkpoint " + ckpt + " --data " + data + " --out " + (dir / "eval3").string() +
                        " --n-per-class 500");
    CHECK(too_many.exit_code == 2);
}

TEST_CASE("overlay: composite scene emits a PNG and a coverage CSV") {
    const auto dir = work_dir();
    const auto ckpt = (dir / "run_a2b" / "ckpt_10.caae").string();
    auto ov = run("overlay --checkpoint " + ckpt + " --composite 96 --mapping " +
                  (dir / "eval" / "mapping_subset.json").string() + " --out " + (dir / "overlay").string() +
                  " --seed 5");
    REQUIRE(ov.exit_code == 0);
    CHECK(fs::exists(dir / "overlay" / "figs" / "overlay.png"));
    CHECK(fs::exists(dir / "overlay" / "overlay_coverage.csv"));

    auto raw = run("overlay --checkpoint " + ckpt + " --composite 96 --clusters --out " +
                   (dir / "overlay_raw").string() + " --seed 5");
    REQUIRE(raw.exit_code == 0);
    CHECK(fs::exists(dir / "overlay_raw" / "figs" / "overlay_clusters.png"));

    auto neither = run("overlay --checkpoint " + ckpt + " --clusters --out " + (dir / "overlay_bad").string());
    CHECK(neither.exit_code == 2);
}

TEST_CASE("exemplars: grid image in the requested layout") {
    const auto dir = work_dir();
    const auto data = (dir / "data_a" / "manifest.jsonl").string();
    const auto ckpt = (dir / "run_a2b" / "ckpt_10.caae").string();
    auto ex = run("exemplars --checkpoint " + ckpt + " --data " + data + " --clusters 0..3 --top 5 --out " +
                  (dir / "ex").string());
    REQUIRE(ex.exit_code == 0);
    CHECK(fs::exists(dir / "ex" / "figs" / "exemplars.png"));
    CHECK(fs::exists(dir / "ex" / "exemplars.csv"));

    auto bad = run("exemplars --checkpoint " + ckpt + " --data " + data + " --clusters 0..9 --top 5 --out " +
                   (dir / "ex_bad").string());
    CHECK(bad.exit_code == 2);  // cluster 9 does not exist in a K=6 model
}

TEST_CASE("embed: scatter PNG plus CSV with the documented columns") {
    const auto dir = work_dir();
    const auto data = (dir / "data_a" / "manifest.jsonl").string();
    const auto ckpt = (dir / "run_a2b" / "ckpt_10.caae").string();
    auto em = run("embed --checkpoint " + ckpt + " --data " + data + " --max-n 36 --perplexity 8 --iters 300 --out " +
                  (dir / "embed").string() + " --seed 3");
    REQUIRE(em.exit_code == 0);
    CHECK(fs::exists(dir / "embed" / "figs" / "embedding.png"));
    std::ifstream csv(dir / "embed" / "embedding.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "id,x,y,cluster,class");
}

TEST_CASE("config file: unknown keys are rejected, flags override values") {
    const auto dir = work_dir();
    {
        std::ofstream cfg(dir / "bad.json");
        cfg << R"({"gen": {"patch_sz": 32}})";
    }
    auto bad = run("synth --config " + (dir / "bad.json").string() + " --out " + (dir / "cfged").string());
    CHECK(bad.exit_code == 2);
    CHECK(bad.output.find("patch_sz") != std::string::npos);

    {
        std::ofstream cfg(dir / "good.json");
        cfg << R"({"seed": 21, "gen": {"patch_size": 32, "counts": [4,4,4]}})";
    }
    auto good = run("synth --config " + (dir / "good.json").string() + " --out " + (dir / "cfged").string());
    REQUIRE(good.exit_code == 0);
    nlohmann::json echo = nlohmann::json::parse(slurp(dir / "cfged" / "config.echo"));
    CHECK(echo["seed"].get<int>() == 21);
    CHECK(echo["gen"]["patch_size"].get<int>() == 32);

    // a flag beats the file
    auto overridden = run("synth --config " + (dir / "good.json").string() + " --seed 99 --out " +
                          (dir / "cfged2").string());
    REQUIRE(overridden.exit_code == 0);
    nlohmann::json echo2 = nlohmann::json::parse(slurp(dir / "cfged2" / "config.echo"));
    CHECK(echo2["seed"].get<int>() == 99);
}
