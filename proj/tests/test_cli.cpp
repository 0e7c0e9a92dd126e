#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cluegain/data.hpp"
#include "cluegain/rng.hpp"
#include "cluegain/transfer.hpp"
#include "support/synthetic.hpp"

#ifndef CLUEGAIN_BIN
#error "CLUEGAIN_BIN must point at the cluegain executable"
#endif

using namespace cluegain;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path log = dir / "last_run.log";
    const std::string command =
        std::string(CLUEGAIN_BIN) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(command.c_str());
    RunResult result;
    result.exit_code = WEXITSTATUS(status);
    std::ifstream in(log);
    std::stringstream buffer;
    buffer << in.rdbuf();
    result.output = buffer.str();
    return result;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_family_csv(const fs::path& path, std::size_t rows, std::uint64_t draw_seed,
                      double miss_rate = 0.0) {
    const DataTable table =
        testing::sample_gaussian_table({5, 2, 0.3, 404}, rows, draw_seed);
    RngStream miss(derive_seed(draw_seed, 0xcc));
    std::ofstream out(path);
    for (std::size_t j = 0; j < table.n_cols(); ++j) out << (j ? "," : "") << "c" << j;
    out << "\n";
    out.precision(8);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < table.n_cols(); ++j) {
            if (j) out << ",";
            if (miss_rate > 0.0 && miss.bernoulli(miss_rate)) continue;
            out << table.values.at(i, j);
        }
        out << "\n";
    }
}

std::string file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

TEST_CASE("pretrain writes a reloadable bundle and reruns byte-identically") {
    const fs::path dir = fresh_dir("cluegain_cli_pretrain");
    write_family_csv(dir / "source.csv", 120, 1);

    const std::string args = "pretrain --source " + (dir / "source.csv").string() +
                             " --iterations 40 --batch-size 32 --seed 9 --out-dir " +
                             (dir / "out").string();
    const RunResult first = run_cli(args, dir);
    CHECK(first.exit_code == 0);
    REQUIRE(fs::exists(dir / "out" / "bundle.cgb"));
    CHECK(fs::exists(dir / "out" / "pretrain_loss.csv"));

    const PretrainedBundle bundle = load_bundle((dir / "out" / "bundle.cgb").string());
    CHECK(bundle.generator_hidden.size() == 4);
    CHECK(bundle.source_dim == 5);

    const std::string before = file_bytes(dir / "out" / "bundle.cgb");
    const RunResult second = run_cli(args, dir);
    CHECK(second.exit_code == 0);
    CHECK(file_bytes(dir / "out" / "bundle.cgb") == before);

    fs::remove_all(dir);
}

TEST_CASE("pretrain refuses incomplete sources, naming the first missing cell") {
    const fs::path dir = fresh_dir("cluegain_cli_pretrain_bad");
    std::ofstream(dir / "holey.csv") << "a,b\n1,2\n,4\n";
    const RunResult result = run_cli(
        "pretrain --source " + (dir / "holey.csv").string() + " --iterations 5 --out-dir " +
            (dir / "out").string(),
        dir);
    CHECK(result.exit_code != 0);
    CHECK(result.output.find("row 2") != std::string::npos);
    CHECK(result.output.find("'a'") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("impute without gaps echoes the input values") {
    const fs::path dir = fresh_dir("cluegain_cli_impute_full");
    write_family_csv(dir / "target.csv", 30, 2);
    const RunResult result = run_cli(
        "impute --target " + (dir / "target.csv").string() +
            " --iterations 10 --batch-size 16 --seed 4 --out-dir " + (dir / "out").string(),
        dir);
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("imputed 0 of") != std::string::npos);

    // Every data line should match the input text exactly.
    std::ifstream original(dir / "target.csv");
    std::ifstream completed(dir / "out" / "completed.csv");
    std::string comment;
    std::getline(completed, comment);  // digest line
    std::string expect, got;
    while (std::getline(original, expect)) {
        REQUIRE(std::getline(completed, got));
        CHECK(got == expect);
    }
    fs::remove_all(dir);
}

TEST_CASE("impute fills gaps, via plain GAIN or a bundle") {
    const fs::path dir = fresh_dir("cluegain_cli_impute");
    write_family_csv(dir / "source.csv", 150, 3);
    write_family_csv(dir / "target.csv", 40, 4, 0.35);

    const RunResult pre = run_cli(
        "pretrain --source " + (dir / "source.csv").string() +
            " --iterations 60 --batch-size 32 --seed 5 --out-dir " + (dir / "out").string(),
        dir);
    REQUIRE(pre.exit_code == 0);

    SUBCASE("plain GAIN path") {
        const RunResult result = run_cli(
            "impute --target " + (dir / "target.csv").string() +
                " --iterations 40 --batch-size 16 --seed 6 --out-dir " +
                (dir / "gain_out").string(),
            dir);
        CHECK(result.exit_code == 0);
        const DataTable completed =
            load_csv((dir / "gain_out" / "completed.csv").string());
        CHECK(completed.is_complete());
    }
    SUBCASE("bundle + freeze_deep path") {
        const RunResult result = run_cli(
            "impute --target " + (dir / "target.csv").string() + " --bundle " +
                (dir / "out" / "bundle.cgb").string() +
                " --strategy freeze_deep --iterations 40 --batch-size 16 --seed 6 "
                "--out-dir " +
                (dir / "clue_out").string(),
            dir);
        CHECK(result.exit_code == 0);
        const DataTable completed =
            load_csv((dir / "clue_out" / "completed.csv").string());
        CHECK(completed.is_complete());
    }
    SUBCASE("bundle with contradictory --hidden-layers fails") {
        const RunResult result = run_cli(
            "impute --target " + (dir / "target.csv").string() + " --bundle " +
                (dir / "out" / "bundle.cgb").string() +
                " --hidden-layers 6 --iterations 5 --out-dir " + (dir / "bad").string(),
            dir);
        CHECK(result.exit_code == 64);
    }
    fs::remove_all(dir);
}

TEST_CASE("evaluate sweeps the full grid and reruns byte-identically") {
    const fs::path dir = fresh_dir("cluegain_cli_evaluate");
    write_family_csv(dir / "truth.csv", 60, 7);
    write_family_csv(dir / "source.csv", 120, 8);

    const std::string args =
        "evaluate --truth " + (dir / "truth.csv").string() + " --source " +
        (dir / "source.csv").string() +
        " --miss-rates 0.5 0.8 --strategies gain freeze_deep --trials 2 --iterations 30 "
        "--pretrain-iterations 30 --batch-size 16 --seed 12 --out-dir " +
        (dir / "out").string();
    const RunResult first = run_cli(args, dir);
    CHECK(first.exit_code == 0);

    std::ifstream in(dir / "out" / "metrics.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line.find("config_digest=") != std::string::npos);
    std::getline(in, line);
    CHECK(line == "strategy,miss_rate,metric,mean,std,n_trials");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty()) ++rows;
    }
    CHECK(rows == 8);  // 2 rates x 2 models x 2 metrics (no labels -> no auroc)

    const std::string before = file_bytes(dir / "out" / "metrics.csv");
    const RunResult second = run_cli(args, dir);
    CHECK(second.exit_code == 0);
    CHECK(file_bytes(dir / "out" / "metrics.csv") == before);
    fs::remove_all(dir);
}

TEST_CASE("similarity ranks candidates and encodes the winner in the exit code") {
    const fs::path dir = fresh_dir("cluegain_cli_similarity");
    write_family_csv(dir / "target.csv", 100, 9);
    write_family_csv(dir / "cand_same.csv", 40, 10);
    // A clearly different shape for the second candidate.
    {
        const DataTable other = testing::sample_uniform_table(40, 5, 11);
        std::ofstream out(dir / "cand_other.csv");
        for (std::size_t j = 0; j < 5; ++j) out << (j ? "," : "") << "u" << j;
        out << "\n";
        out.precision(8);
        for (std::size_t i = 0; i < 40; ++i) {
            for (std::size_t j = 0; j < 5; ++j) {
                out << (j ? "," : "") << other.values.at(i, j);
            }
            out << "\n";
        }
    }

    const RunResult result = run_cli(
        "similarity --target " + (dir / "target.csv").string() + " --candidates " +
            (dir / "cand_same.csv").string() + " " + (dir / "cand_other.csv").string() +
            " --miss-rate 0.7 --trials 1 --iterations 40 --pretrain-iterations 60 "
            "--batch-size 32 --seed 13 --out-dir " +
            (dir / "out").string(),
        dir);
    CHECK(result.exit_code < 2);  // 0-based index of the winner
    CHECK(result.output.find("most similar:") != std::string::npos);
    CHECK(fs::exists(dir / "out" / "similarity.csv"));

    SUBCASE("a single candidate is a usage error") {
        const RunResult bad = run_cli(
            "similarity --target " + (dir / "target.csv").string() + " --candidates " +
                (dir / "cand_same.csv").string() + " --trials 1 --iterations 5 --out-dir " +
                (dir / "bad").string(),
            dir);
        CHECK(bad.exit_code == 64);
    }
    fs::remove_all(dir);
}

TEST_CASE("config files stand in for flags, and flags override them") {
    const fs::path dir = fresh_dir("cluegain_cli_config");
    write_family_csv(dir / "truth.csv", 50, 14);

    std::ofstream(dir / "run.ini") << "[evaluate]\n"
                                   << "truth = " << (dir / "truth.csv").string() << "\n"
                                   << "miss-rates = 0.5 0.8\n"
                                   << "strategies = gain\n"
                                   << "trials = 2\n"
                                   << "iterations = 25\n"
                                   << "batch-size = 16\n"
                                   << "seed = 21\n"
                                   << "out-dir = " << (dir / "out_a").string() << "\n";

    const RunResult from_config =
        run_cli("--config " + (dir / "run.ini").string() + " evaluate", dir);
    CHECK(from_config.exit_code == 0);

    const RunResult from_flags = run_cli(
        "evaluate --truth " + (dir / "truth.csv").string() +
            " --miss-rates 0.5 0.8 --strategies gain --trials 2 --iterations 25 "
            "--batch-size 16 --seed 21 --out-dir " +
            (dir / "out_b").string(),
        dir);
    CHECK(from_flags.exit_code == 0);

    // Identical settings -> identical metric rows (the digest line differs:
    // it hashes the effective config including output paths).
    auto rows_after_comment = [](const fs::path& path) {
        std::ifstream in(path);
        std::string line, rest;
        std::getline(in, line);
        std::stringstream buffer;
        buffer << in.rdbuf();
        return buffer.str();
    };
    CHECK(rows_after_comment(dir / "out_a" / "metrics.csv") ==
          rows_after_comment(dir / "out_b" / "metrics.csv"));

    // Flag overrides the config file's out-dir.
    const RunResult overridden = run_cli("--config " + (dir / "run.ini").string() +
                                             " evaluate --out-dir " + (dir / "out_c").string(),
                                         dir);
    CHECK(overridden.exit_code == 0);
    CHECK(fs::exists(dir / "out_c" / "metrics.csv"));
    fs::remove_all(dir);
}
