#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cluegain/data.hpp"
#include "cluegain/errors.hpp"
#include "cluegain/evaluation.hpp"
#include "cluegain/gain.hpp"
#include "cluegain/similarity.hpp"
#include "cluegain/transfer.hpp"

namespace {

using namespace cluegain;

constexpr int kExitUsage = 64;
constexpr int kExitData = 65;
constexpr int kExitInternal = 70;

struct CommonOptions {
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::string schema_path;
    double drop_missing_above = 1.0;
};

struct HyperOptions {
    GainHyperparams hyper;
    int pretrain_iterations = -1;  // -1: same as iterations

    GainHyperparams pretrain_hyper() const {
        GainHyperparams pre = hyper;
        if (pretrain_iterations >= 0) pre.iterations = pretrain_iterations;
        return pre;
    }
};

void add_common_options(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--seed", opts.seed, "Master seed; every output is a pure function of it");
    cmd->add_option("--out-dir", opts.out_dir, "Directory for output files");
    cmd->add_option("--schema", opts.schema_path,
                    "Schema file declaring column kinds and the label column");
    cmd->add_option("--drop-missing-above", opts.drop_missing_above,
                    "Drop columns whose missing fraction exceeds this")
        ->check(CLI::Range(0.0, 1.0));
}

void add_hyper_options(CLI::App* cmd, HyperOptions& opts, bool with_pretrain) {
    cmd->add_option("--iterations", opts.hyper.iterations, "Training iterations")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--batch-size", opts.hyper.batch_size, "Mini-batch size")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--hint-rate", opts.hyper.hint_rate, "Hint reveal probability")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--alpha", opts.hyper.alpha, "Reconstruction weight in the generator loss")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--learning-rate", opts.hyper.learning_rate, "Adam learning rate")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--noise-high", opts.hyper.noise_high,
                    "Upper bound of the uniform imputation noise")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--hidden-layers", opts.hyper.hidden_count,
                    "Carried hidden layers per network")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--hidden-width", opts.hyper.hidden_width, "Neurons per hidden layer")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--binary-full-ce", opts.hyper.binary_full_cross_entropy,
                  "Use full cross-entropy for binary reconstruction");
    if (with_pretrain) {
        cmd->add_option("--pretrain-iterations", opts.pretrain_iterations,
                        "Pre-training iterations (default: same as --iterations)");
        cmd->add_option("--pretrain-miss-rate", opts.hyper.pretrain_miss_rate,
                        "Artificial masking rate during pre-training")
            ->check(CLI::Range(0.0, 1.0));
    }
}

DataTable load_table(const std::string& csv_path, const CommonOptions& opts) {
    DataTable table = opts.schema_path.empty()
                          ? load_csv(csv_path)
                          : load_csv(csv_path, load_schema(opts.schema_path));
    if (opts.drop_missing_above < 1.0) {
        table = drop_missing_above(table, opts.drop_missing_above);
    }
    return table;
}

std::uint64_t fnv1a_string(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// One comment line carried by every output file: the digest pins the whole
// effective configuration, the seed pins the randomness.
std::string config_comment(const CLI::App& app, std::uint64_t seed) {
    const std::string canonical = app.get_name() + "\n" + app.config_to_str(true, false);
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "# config_digest=%016llx seed=%llu",
                  static_cast<unsigned long long>(fnv1a_string(canonical)),
                  static_cast<unsigned long long>(seed));
    return buffer;
}

std::string format_double(double v) {
    char buffer[40];
    std::snprintf(buffer, sizeof(buffer), "%.10g", v);
    return buffer;
}

std::string output_path(const CommonOptions& opts, const std::string& name) {
    std::filesystem::create_directories(opts.out_dir);
    return (std::filesystem::path(opts.out_dir) / name).string();
}

TransferPlan plan_from(const std::string& strategy_name, int hidden_count, int append_count) {
    const auto strategy = parse_transfer_strategy(strategy_name);
    if (!strategy) {
        throw ConfigError("unknown strategy '" + strategy_name +
                          "' (expected direct_reuse, warm_start, append_layers, "
                          "freeze_shallow or freeze_deep)");
    }
    TransferPlan plan;
    plan.strategy = *strategy;
    plan.pretrain_hidden_count = hidden_count;
    plan.append_hidden_count = append_count;
    return plan;
}

// ---------------------------------------------------------------- pretrain

struct PretrainArgs {
    std::string source_csv;
    std::string bundle_name = "bundle.cgb";
    CommonOptions common;
    HyperOptions hyper;
};

int run_pretrain(const CLI::App& root, const PretrainArgs& args) {
    const DataTable source_raw = load_table(args.source_csv, args.common);
    if (const auto missing = source_raw.first_missing()) {
        throw InputError("source must be complete; first missing cell at row " +
                         std::to_string(missing->first + 1) + ", column '" +
                         source_raw.column_names[missing->second] + "'");
    }
    const auto [source, params] = normalize(source_raw);

    const PretrainResult result =
        pretrain(source, args.hyper.pretrain_hyper(), args.common.seed);
    const std::string bundle_path = output_path(args.common, args.bundle_name);
    save_bundle(result.bundle, bundle_path);
    write_loss_csv(result.log, output_path(args.common, "pretrain_loss.csv"),
                   config_comment(root, args.common.seed));

    std::cout << "wrote " << bundle_path << " (" << result.bundle.generator_hidden.size()
              << " hidden layers per network, source dim " << result.bundle.source_dim
              << ")\n";
    return 0;
}

// ------------------------------------------------------------------ impute

struct ImputeArgs {
    std::string target_csv;
    std::string bundle_path;
    std::string strategy = "freeze_deep";
    int append_hidden = 4;
    std::string out_name = "completed.csv";
    CommonOptions common;
    HyperOptions hyper;
};

// Rewrites the target CSV with missing feature cells replaced by imputed
// values; observed cells keep their original text.
void write_completed_csv(const std::string& in_path, const std::string& out_path,
                         const DataTable& table, const Matrix& completed,
                         const std::string& comment) {
    std::ifstream in(in_path);
    if (!in) throw DataError("cannot reopen '" + in_path + "'");
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot open '" + out_path + "' for writing");

    std::string line;
    std::getline(in, line);  // header
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    // Column index in the file -> feature index in the table (or -1).
    std::vector<int> feature_of(header.size(), -1);
    for (std::size_t j = 0; j < header.size(); ++j) {
        for (std::size_t f = 0; f < table.column_names.size(); ++f) {
            std::string trimmed = header[j];
            trimmed.erase(0, trimmed.find_first_not_of(" \t\r"));
            trimmed.erase(trimmed.find_last_not_of(" \t\r") + 1);
            if (trimmed == table.column_names[f]) {
                feature_of[j] = static_cast<int>(f);
                break;
            }
        }
    }

    out << comment << "\n" << line << "\n";
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (j) out << ",";
            const int f = j < feature_of.size() ? feature_of[j] : -1;
            if (f >= 0 && table.mask.at(row, static_cast<std::size_t>(f)) == 0.0) {
                out << format_double(completed.at(row, static_cast<std::size_t>(f)));
            } else {
                out << cells[j];
            }
        }
        out << "\n";
        ++row;
    }
}

int run_impute(const CLI::App& root, const ImputeArgs& args, bool hidden_layers_given) {
    DataTable target_raw = load_table(args.target_csv, args.common);
    const auto [target, params] = normalize(target_raw);
    const Matrix& mask = target.mask;

    std::size_t missing_cells = 0;
    for (double m : mask.storage()) {
        if (m == 0.0) ++missing_cells;
    }

    HyperOptions hyper = args.hyper;
    GainModel model = [&] {
        if (args.bundle_path.empty()) {
            return train_gain(target, mask, hyper.hyper, args.common.seed).model;
        }
        const PretrainedBundle bundle = load_bundle(args.bundle_path);
        const int bundle_hidden = static_cast<int>(bundle.generator_hidden.size());
        if (hidden_layers_given && hyper.hyper.hidden_count != bundle_hidden) {
            throw ConfigError("bundle carries " + std::to_string(bundle_hidden) +
                              " hidden layers but --hidden-layers asked for " +
                              std::to_string(hyper.hyper.hidden_count));
        }
        hyper.hyper.hidden_count = bundle_hidden;
        const TransferPlan plan =
            plan_from(args.strategy, bundle_hidden, args.append_hidden);
        return finetune(bundle, target, mask, plan, hyper.hyper, args.common.seed).model;
    }();

    RngStream noise(derive_seed(args.common.seed, 13));
    const Matrix completed = impute_full(model, target, mask, params, noise);

    const std::string out_path = output_path(args.common, args.out_name);
    write_completed_csv(args.target_csv, out_path, target_raw, completed,
                        config_comment(root, args.common.seed));
    std::cout << "imputed " << missing_cells << " of " << mask.size() << " cells -> "
              << out_path << "\n";
    return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string truth_csv;
    std::string source_csv;
    std::vector<double> miss_rates{0.6, 0.7, 0.8, 0.9};
    std::vector<std::string> strategies{"gain",           "direct_reuse",  "warm_start",
                                        "append_layers",  "freeze_shallow", "freeze_deep"};
    int trials = 10;
    int append_hidden = 4;
    std::string out_name = "metrics.csv";
    CommonOptions common;
    HyperOptions hyper;
};

void print_metric_table(const std::string& metric,
                        const std::vector<std::string>& strategies,
                        const std::vector<double>& miss_rates,
                        const std::map<std::pair<std::string, double>, AggregateResult>& cells) {
    std::printf("\n%s (mean +/- std)\n%-16s", metric.c_str(), "model");
    for (double rate : miss_rates) {
        char header[24];
        std::snprintf(header, sizeof(header), "%.0f%%", rate * 100.0);
        std::printf("  %-18s", header);
    }
    std::printf("\n");
    for (const std::string& strategy : strategies) {
        std::printf("%-16s", strategy.c_str());
        for (double rate : miss_rates) {
            const auto it = cells.find({strategy, rate});
            if (it == cells.end()) {
                std::printf("  %-18s", "-");
            } else {
                char cell[40];
                std::snprintf(cell, sizeof(cell), "%.4f +/- %.4f", it->second.mean,
                              it->second.stddev);
                std::printf("  %-18s", cell);
            }
        }
        std::printf("\n");
    }
}

int run_evaluate(const CLI::App& root, const EvaluateArgs& args) {
    const DataTable truth = load_table(args.truth_csv, args.common);

    bool needs_source = false;
    std::vector<ExperimentModel> models;
    for (const std::string& name : args.strategies) {
        ExperimentModel model;
        if (name == "gain") {
            model.kind = ModelKind::gain;
        } else {
            model.kind = ModelKind::cluegain;
            model.plan = plan_from(name, args.hyper.hyper.hidden_count, args.append_hidden);
            needs_source = true;
        }
        models.push_back(model);
    }
    std::optional<DataTable> source;
    if (needs_source) {
        if (args.source_csv.empty()) {
            throw ConfigError("transfer strategies in --strategies need --source");
        }
        source = load_table(args.source_csv, args.common);
    }

    EvaluationSettings settings;
    settings.hyper = args.hyper.hyper;
    settings.pretrain_hyper = args.hyper.pretrain_hyper();

    const std::string comment = config_comment(root, args.common.seed);
    std::ofstream out(output_path(args.common, args.out_name));
    if (!out) throw DataError("cannot open metrics output for writing");
    out << comment << "\n";
    out << "strategy,miss_rate,metric,mean,std,n_trials\n";

    std::map<std::pair<std::string, double>, AggregateResult> rmse_cells, auroc_cells;
    PretrainCache cache;
    for (double miss_rate : args.miss_rates) {
        for (const ExperimentModel& model : models) {
            const RunTrialsResult result =
                run_trials(truth, source, model, settings, miss_rate, args.trials,
                           args.common.seed, &cache);
            const std::string label = model.label();
            const auto emit = [&](const std::string& metric, const AggregateResult& agg) {
                out << label << "," << format_double(miss_rate) << "," << metric << ","
                    << format_double(agg.mean) << "," << format_double(agg.stddev) << ","
                    << agg.n_trials << "\n";
            };
            emit("rmse_norm", result.rmse_norm);
            emit("rmse_raw", result.rmse_raw);
            rmse_cells[{label, miss_rate}] = result.rmse_norm;
            if (result.auroc) {
                emit("auroc", *result.auroc);
                auroc_cells[{label, miss_rate}] = *result.auroc;
            }
            std::cout << "done: " << label << " @ miss " << miss_rate << " (rmse "
                      << format_double(result.rmse_norm.mean) << ")\n";
        }
    }

    std::vector<std::string> labels;
    for (const ExperimentModel& model : models) labels.push_back(model.label());
    print_metric_table("RMSE on missing cells, normalized units", labels, args.miss_rates,
                       rmse_cells);
    if (!auroc_cells.empty()) {
        print_metric_table("Post-imputation macro AUROC (5-fold CV)", labels, args.miss_rates,
                           auroc_cells);
    }
    return 0;
}

// -------------------------------------------------------------- similarity

struct SimilarityArgs {
    std::string target_csv;
    std::vector<std::string> candidate_csvs;
    double miss_rate = 0.8;
    std::string strategy = "freeze_deep";
    int append_hidden = 4;
    int trials = 10;
    std::string out_name = "similarity.csv";
    CommonOptions common;
    HyperOptions hyper;
};

int run_similarity(const CLI::App& root, const SimilarityArgs& args) {
    if (args.candidate_csvs.size() < 2) {
        throw ConfigError("similarity needs at least 2 candidate CSVs");
    }
    const DataTable target = load_table(args.target_csv, args.common);
    std::vector<DataTable> candidates;
    std::vector<std::string> names;
    for (const std::string& path : args.candidate_csvs) {
        // Candidate schemas are inferred; the target's schema file does not
        // apply to tables with different columns.
        CommonOptions cand_opts = args.common;
        cand_opts.schema_path.clear();
        candidates.push_back(load_table(path, cand_opts));
        names.push_back(std::filesystem::path(path).stem().string());
    }

    const TransferPlan plan =
        plan_from(args.strategy, args.hyper.hyper.hidden_count, args.append_hidden);
    const SimilarityReport report = measure_similarity(
        target, candidates, names, args.miss_rate, plan, args.hyper.hyper,
        args.hyper.pretrain_hyper(), args.trials, args.common.seed);

    std::ofstream out(output_path(args.common, args.out_name));
    if (!out) throw DataError("cannot open similarity output for writing");
    out << config_comment(root, args.common.seed) << "\n";
    out << "candidate,score_mean,score_std,n_trials,rank\n";
    std::vector<std::size_t> rank_of(report.candidates.size());
    for (std::size_t r = 0; r < report.ranking.size(); ++r) rank_of[report.ranking[r]] = r + 1;
    for (std::size_t c = 0; c < report.candidates.size(); ++c) {
        const CandidateScore& cand = report.candidates[c];
        out << cand.name << "," << format_double(cand.score.mean) << ","
            << format_double(cand.score.stddev) << "," << cand.score.n_trials << ","
            << rank_of[c] << "\n";
    }

    std::printf("\nrank  %-20s  score (gain RMSE - transfer RMSE)\n", "candidate");
    for (std::size_t r = 0; r < report.ranking.size(); ++r) {
        const CandidateScore& cand = report.candidates[report.ranking[r]];
        std::printf("%4zu  %-20s  %.4f +/- %.4f\n", r + 1, cand.name.c_str(),
                    cand.score.mean, cand.score.stddev);
    }
    std::cout << "most similar: " << report.top().name << "\n";
    // Scripting contract: success exit code is the 0-based index of the top
    // candidate; real errors use codes >= 64.
    return static_cast<int>(report.ranking.front());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GAIN/ClueGAIN tabular imputation toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI config with one section per subcommand");
    app.get_config_formatter_base()->section("");

    PretrainArgs pretrain_args;
    CLI::App* cmd_pretrain =
        app.add_subcommand("pretrain", "Train on a complete source table and save a bundle");
    cmd_pretrain->add_option("--source", pretrain_args.source_csv, "Complete source CSV")
        ->required();
    cmd_pretrain->add_option("--bundle-out", pretrain_args.bundle_name,
                             "Bundle file name inside --out-dir");
    add_common_options(cmd_pretrain, pretrain_args.common);
    add_hyper_options(cmd_pretrain, pretrain_args.hyper, true);

    ImputeArgs impute_args;
    CLI::App* cmd_impute =
        app.add_subcommand("impute", "Complete a target CSV's missing cells");
    cmd_impute->add_option("--target", impute_args.target_csv, "Target CSV with gaps")
        ->required();
    cmd_impute->add_option("--bundle", impute_args.bundle_path,
                           "Pretrained bundle (omit for plain GAIN)");
    cmd_impute->add_option("--strategy", impute_args.strategy,
                           "Fine-tuning strategy when a bundle is given");
    cmd_impute->add_option("--append-hidden", impute_args.append_hidden,
                           "Appended hidden layers for append_layers");
    cmd_impute->add_option("--out", impute_args.out_name, "Output CSV name inside --out-dir");
    add_common_options(cmd_impute, impute_args.common);
    add_hyper_options(cmd_impute, impute_args.hyper, false);

    EvaluateArgs evaluate_args;
    CLI::App* cmd_evaluate = app.add_subcommand(
        "evaluate", "Multi-trial RMSE/AUROC sweep over miss rates and strategies");
    cmd_evaluate->add_option("--truth", evaluate_args.truth_csv, "Complete ground-truth CSV")
        ->required();
    cmd_evaluate->add_option("--source", evaluate_args.source_csv,
                             "Complete source CSV for transfer strategies");
    cmd_evaluate->add_option("--miss-rates", evaluate_args.miss_rates, "Miss rates to sweep");
    cmd_evaluate->add_option("--strategies", evaluate_args.strategies,
                             "Models to sweep: gain and/or transfer strategies");
    cmd_evaluate->add_option("--trials", evaluate_args.trials, "Trials per sweep cell")
        ->check(CLI::PositiveNumber);
    cmd_evaluate->add_option("--append-hidden", evaluate_args.append_hidden,
                             "Appended hidden layers for append_layers");
    cmd_evaluate->add_option("--out", evaluate_args.out_name,
                             "Metrics CSV name inside --out-dir");
    add_common_options(cmd_evaluate, evaluate_args.common);
    add_hyper_options(cmd_evaluate, evaluate_args.hyper, true);

    SimilarityArgs similarity_args;
    CLI::App* cmd_similarity = app.add_subcommand(
        "similarity", "Rank candidate datasets by transfer gain from the target");
    cmd_similarity->add_option("--target", similarity_args.target_csv,
                               "Complete target CSV (the pre-training set)")
        ->required();
    cmd_similarity->add_option("--candidates", similarity_args.candidate_csvs,
                               "Two or more complete candidate CSVs");
    cmd_similarity->add_option("--miss-rate", similarity_args.miss_rate,
                               "Masking rate applied to each candidate");
    cmd_similarity->add_option("--strategy", similarity_args.strategy,
                               "Fine-tuning strategy for the transfer side");
    cmd_similarity->add_option("--append-hidden", similarity_args.append_hidden,
                               "Appended hidden layers for append_layers");
    cmd_similarity->add_option("--trials", similarity_args.trials, "Trials per candidate")
        ->check(CLI::PositiveNumber);
    cmd_similarity->add_option("--out", similarity_args.out_name,
                               "Report CSV name inside --out-dir");
    add_common_options(cmd_similarity, similarity_args.common);
    add_hyper_options(cmd_similarity, similarity_args.hyper, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_pretrain->parsed()) return run_pretrain(app, pretrain_args);
        if (cmd_impute->parsed()) {
            const bool hidden_given =
                cmd_impute->get_option("--hidden-layers")->count() > 0;
            return run_impute(app, impute_args, hidden_given);
        }
        if (cmd_evaluate->parsed()) return run_evaluate(app, evaluate_args);
        if (cmd_similarity->parsed()) return run_similarity(app, similarity_args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitData;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitUsage;
}
