#include "cluegain/similarity.hpp"

#include <algorithm>
#include <numeric>

#include "cluegain/errors.hpp"

namespace cluegain {

double score_pair(double rmse_gain, double rmse_clue) {
    if (rmse_gain < 0.0 || rmse_clue < 0.0) throw InputError("score_pair: RMSE must be >= 0");
    return rmse_gain - rmse_clue;
}

SimilarityReport measure_similarity(const DataTable& target_raw,
                                    const std::vector<DataTable>& candidates_raw,
                                    const std::vector<std::string>& candidate_names,
                                    double miss_rate, const TransferPlan& plan,
                                    const GainHyperparams& hyper,
                                    const std::optional<GainHyperparams>& pretrain_hyper,
                                    int n_trials, std::uint64_t master_seed) {
    if (candidates_raw.size() != candidate_names.size()) {
        throw ConfigError("measure_similarity: candidate names do not match tables");
    }
    if (candidates_raw.empty()) throw ConfigError("measure_similarity: no candidates");
    if (n_trials < 1) throw ConfigError("measure_similarity: n_trials must be >= 1");
    if (miss_rate <= 0.0 || miss_rate >= 1.0) {
        throw ConfigError("measure_similarity: miss_rate must lie in (0,1)");
    }
    if (const auto missing = target_raw.first_missing()) {
        throw InputError(
            "measure_similarity: target must be complete; first missing cell at row " +
            std::to_string(missing->first + 1) + ", column '" +
            target_raw.column_names[missing->second] + "'");
    }
    for (std::size_t c = 0; c < candidates_raw.size(); ++c) {
        if (!candidates_raw[c].is_complete()) {
            throw InputError("measure_similarity: candidate '" + candidate_names[c] +
                             "' must be complete to score imputation against it");
        }
    }

    const DataTable target_norm = normalize(target_raw).first;
    const GainHyperparams pre_hyper = pretrain_hyper.value_or(hyper);

    std::vector<DataTable> cand_norm;
    cand_norm.reserve(candidates_raw.size());
    for (const DataTable& cand : candidates_raw) cand_norm.push_back(normalize(cand).first);

    SimilarityReport report;
    report.miss_rate = miss_rate;
    report.plan = plan;
    report.n_trials = n_trials;
    report.master_seed = master_seed;
    report.candidates.resize(candidates_raw.size());
    for (std::size_t c = 0; c < candidates_raw.size(); ++c) {
        report.candidates[c].name = candidate_names[c];
    }

    for (int trial = 0; trial < n_trials; ++trial) {
        // Step 1: one pre-training on the target, shared by all candidates.
        const std::uint64_t pretrain_seed =
            derive_seed(master_seed, 0x9e7ull, static_cast<std::uint64_t>(trial) + 1);
        const PretrainedBundle bundle = pretrain(target_norm, pre_hyper, pretrain_seed).bundle;

        for (std::size_t c = 0; c < cand_norm.size(); ++c) {
            const DataTable& cand = cand_norm[c];
            // Both models below re-derive this exact stream family, so they
            // train against the same mask with the same draw sequences.
            const std::uint64_t cell_seed =
                derive_seed(master_seed, c + 1, static_cast<std::uint64_t>(trial) + 1);
            RngStreams streams = RngStreams::from_seed(cell_seed);
            const Matrix mask =
                generate_mcar_mask(cand.n_rows(), cand.n_cols(), miss_rate, streams.mask);

            const TrainResult tuned = finetune(bundle, cand, mask, plan, hyper, cell_seed);
            RngStream clue_noise(derive_seed(cell_seed, 21));
            const double rmse_clue = rmse_missing(
                cand.values,
                impute_full_normalized(tuned.model, cand.values, mask, clue_noise), mask);

            const TrainResult baseline = train_gain(cand, mask, hyper, cell_seed);
            RngStream gain_noise(derive_seed(cell_seed, 21));
            const double rmse_gain = rmse_missing(
                cand.values,
                impute_full_normalized(baseline.model, cand.values, mask, gain_noise), mask);

            report.candidates[c].per_trial.push_back(score_pair(rmse_gain, rmse_clue));
        }
    }

    for (CandidateScore& cand : report.candidates) {
        cand.score = AggregateResult::from(cand.per_trial);
    }
    report.ranking.resize(report.candidates.size());
    std::iota(report.ranking.begin(), report.ranking.end(), 0);
    std::stable_sort(report.ranking.begin(), report.ranking.end(),
                     [&](std::size_t a, std::size_t b) {
                         return report.candidates[a].score.mean >
                                report.candidates[b].score.mean;
                     });
    return report;
}

}  // namespace cluegain
