#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cluegain/data.hpp"
#include "cluegain/evaluation.hpp"
#include "cluegain/gain.hpp"
#include "cluegain/transfer.hpp"

namespace cluegain {

// Transfer gain: how much pre-training helped on this candidate. Positive
// means the transfer model beat the plain baseline.
double score_pair(double rmse_gain, double rmse_clue);

struct CandidateScore {
    std::string name;
    AggregateResult score;
    std::vector<double> per_trial;
};

struct SimilarityReport {
    std::vector<CandidateScore> candidates;  // input order
    std::vector<std::size_t> ranking;        // candidate indices, best first
    double miss_rate = 0.0;
    TransferPlan plan;
    int n_trials = 0;
    std::uint64_t master_seed = 0;

    const CandidateScore& top() const { return candidates[ranking.front()]; }
};

// Ranks candidates by how much a model pre-trained on the target improves
// imputation on each candidate over an identically trained baseline. Per
// trial one pre-training run is shared across all candidates; per
// (candidate, trial) the baseline and the transfer model see the same mask
// and the same draw sequences.
SimilarityReport measure_similarity(const DataTable& target_raw,
                                    const std::vector<DataTable>& candidates_raw,
                                    const std::vector<std::string>& candidate_names,
                                    double miss_rate, const TransferPlan& plan,
                                    const GainHyperparams& hyper,
                                    const std::optional<GainHyperparams>& pretrain_hyper,
                                    int n_trials, std::uint64_t master_seed);

}  // namespace cluegain
