#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cluegain/data.hpp"
#include "cluegain/gain.hpp"
#include "cluegain/matrix.hpp"
#include "cluegain/transfer.hpp"

namespace cluegain {

// Root mean squared error over masked (missing) cells only, in whatever
// units the inputs share.
double rmse_missing(const Matrix& truth, const Matrix& imputed, const Matrix& mask);

// Multinomial logistic regression trained by full-batch gradient descent on
// softmax cross-entropy with L2 on the weights. Weights start at zero, so
// the fit is deterministic for any seed.
class LogisticRegression {
public:
    LogisticRegression(std::size_t n_features, std::size_t n_classes);

    // scores: n x K matrix of class probabilities.
    Matrix predict_proba(const Matrix& features) const;

    std::size_t n_classes() const { return n_classes_; }

private:
    friend LogisticRegression train_logreg(const Matrix&, const std::vector<int>&, double, int,
                                           std::uint64_t, double);
    Matrix weights_;  // D x K
    std::vector<double> bias_;
    std::size_t n_classes_;
};

LogisticRegression train_logreg(const Matrix& features, const std::vector<int>& labels,
                                double l2, int epochs, std::uint64_t seed,
                                double learning_rate = 0.5);

// One-vs-rest AUROC per class via the rank statistic (ties count 0.5),
// macro-averaged over classes that appear in the labels.
double auroc_macro(const Matrix& scores, const std::vector<int>& labels);

// Stratified 5-fold cross-validated macro AUROC of a logistic regression on
// the given features.
double cross_validated_auroc(const Matrix& features, const std::vector<int>& labels,
                             int n_folds, double l2, int epochs, std::uint64_t seed);

struct TrialResult {
    double rmse_norm = 0.0;
    double rmse_raw = 0.0;
    std::optional<double> auroc;
    std::uint64_t trial_seed = 0;
    std::string strategy;
};

struct AggregateResult {
    double mean = 0.0;
    double stddev = 0.0;
    int n_trials = 0;

    static AggregateResult from(const std::vector<double>& values);
};

enum class ModelKind { gain, cluegain };

struct ExperimentModel {
    ModelKind kind = ModelKind::gain;
    TransferPlan plan;  // used when kind == cluegain

    std::string label() const;
};

// Bundles keyed by trial seed so one pre-training run can serve every
// strategy and miss rate of a sweep.
using PretrainCache = std::map<std::uint64_t, PretrainedBundle>;

struct RunTrialsResult {
    std::vector<TrialResult> trials;
    AggregateResult rmse_norm;
    AggregateResult rmse_raw;
    std::optional<AggregateResult> auroc;
};

struct EvaluationSettings {
    GainHyperparams hyper;
    std::optional<GainHyperparams> pretrain_hyper;  // defaults to hyper
    int logreg_epochs = 400;
    double logreg_l2 = 1e-3;
    int cv_folds = 5;
};

// The multi-trial protocol: per trial, draw a fresh MCAR mask on the
// complete truth table, train the configured model, impute, and score. The
// truth is normalized once; training only ever sees masked values.
RunTrialsResult run_trials(const DataTable& truth_raw,
                           const std::optional<DataTable>& source_raw,
                           const ExperimentModel& model, const EvaluationSettings& settings,
                           double miss_rate, int n_trials, std::uint64_t master_seed,
                           PretrainCache* cache = nullptr);

}  // namespace cluegain
