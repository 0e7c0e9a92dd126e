#include "cluegain/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "cluegain/errors.hpp"

namespace cluegain {

double rmse_missing(const Matrix& truth, const Matrix& imputed, const Matrix& mask) {
    if (!truth.same_shape(imputed) || !truth.same_shape(mask)) {
        throw InputError("rmse_missing: shape mismatch");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (mask.storage()[i] != 0.0) continue;
        const double diff = truth.storage()[i] - imputed.storage()[i];
        sum += diff * diff;
        ++count;
    }
    if (count == 0) throw InputError("rmse_missing: mask has no missing cells");
    return std::sqrt(sum / static_cast<double>(count));
}

LogisticRegression::LogisticRegression(std::size_t n_features, std::size_t n_classes)
    : weights_(n_features, n_classes), bias_(n_classes, 0.0), n_classes_(n_classes) {}

Matrix LogisticRegression::predict_proba(const Matrix& features) const {
    if (features.cols() != weights_.rows()) {
        throw InputError("predict_proba: feature width does not match model");
    }
    Matrix logits = matmul(features, weights_);
    Matrix probs(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double maxv = -1e300;
        for (std::size_t k = 0; k < n_classes_; ++k) {
            logits.at(i, k) += bias_[k];
            maxv = std::max(maxv, logits.at(i, k));
        }
        double denom = 0.0;
        for (std::size_t k = 0; k < n_classes_; ++k) {
            probs.at(i, k) = std::exp(logits.at(i, k) - maxv);
            denom += probs.at(i, k);
        }
        for (std::size_t k = 0; k < n_classes_; ++k) probs.at(i, k) /= denom;
    }
    return probs;
}

LogisticRegression train_logreg(const Matrix& features, const std::vector<int>& labels,
                                double l2, int epochs, std::uint64_t seed,
                                double learning_rate) {
    (void)seed;  // zero-init + full-batch descent is already deterministic
    if (features.rows() != labels.size()) {
        throw InputError("train_logreg: feature rows do not match label count");
    }
    if (!all_finite(features)) throw InputError("train_logreg: non-finite features");
    int max_label = -1;
    for (int y : labels) {
        if (y < 0) throw InputError("train_logreg: negative class id");
        max_label = std::max(max_label, y);
    }
    const std::size_t n_classes = static_cast<std::size_t>(max_label) + 1;
    std::set<int> distinct(labels.begin(), labels.end());
    if (distinct.size() < 2) throw ConfigError("train_logreg: need at least 2 classes");

    LogisticRegression model(features.cols(), n_classes);
    const std::size_t n = features.rows();
    for (int epoch = 0; epoch < epochs; ++epoch) {
        const Matrix probs = model.predict_proba(features);
        Matrix residual = probs;
        for (std::size_t i = 0; i < n; ++i) {
            residual.at(i, static_cast<std::size_t>(labels[i])) -= 1.0;
        }
        Matrix w_grad = matmul_tn(features, residual);
        const std::vector<double> b_grad = column_sums(residual);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < w_grad.size(); ++i) {
            w_grad.storage()[i] =
                w_grad.storage()[i] * inv_n + l2 * model.weights_.storage()[i];
        }
        for (std::size_t i = 0; i < model.weights_.size(); ++i) {
            model.weights_.storage()[i] -= learning_rate * w_grad.storage()[i];
        }
        for (std::size_t k = 0; k < n_classes; ++k) {
            model.bias_[k] -= learning_rate * b_grad[k] * inv_n;
        }
    }
    return model;
}

namespace {

// Rank-statistic AUROC for one class column; ties get average ranks.
double auroc_one_vs_rest(const Matrix& scores, const std::vector<int>& labels,
                         std::size_t cls) {
    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores.at(a, cls) < scores.at(b, cls);
    });

    double positive_rank_sum = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores.at(order[j], cls) == scores.at(order[i], cls)) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == static_cast<int>(cls)) {
                positive_rank_sum += avg_rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw InternalError("auroc: class has no positives or no negatives");
    }
    return (positive_rank_sum - 0.5 * static_cast<double>(n_pos) *
                                    static_cast<double>(n_pos + 1)) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace

double auroc_macro(const Matrix& scores, const std::vector<int>& labels) {
    if (scores.rows() != labels.size()) {
        throw InputError("auroc_macro: score rows do not match label count");
    }
    std::set<int> present(labels.begin(), labels.end());
    if (present.size() < 2) throw InputError("auroc_macro: labels hold a single class");
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t cls = 0; cls < scores.cols(); ++cls) {
        if (present.count(static_cast<int>(cls)) == 0) continue;  // absent class: skip
        total += auroc_one_vs_rest(scores, labels, cls);
        ++counted;
    }
    return total / static_cast<double>(counted);
}

double cross_validated_auroc(const Matrix& features, const std::vector<int>& labels,
                             int n_folds, double l2, int epochs, std::uint64_t seed) {
    if (n_folds < 2) throw ConfigError("cross_validated_auroc: need at least 2 folds");
    const std::size_t n = labels.size();
    RngStream stream(derive_seed(seed, 0xf01d5));

    // Stratified fold assignment: shuffle within each class, deal round-robin.
    std::vector<int> fold_of(n, 0);
    int max_label = *std::max_element(labels.begin(), labels.end());
    for (int cls = 0; cls <= max_label; ++cls) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i) {
            if (labels[i] == cls) members.push_back(i);
        }
        for (std::size_t i = 0; i + 1 < members.size(); ++i) {
            const std::size_t j = i + static_cast<std::size_t>(stream.below(members.size() - i));
            std::swap(members[i], members[j]);
        }
        for (std::size_t i = 0; i < members.size(); ++i) {
            fold_of[members[i]] = static_cast<int>(i % static_cast<std::size_t>(n_folds));
        }
    }

    double total = 0.0;
    for (int fold = 0; fold < n_folds; ++fold) {
        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < n; ++i) {
            (fold_of[i] == fold ? test_idx : train_idx).push_back(i);
        }
        if (train_idx.empty() || test_idx.empty()) {
            throw ConfigError("cross_validated_auroc: fold " + std::to_string(fold) +
                              " is empty; too few rows for " + std::to_string(n_folds) +
                              " folds");
        }
        std::vector<int> train_labels, test_labels;
        for (std::size_t i : train_idx) train_labels.push_back(labels[i]);
        for (std::size_t i : test_idx) test_labels.push_back(labels[i]);
        const LogisticRegression model =
            train_logreg(gather_rows(features, train_idx), train_labels, l2, epochs, seed);
        total += auroc_macro(model.predict_proba(gather_rows(features, test_idx)), test_labels);
    }
    return total / n_folds;
}

AggregateResult AggregateResult::from(const std::vector<double>& values) {
    AggregateResult agg;
    agg.n_trials = static_cast<int>(values.size());
    if (values.empty()) return agg;
    agg.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    double ss = 0.0;
    for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
    agg.stddev = std::sqrt(ss / values.size());
    return agg;
}

std::string ExperimentModel::label() const {
    return kind == ModelKind::gain ? "gain" : transfer_strategy_name(plan.strategy);
}

RunTrialsResult run_trials(const DataTable& truth_raw,
                           const std::optional<DataTable>& source_raw,
                           const ExperimentModel& model, const EvaluationSettings& settings,
                           double miss_rate, int n_trials, std::uint64_t master_seed,
                           PretrainCache* cache) {
    if (n_trials < 1) throw ConfigError("run_trials: n_trials must be >= 1");
    if (const auto missing = truth_raw.first_missing()) {
        throw InputError("run_trials: ground truth must be complete; first missing cell at row " +
                         std::to_string(missing->first + 1) + ", column '" +
                         truth_raw.column_names[missing->second] + "'");
    }
    if (model.kind == ModelKind::cluegain && !source_raw) {
        throw ConfigError("run_trials: transfer experiments need a source table");
    }

    auto [truth_norm, params] = normalize(truth_raw);
    std::optional<DataTable> source_norm;
    if (source_raw) source_norm = normalize(*source_raw).first;

    PretrainCache local_cache;
    PretrainCache& bundles = cache ? *cache : local_cache;

    RunTrialsResult result;
    std::vector<double> rmse_norm_values, rmse_raw_values, auroc_values;
    for (int trial = 0; trial < n_trials; ++trial) {
        const std::uint64_t trial_seed =
            derive_seed(master_seed, 0x7c1a15ull, static_cast<std::uint64_t>(trial) + 1);
        RngStreams streams = RngStreams::from_seed(trial_seed);

        const Matrix mask =
            generate_mcar_mask(truth_norm.n_rows(), truth_norm.n_cols(), miss_rate,
                               streams.mask);

        GainModel trained = [&] {
            if (model.kind == ModelKind::gain) {
                return train_gain(truth_norm, mask, settings.hyper, trial_seed).model;
            }
            auto it = bundles.find(trial_seed);
            if (it == bundles.end()) {
                const GainHyperparams pre_hyper =
                    settings.pretrain_hyper.value_or(settings.hyper);
                it = bundles
                         .emplace(trial_seed,
                                  pretrain(*source_norm, pre_hyper, derive_seed(trial_seed, 11))
                                      .bundle)
                         .first;
            }
            return finetune(it->second, truth_norm, mask, model.plan, settings.hyper,
                            trial_seed)
                .model;
        }();

        const Matrix imputed_norm =
            impute_full_normalized(trained, truth_norm.values, mask, streams.noise);
        TrialResult trial_result;
        trial_result.trial_seed = trial_seed;
        trial_result.strategy = model.label();
        trial_result.rmse_norm = rmse_missing(truth_norm.values, imputed_norm, mask);
        trial_result.rmse_raw =
            rmse_missing(truth_raw.values, denormalize(imputed_norm, params), mask);
        if (truth_raw.labels) {
            trial_result.auroc =
                cross_validated_auroc(imputed_norm, truth_raw.labels->ids, settings.cv_folds,
                                      settings.logreg_l2, settings.logreg_epochs, trial_seed);
            auroc_values.push_back(*trial_result.auroc);
        }
        rmse_norm_values.push_back(trial_result.rmse_norm);
        rmse_raw_values.push_back(trial_result.rmse_raw);
        result.trials.push_back(std::move(trial_result));
    }

    result.rmse_norm = AggregateResult::from(rmse_norm_values);
    result.rmse_raw = AggregateResult::from(rmse_raw_values);
    if (!auroc_values.empty()) result.auroc = AggregateResult::from(auroc_values);
    return result;
}

}  // namespace cluegain
