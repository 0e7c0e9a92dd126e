#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cluegain/data.hpp"
#include "cluegain/matrix.hpp"
#include "cluegain/nn.hpp"
#include "cluegain/rng.hpp"

namespace cluegain {

struct GainHyperparams {
    int batch_size = 128;
    double hint_rate = 0.9;
    double alpha = 10.0;               // reconstruction weight in the generator loss
    double learning_rate = 1e-3;
    int iterations = 2000;
    double noise_high = 0.01;          // imputation noise is Uniform(0, noise_high)
    double pretrain_miss_rate = 0.5;   // artificial masking rate while pre-training
    int hidden_count = 4;              // carried hidden layers per network
    int hidden_width = 10;
    // Binary reconstruction is -x log(x*) by default; this switches to full
    // cross-entropy including the (1-x) log(1-x*) term.
    bool binary_full_cross_entropy = false;
};

// Generator maps concat(noised X-tilde, M) to imputations; discriminator
// maps concat(X-hat, H) to per-component observation probabilities.
struct GainModel {
    Network generator;
    Network discriminator;
    GainHyperparams hyper;
    std::size_t data_dim = 0;
    std::vector<ColumnKind> column_kinds;
};

GainModel make_gain_model(std::size_t data_dim, const std::vector<ColumnKind>& kinds,
                          const GainHyperparams& hyper, RngStream& init_stream);

struct ImputeBatchResult {
    Matrix generated;  // X-bar, the generator's full output
    Matrix composite;  // X-hat, observed values kept and the rest imputed
};

ImputeBatchResult impute_batch(const GainModel& model, const Matrix& x_tilde,
                               const Matrix& mask, const Matrix& noise);

// Per-cell reconstruction penalty: squared error for continuous columns,
// -x log(x*) for binary ones (x* clamped away from 0).
double reconstruction_term(double x, double x_star, ColumnKind kind,
                           bool full_cross_entropy = false);

// Discriminator objective of the hint game, summed over unrevealed cells
// (b = 0) and averaged over batch rows. The discriminator maximizes this;
// training minimizes its negation.
double discriminator_loss(const Matrix& mask, const Matrix& mask_prob, const Matrix& revealed);

// Generator fine-tune objective: adversarial term on missing unrevealed
// cells plus alpha-weighted reconstruction on observed cells, averaged over
// batch rows.
double generator_finetune_loss(const Matrix& mask, const Matrix& mask_prob,
                               const Matrix& x_tilde, const Matrix& x_bar,
                               const Matrix& revealed, double alpha,
                               const std::vector<ColumnKind>& kinds,
                               bool full_cross_entropy = false);

// Pre-train generator objective: reconstruction against known true values on
// every component, averaged over batch rows.
double generator_pretrain_loss(const Matrix& x_true, const Matrix& x_bar,
                               const std::vector<ColumnKind>& kinds,
                               bool full_cross_entropy = false);

// Analytic parameter gradients for one discriminator update (of the
// minimized objective, i.e. the negated hint-game value).
Gradients discriminator_step_gradients(const Network& discriminator, const Matrix& x_hat,
                                       const Matrix& hint, const Matrix& mask,
                                       const Matrix& revealed, double* loss_out = nullptr);

// Analytic generator gradients for the fine-tune objective; flows back
// through the discriminator.
Gradients generator_finetune_gradients(const GainModel& model, const Matrix& x_tilde,
                                       const Matrix& mask, const Matrix& noise,
                                       const Matrix& hint, const Matrix& revealed,
                                       double* loss_out = nullptr);

// Analytic generator gradients for the pre-train objective.
Gradients generator_pretrain_gradients(const GainModel& model, const Matrix& x_true,
                                       const Matrix& mask, const Matrix& noise,
                                       double* loss_out = nullptr);

struct TrainLogEntry {
    int iteration = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
};

using TrainLog = std::vector<TrainLogEntry>;

void write_loss_csv(const TrainLog& log, const std::string& path,
                    const std::string& comment_line = "");

enum class GeneratorObjective {
    adversarial,         // GAIN / fine-tune: hint game + reconstruction on observed
    reconstruction_all,  // pre-train: reconstruction on all components
};

// Alternating loop: per iteration one Adam step on D, one on G. With
// reconstruction_all the mask argument is ignored and a fresh artificial
// mask is drawn per batch at hyper.pretrain_miss_rate.
TrainLog train_loop(GainModel& model, const Matrix& values_norm, const Matrix& mask,
                    GeneratorObjective objective, RngStreams& streams);

struct TrainResult {
    GainModel model;
    TrainLog log;
};

// Plain GAIN on a normalized table with the given observation mask.
TrainResult train_gain(const DataTable& normalized, const Matrix& mask,
                       const GainHyperparams& hyper, std::uint64_t seed);

// Whole-table imputation in normalized units; binary cells keep their raw
// probabilities.
Matrix impute_full_normalized(const GainModel& model, const Matrix& values_norm,
                              const Matrix& mask, RngStream& noise_stream);

// Whole-table imputation mapped back to original units; binary columns are
// thresholded at 0.5.
Matrix impute_full(const GainModel& model, const DataTable& normalized, const Matrix& mask,
                   const NormalizationParams& params, RngStream& noise_stream);

}  // namespace cluegain
