#include "cluegain/gain.hpp"

#include <cmath>
#include <fstream>

#include "cluegain/errors.hpp"

namespace cluegain {

namespace {

constexpr double kProbEpsilon = 1e-8;

double clamp_prob(double p) {
    if (p < kProbEpsilon) return kProbEpsilon;
    if (p > 1.0 - kProbEpsilon) return 1.0 - kProbEpsilon;
    return p;
}

void require_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) throw InputError(std::string(what) + ": shape mismatch");
}

// d reconstruction_term / d x_star, consistent with the clamped value.
double reconstruction_grad(double x, double x_star, ColumnKind kind, bool full_ce) {
    if (kind == ColumnKind::continuous) return -2.0 * (x - x_star);
    const double p = clamp_prob(x_star);
    double g = -x / p;
    if (full_ce) g += (1.0 - x) / (1.0 - p);
    return g;
}

Matrix assemble_generator_input(const Matrix& x_tilde, const Matrix& mask,
                                const Matrix& noise) {
    // Eq: M .* X-tilde + (1 - M) .* Z, concatenated with M.
    Matrix filled(x_tilde.rows(), x_tilde.cols());
    for (std::size_t i = 0; i < filled.size(); ++i) {
        const double m = mask.storage()[i];
        filled.storage()[i] = m * x_tilde.storage()[i] + (1.0 - m) * noise.storage()[i];
    }
    return hconcat(filled, mask);
}

}  // namespace

GainModel make_gain_model(std::size_t data_dim, const std::vector<ColumnKind>& kinds,
                          const GainHyperparams& hyper, RngStream& init_stream) {
    if (data_dim == 0) throw ConfigError("make_gain_model: data dimension must be positive");
    if (kinds.size() != data_dim) {
        throw ConfigError("make_gain_model: column kinds do not match data dimension");
    }
    if (hyper.batch_size < 1 || hyper.learning_rate <= 0.0 || hyper.alpha < 0.0 ||
        hyper.iterations < 0 || hyper.noise_high <= 0.0) {
        throw ConfigError("make_gain_model: hyperparameters out of range");
    }
    GainModel model;
    model.hyper = hyper;
    model.data_dim = data_dim;
    model.column_kinds = kinds;
    const auto widths = default_widths(2 * data_dim, data_dim, hyper.hidden_count,
                                       hyper.hidden_width);
    const auto acts = default_activations(hyper.hidden_count);
    model.generator = init_network(widths, acts, init_stream);
    model.discriminator = init_network(widths, acts, init_stream);
    return model;
}

ImputeBatchResult impute_batch(const GainModel& model, const Matrix& x_tilde,
                               const Matrix& mask, const Matrix& noise) {
    require_shape(x_tilde, mask, "impute_batch");
    require_shape(x_tilde, noise, "impute_batch");
    if (x_tilde.cols() != model.data_dim) {
        throw InputError("impute_batch: batch has " + std::to_string(x_tilde.cols()) +
                         " columns, model expects " + std::to_string(model.data_dim));
    }
    ImputeBatchResult result;
    result.generated =
        forward_values(model.generator, assemble_generator_input(x_tilde, mask, noise));
    result.composite = Matrix(x_tilde.rows(), x_tilde.cols());
    for (std::size_t i = 0; i < x_tilde.size(); ++i) {
        const double m = mask.storage()[i];
        result.composite.storage()[i] =
            m * x_tilde.storage()[i] + (1.0 - m) * result.generated.storage()[i];
    }
    return result;
}

double reconstruction_term(double x, double x_star, ColumnKind kind, bool full_cross_entropy) {
    if (kind == ColumnKind::continuous) {
        const double diff = x - x_star;
        return diff * diff;
    }
    const double p = clamp_prob(x_star);
    double loss = -x * std::log(p);
    if (full_cross_entropy) loss -= (1.0 - x) * std::log(1.0 - p);
    return loss;
}

double discriminator_loss(const Matrix& mask, const Matrix& mask_prob, const Matrix& revealed) {
    require_shape(mask, mask_prob, "discriminator_loss");
    require_shape(mask, revealed, "discriminator_loss");
    if (mask.rows() == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (revealed.storage()[i] != 0.0) continue;
        const double m = mask.storage()[i];
        const double p = clamp_prob(mask_prob.storage()[i]);
        total += m * std::log(p) + (1.0 - m) * std::log(1.0 - p);
    }
    return total / static_cast<double>(mask.rows());
}

double generator_finetune_loss(const Matrix& mask, const Matrix& mask_prob,
                               const Matrix& x_tilde, const Matrix& x_bar,
                               const Matrix& revealed, double alpha,
                               const std::vector<ColumnKind>& kinds, bool full_cross_entropy) {
    require_shape(mask, mask_prob, "generator_finetune_loss");
    require_shape(mask, x_tilde, "generator_finetune_loss");
    require_shape(mask, x_bar, "generator_finetune_loss");
    require_shape(mask, revealed, "generator_finetune_loss");
    if (kinds.size() != mask.cols()) {
        throw InputError("generator_finetune_loss: column kinds do not match batch width");
    }
    if (mask.rows() == 0) return 0.0;
    double adversarial = 0.0;
    double reconstruction = 0.0;
    for (std::size_t i = 0; i < mask.rows(); ++i) {
        for (std::size_t j = 0; j < mask.cols(); ++j) {
            const double m = mask.at(i, j);
            if (m == 0.0) {
                if (revealed.at(i, j) == 0.0) {
                    adversarial -= std::log(clamp_prob(mask_prob.at(i, j)));
                }
            } else {
                reconstruction += reconstruction_term(x_tilde.at(i, j), x_bar.at(i, j),
                                                      kinds[j], full_cross_entropy);
            }
        }
    }
    const double n = static_cast<double>(mask.rows());
    return adversarial / n + alpha * reconstruction / n;
}

double generator_pretrain_loss(const Matrix& x_true, const Matrix& x_bar,
                               const std::vector<ColumnKind>& kinds, bool full_cross_entropy) {
    require_shape(x_true, x_bar, "generator_pretrain_loss");
    if (kinds.size() != x_true.cols()) {
        throw InputError("generator_pretrain_loss: column kinds do not match batch width");
    }
    if (x_true.rows() == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < x_true.rows(); ++i) {
        for (std::size_t j = 0; j < x_true.cols(); ++j) {
            total += reconstruction_term(x_true.at(i, j), x_bar.at(i, j), kinds[j],
                                         full_cross_entropy);
        }
    }
    return total / static_cast<double>(x_true.rows());
}

Gradients discriminator_step_gradients(const Network& discriminator, const Matrix& x_hat,
                                       const Matrix& hint, const Matrix& mask,
                                       const Matrix& revealed, double* loss_out) {
    const Matrix d_input = hconcat(x_hat, hint);
    const ForwardCache cache = forward(discriminator, d_input);
    const Matrix& mask_prob = cache.output();
    if (loss_out) *loss_out = -discriminator_loss(mask, mask_prob, revealed);

    // Gradient of the minimized objective (negated hint-game value).
    Matrix grad(mask_prob.rows(), mask_prob.cols());
    const double n = static_cast<double>(mask.rows());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (revealed.storage()[i] != 0.0) continue;
        const double m = mask.storage()[i];
        const double p = clamp_prob(mask_prob.storage()[i]);
        grad.storage()[i] = -(m / p - (1.0 - m) / (1.0 - p)) / n;
    }
    return gradients(discriminator, grad, cache);
}

Gradients generator_finetune_gradients(const GainModel& model, const Matrix& x_tilde,
                                       const Matrix& mask, const Matrix& noise,
                                       const Matrix& hint, const Matrix& revealed,
                                       double* loss_out) {
    const std::size_t d = model.data_dim;
    const ForwardCache g_cache =
        forward(model.generator, assemble_generator_input(x_tilde, mask, noise));
    const Matrix& x_bar = g_cache.output();

    Matrix x_hat(x_bar.rows(), x_bar.cols());
    for (std::size_t i = 0; i < x_hat.size(); ++i) {
        const double m = mask.storage()[i];
        x_hat.storage()[i] = m * x_tilde.storage()[i] + (1.0 - m) * x_bar.storage()[i];
    }

    const ForwardCache d_cache = forward(model.discriminator, hconcat(x_hat, hint));
    const Matrix& mask_prob = d_cache.output();
    if (loss_out) {
        *loss_out = generator_finetune_loss(mask, mask_prob, x_tilde, x_bar, revealed,
                                            model.hyper.alpha, model.column_kinds,
                                            model.hyper.binary_full_cross_entropy);
    }

    const double n = static_cast<double>(mask.rows());

    // Adversarial part: dL/dMhat, then back through D to its input.
    Matrix d_out_grad(mask_prob.rows(), mask_prob.cols());
    for (std::size_t i = 0; i < d_out_grad.size(); ++i) {
        if (mask.storage()[i] != 0.0 || revealed.storage()[i] != 0.0) continue;
        d_out_grad.storage()[i] = -1.0 / (clamp_prob(mask_prob.storage()[i]) * n);
    }
    const Gradients through_d = gradients(model.discriminator, d_out_grad, d_cache);
    const Matrix d_input_grad = slice_cols(through_d.input, 0, d);

    // dL/dXbar: adversarial path only reaches missing cells (X-hat keeps
    // observed values), reconstruction only observed ones.
    Matrix x_bar_grad(x_bar.rows(), x_bar.cols());
    for (std::size_t i = 0; i < x_bar.rows(); ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double m = mask.at(i, j);
            double g = (1.0 - m) * d_input_grad.at(i, j);
            if (m != 0.0) {
                g += model.hyper.alpha *
                     reconstruction_grad(x_tilde.at(i, j), x_bar.at(i, j),
                                         model.column_kinds[j],
                                         model.hyper.binary_full_cross_entropy) /
                     n;
            }
            x_bar_grad.at(i, j) = g;
        }
    }
    return gradients(model.generator, x_bar_grad, g_cache);
}

Gradients generator_pretrain_gradients(const GainModel& model, const Matrix& x_true,
                                       const Matrix& mask, const Matrix& noise,
                                       double* loss_out) {
    const Matrix x_tilde = make_observed(x_true, mask);
    const ForwardCache g_cache =
        forward(model.generator, assemble_generator_input(x_tilde, mask, noise));
    const Matrix& x_bar = g_cache.output();
    if (loss_out) {
        *loss_out = generator_pretrain_loss(x_true, x_bar, model.column_kinds,
                                            model.hyper.binary_full_cross_entropy);
    }
    const double n = static_cast<double>(x_true.rows());
    Matrix x_bar_grad(x_bar.rows(), x_bar.cols());
    for (std::size_t i = 0; i < x_bar.rows(); ++i) {
        for (std::size_t j = 0; j < x_bar.cols(); ++j) {
            x_bar_grad.at(i, j) =
                reconstruction_grad(x_true.at(i, j), x_bar.at(i, j), model.column_kinds[j],
                                    model.hyper.binary_full_cross_entropy) /
                n;
        }
    }
    return gradients(model.generator, x_bar_grad, g_cache);
}

void write_loss_csv(const TrainLog& log, const std::string& path,
                    const std::string& comment_line) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    if (!comment_line.empty()) out << comment_line << "\n";
    out << "iteration,d_loss,g_loss\n";
    out.precision(10);
    for (const TrainLogEntry& entry : log) {
        out << entry.iteration << "," << entry.d_loss << "," << entry.g_loss << "\n";
    }
}

TrainLog train_loop(GainModel& model, const Matrix& values_norm, const Matrix& mask,
                    GeneratorObjective objective, RngStreams& streams) {
    const std::size_t n = values_norm.rows();
    const std::size_t d = values_norm.cols();
    if (d != model.data_dim) throw InputError("train_loop: table width does not match model");
    if (objective == GeneratorObjective::adversarial && !values_norm.same_shape(mask)) {
        throw InputError("train_loop: mask shape does not match table");
    }

    const GainHyperparams& hp = model.hyper;
    AdamState g_state = make_adam_state(model.generator, hp.learning_rate);
    AdamState d_state = make_adam_state(model.discriminator, hp.learning_rate);

    const Matrix x_tilde_full = objective == GeneratorObjective::adversarial
                                    ? make_observed(values_norm, mask)
                                    : Matrix();

    TrainLog log;
    log.reserve(static_cast<std::size_t>(hp.iterations));
    for (int iter = 0; iter < hp.iterations; ++iter) {
        const std::vector<std::size_t> idx =
            sample_batch(n, static_cast<std::size_t>(hp.batch_size), streams.batch);

        Matrix mask_b, x_tilde_b, x_true_b;
        if (objective == GeneratorObjective::adversarial) {
            mask_b = gather_rows(mask, idx);
            x_tilde_b = gather_rows(x_tilde_full, idx);
        } else {
            x_true_b = gather_rows(values_norm, idx);
            mask_b = generate_mcar_mask(idx.size(), d, hp.pretrain_miss_rate, streams.mask);
            x_tilde_b = make_observed(x_true_b, mask_b);
        }
        const Matrix noise = sample_noise(idx.size(), d, hp.noise_high, streams.noise);
        const HintSample hints = sample_hint(mask_b, hp.hint_rate, streams.hint);

        // Discriminator step on the current generator's output.
        const ImputeBatchResult imputed = impute_batch(model, x_tilde_b, mask_b, noise);
        double d_loss = 0.0;
        const Gradients d_grads =
            discriminator_step_gradients(model.discriminator, imputed.composite, hints.hint,
                                         mask_b, hints.revealed, &d_loss);
        adam_step(model.discriminator, d_grads, d_state);

        // Generator step against the just-updated discriminator.
        double g_loss = 0.0;
        const Gradients g_grads =
            objective == GeneratorObjective::adversarial
                ? generator_finetune_gradients(model, x_tilde_b, mask_b, noise, hints.hint,
                                               hints.revealed, &g_loss)
                : generator_pretrain_gradients(model, x_true_b, mask_b, noise, &g_loss);
        adam_step(model.generator, g_grads, g_state);

        if (!std::isfinite(d_loss) || !std::isfinite(g_loss)) {
            throw InternalError("training diverged at iteration " + std::to_string(iter) +
                                " (d_loss=" + std::to_string(d_loss) +
                                ", g_loss=" + std::to_string(g_loss) + ")");
        }
        log.push_back({iter, d_loss, g_loss});
    }
    return log;
}

TrainResult train_gain(const DataTable& normalized, const Matrix& mask,
                       const GainHyperparams& hyper, std::uint64_t seed) {
    RngStreams streams = RngStreams::from_seed(seed);
    TrainResult result;
    result.model =
        make_gain_model(normalized.n_cols(), normalized.column_kinds, hyper, streams.init);
    result.log = train_loop(result.model, normalized.values, mask,
                            GeneratorObjective::adversarial, streams);
    return result;
}

Matrix impute_full_normalized(const GainModel& model, const Matrix& values_norm,
                              const Matrix& mask, RngStream& noise_stream) {
    const Matrix x_tilde = make_observed(values_norm, mask);
    const Matrix noise =
        sample_noise(values_norm.rows(), values_norm.cols(), model.hyper.noise_high,
                     noise_stream);
    return impute_batch(model, x_tilde, mask, noise).composite;
}

Matrix impute_full(const GainModel& model, const DataTable& normalized, const Matrix& mask,
                   const NormalizationParams& params, RngStream& noise_stream) {
    if (normalized.n_cols() != model.data_dim) {
        throw InputError("impute_full: table width does not match model");
    }
    Matrix completed =
        denormalize(impute_full_normalized(model, normalized.values, mask, noise_stream),
                    params);
    for (std::size_t j = 0; j < model.column_kinds.size(); ++j) {
        if (model.column_kinds[j] != ColumnKind::binary) continue;
        for (std::size_t i = 0; i < completed.rows(); ++i) {
            completed.at(i, j) = completed.at(i, j) >= 0.5 ? 1.0 : 0.0;
        }
    }
    if (!all_finite(completed)) throw InternalError("impute_full produced non-finite values");
    return completed;
}

}  // namespace cluegain
