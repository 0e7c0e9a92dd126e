#include <doctest.h>

#include <cmath>

#include "cluegain/errors.hpp"
#include "cluegain/gain.hpp"
#include "support/gradient_check.hpp"
#include "support/synthetic.hpp"

using namespace cluegain;
using namespace cluegain::testing;

namespace {

GainHyperparams micro_hyper() {
    GainHyperparams hp;
    hp.batch_size = 8;
    hp.hidden_count = 2;
    hp.hidden_width = 4;
    hp.iterations = 50;
    return hp;
}

struct MicroBatch {
    Matrix x_tilde;
    Matrix mask;
    Matrix noise;
    Matrix hint;
    Matrix revealed;
};

MicroBatch random_batch(std::size_t rows, std::size_t d, std::uint64_t seed) {
    RngStream stream(seed);
    MicroBatch batch;
    batch.mask = Matrix(rows, d);
    for (double& m : batch.mask.storage()) m = stream.bernoulli(0.5) ? 1.0 : 0.0;
    Matrix values(rows, d);
    for (double& v : values.storage()) v = stream.uniform();
    batch.x_tilde = make_observed(values, batch.mask);
    batch.noise = sample_noise(rows, d, 0.01, stream);
    const HintSample hints = sample_hint(batch.mask, 0.7, stream);
    batch.hint = hints.hint;
    batch.revealed = hints.revealed;
    return batch;
}

}  // namespace

TEST_CASE("impute_batch composes Eq-style outputs") {
    RngStream init(5);
    const GainModel model =
        make_gain_model(3, std::vector<ColumnKind>(3, ColumnKind::continuous), micro_hyper(),
                        init);
    const MicroBatch batch = random_batch(6, 3, 11);

    SUBCASE("mask all ones returns X-tilde untouched") {
        const Matrix ones(6, 3, 1.0);
        const auto result = impute_batch(model, batch.x_tilde, ones, batch.noise);
        CHECK(result.composite == batch.x_tilde);
    }
    SUBCASE("mask all zeros returns the generator output") {
        const Matrix zeros(6, 3, 0.0);
        const auto result = impute_batch(model, batch.x_tilde, zeros, batch.noise);
        CHECK(result.composite == result.generated);
    }
    SUBCASE("composite agrees with X-tilde exactly on observed cells") {
        const auto result = impute_batch(model, batch.x_tilde, batch.mask, batch.noise);
        for (std::size_t i = 0; i < batch.mask.size(); ++i) {
            if (batch.mask.storage()[i] == 1.0) {
                CHECK(result.composite.storage()[i] == batch.x_tilde.storage()[i]);
            } else {
                CHECK(result.composite.storage()[i] == result.generated.storage()[i]);
            }
        }
    }
}

TEST_CASE("observed-entry preservation holds on random models and masks") {
    RngStream outer(77);
    for (int round = 0; round < 100; ++round) {
        const std::size_t d = 2 + outer.below(5);
        const std::size_t rows = 1 + outer.below(6);
        GainHyperparams hp = micro_hyper();
        RngStream init(outer.next_u64());
        const GainModel model =
            make_gain_model(d, std::vector<ColumnKind>(d, ColumnKind::continuous), hp, init);
        const MicroBatch batch = random_batch(rows, d, outer.next_u64());
        const auto result = impute_batch(model, batch.x_tilde, batch.mask, batch.noise);
        for (std::size_t i = 0; i < batch.mask.size(); ++i) {
            if (batch.mask.storage()[i] == 1.0) {
                CHECK(result.composite.storage()[i] == batch.x_tilde.storage()[i]);
            }
        }
    }
}

TEST_CASE("reconstruction_term matches hand calculations") {
    CHECK(reconstruction_term(0.5, 0.3, ColumnKind::continuous) == doctest::Approx(0.04));
    CHECK(reconstruction_term(0.7, 0.7, ColumnKind::continuous) == 0.0);
    CHECK(reconstruction_term(0.0, 0.42, ColumnKind::binary) == 0.0);
    CHECK(reconstruction_term(1.0, 0.5, ColumnKind::binary) ==
          doctest::Approx(-std::log(0.5)));
    // Full cross-entropy variant adds the (1-x) term.
    CHECK(reconstruction_term(0.0, 0.5, ColumnKind::binary, true) ==
          doctest::Approx(-std::log(0.5)));
}

TEST_CASE("discriminator_loss matches Eq-style hand cases") {
    SUBCASE("confident correct prediction contributes nothing") {
        const Matrix m{{1.0}};
        const Matrix p{{1.0 - 1e-12}};
        const Matrix b{{0.0}};
        CHECK(discriminator_loss(m, p, b) == doctest::Approx(0.0).epsilon(1e-6));
    }
    SUBCASE("uninformed prediction scores log 0.5") {
        const Matrix m{{1.0}};
        const Matrix p{{0.5}};
        const Matrix b{{0.0}};
        CHECK(discriminator_loss(m, p, b) == doctest::Approx(std::log(0.5)));
    }
    SUBCASE("revealed cells are excluded entirely") {
        const Matrix m{{1.0, 0.0}};
        const Matrix p{{0.2, 0.9}};
        const Matrix b{{1.0, 1.0}};
        CHECK(discriminator_loss(m, p, b) == 0.0);
    }
}

TEST_CASE("discriminator_loss is permutation-invariant within the unrevealed set") {
    const Matrix m{{1.0, 0.0, 1.0}};
    const Matrix p{{0.8, 0.3, 0.6}};
    const Matrix b{{0.0, 0.0, 0.0}};
    const Matrix m2{{1.0, 1.0, 0.0}};
    const Matrix p2{{0.8, 0.6, 0.3}};
    CHECK(discriminator_loss(m, p, b) == doctest::Approx(discriminator_loss(m2, p2, b)));
}

TEST_CASE("generator_finetune_loss matches hand cases") {
    const std::vector<ColumnKind> kinds(2, ColumnKind::continuous);
    SUBCASE("all observed leaves only the reconstruction term") {
        const Matrix m(1, 2, 1.0);
        const Matrix p(1, 2, 0.5);
        const Matrix xt{{0.5, 0.9}};
        const Matrix xb{{0.3, 0.9}};
        const Matrix b(1, 2, 0.0);
        CHECK(generator_finetune_loss(m, p, xt, xb, b, 10.0, kinds) ==
              doctest::Approx(10.0 * 0.04));
    }
    SUBCASE("alpha 0 with everything missing is the pure adversarial sum") {
        const Matrix m(1, 2, 0.0);
        const Matrix p(1, 2, 0.5);
        const Matrix xt(1, 2, 0.0);
        const Matrix xb(1, 2, 0.4);
        const Matrix b(1, 2, 0.0);
        CHECK(generator_finetune_loss(m, p, xt, xb, b, 0.0, kinds) ==
              doctest::Approx(-2.0 * std::log(0.5)));
    }
    SUBCASE("perfect reconstruction and confident fooling drive the loss to zero") {
        const Matrix m{{1.0, 0.0}};
        const Matrix p{{0.5, 1.0 - 1e-12}};
        const Matrix xt{{0.7, 0.0}};
        const Matrix xb{{0.7, 0.2}};
        const Matrix b(1, 2, 0.0);
        CHECK(generator_finetune_loss(m, p, xt, xb, b, 10.0, kinds) ==
              doctest::Approx(0.0).epsilon(1e-6));
    }
}

TEST_CASE("discriminator analytic gradients match finite differences") {
    int checked = 0;
    for (std::uint64_t seed = 1; checked < 4 && seed <= 40; ++seed) {
        RngStream init(seed * 101);
        GainHyperparams hp = micro_hyper();
        GainModel model = make_gain_model(
            3, std::vector<ColumnKind>(3, ColumnKind::continuous), hp, init);
        const MicroBatch batch = random_batch(4, 3, seed * 103);
        const auto imputed = impute_batch(model, batch.x_tilde, batch.mask, batch.noise);

        const Matrix d_input = hconcat(imputed.composite, batch.hint);
        if (!kink_safe(forward(model.discriminator, d_input), model.discriminator)) continue;
        ++checked;

        const Gradients analytic =
            discriminator_step_gradients(model.discriminator, imputed.composite, batch.hint,
                                         batch.mask, batch.revealed);
        const auto loss = [&] {
            const Matrix probs = forward_values(model.discriminator, d_input);
            return -discriminator_loss(batch.mask, probs, batch.revealed);
        };
        const auto numeric = finite_difference_gradients(model.discriminator, loss);
        CHECK(max_relative_error(flatten_gradients(analytic), numeric) < 1e-4);
    }
    CHECK(checked == 4);
}

TEST_CASE("generator fine-tune analytic gradients match finite differences") {
    int checked = 0;
    for (std::uint64_t seed = 1; checked < 4 && seed <= 40; ++seed) {
        RngStream init(seed * 211);
        GainHyperparams hp = micro_hyper();
        std::vector<ColumnKind> kinds(3, ColumnKind::continuous);
        if (seed % 2 == 0) kinds[1] = ColumnKind::binary;
        GainModel model = make_gain_model(3, kinds, hp, init);
        MicroBatch batch = random_batch(4, 3, seed * 223);
        if (seed % 2 == 0) {
            // Keep the binary column's observed entries in {0,1}.
            for (std::size_t i = 0; i < batch.x_tilde.rows(); ++i) {
                batch.x_tilde.at(i, 1) = batch.mask.at(i, 1) == 1.0
                                             ? (batch.x_tilde.at(i, 1) > 0.5 ? 1.0 : 0.0)
                                             : 0.0;
            }
        }

        // The perturbation travels generator -> composite -> discriminator,
        // so both forward passes must be kink-safe.
        const auto imputed0 = impute_batch(model, batch.x_tilde, batch.mask, batch.noise);
        const Matrix g_input =
            hconcat(add(hadamard(batch.x_tilde, batch.mask),
                        hadamard(batch.noise, subtract(Matrix(4, 3, 1.0), batch.mask))),
                    batch.mask);
        const ForwardCache g_cache = forward(model.generator, g_input);
        const ForwardCache d_cache = forward(model.discriminator,
                                             hconcat(imputed0.composite, batch.hint));
        if (!kink_safe(g_cache, model.generator) || !kink_safe(d_cache, model.discriminator)) {
            continue;
        }
        ++checked;

        const Gradients analytic = generator_finetune_gradients(
            model, batch.x_tilde, batch.mask, batch.noise, batch.hint, batch.revealed);
        const auto loss = [&] {
            const auto imputed = impute_batch(model, batch.x_tilde, batch.mask, batch.noise);
            const Matrix probs = forward_values(model.discriminator,
                                                hconcat(imputed.composite, batch.hint));
            return generator_finetune_loss(batch.mask, probs, batch.x_tilde, imputed.generated,
                                           batch.revealed, model.hyper.alpha,
                                           model.column_kinds);
        };
        const auto numeric = finite_difference_gradients(model.generator, loss);
        CHECK(max_relative_error(flatten_gradients(analytic), numeric) < 1e-4);
    }
    CHECK(checked == 4);
}

TEST_CASE("generator pre-train analytic gradients match finite differences") {
    RngStream init(907);
    GainHyperparams hp = micro_hyper();
    GainModel model =
        make_gain_model(3, std::vector<ColumnKind>(3, ColumnKind::continuous), hp, init);
    RngStream stream(911);
    Matrix x_true(5, 3);
    for (double& v : x_true.storage()) v = stream.uniform();
    const Matrix mask = generate_mcar_mask(5, 3, 0.5, stream);
    const Matrix noise = sample_noise(5, 3, 0.01, stream);

    const Gradients analytic = generator_pretrain_gradients(model, x_true, mask, noise);
    const auto loss = [&] {
        const Matrix x_tilde = make_observed(x_true, mask);
        const auto imputed = impute_batch(model, x_tilde, mask, noise);
        return generator_pretrain_loss(x_true, imputed.generated, model.column_kinds);
    };
    const auto numeric = finite_difference_gradients(model.generator, loss);
    CHECK(max_relative_error(flatten_gradients(analytic), numeric) < 1e-4);
}

TEST_CASE("train_gain with zero iterations returns the freshly initialized model") {
    const DataTable table = random_unit_table(20, 4, 31);
    GainHyperparams hp = micro_hyper();
    hp.iterations = 0;
    RngStream mask_stream(33);
    const Matrix mask = generate_mcar_mask(20, 4, 0.3, mask_stream);

    const TrainResult result = train_gain(table, mask, hp, 12345);
    CHECK(result.log.empty());

    RngStreams streams = RngStreams::from_seed(12345);
    const GainModel fresh = make_gain_model(4, table.column_kinds, hp, streams.init);
    CHECK(networks_bit_equal(result.model.generator, fresh.generator));
    CHECK(networks_bit_equal(result.model.discriminator, fresh.discriminator));
}

TEST_CASE("train_gain is bit-reproducible for a fixed seed") {
    const DataTable table = random_unit_table(40, 3, 37);
    GainHyperparams hp = micro_hyper();
    hp.iterations = 30;
    RngStream mask_stream(39);
    const Matrix mask = generate_mcar_mask(40, 3, 0.4, mask_stream);

    const TrainResult a = train_gain(table, mask, hp, 777);
    const TrainResult b = train_gain(table, mask, hp, 777);
    CHECK(networks_bit_equal(a.model.generator, b.model.generator));
    CHECK(networks_bit_equal(a.model.discriminator, b.model.discriminator));
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].d_loss == b.log[i].d_loss);
        CHECK(a.log[i].g_loss == b.log[i].g_loss);
    }
}

TEST_CASE("trained GAIN beats mean imputation on a correlated table") {
    // Two strongly correlated columns; the mean imputer ignores the
    // correlation, a working GAIN should not.
    RngStream stream(41);
    const std::size_t n = 500;
    Matrix values(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const double base = stream.gaussian();
        values.at(i, 0) = base;
        values.at(i, 1) = base + 0.1 * stream.gaussian();
    }
    DataTable table;
    table.values = values;
    table.mask = Matrix(n, 2, 1.0);
    table.column_kinds = {ColumnKind::continuous, ColumnKind::continuous};
    table.column_names = {"a", "b"};

    const auto [normalized, params] = normalize(table);
    RngStream mask_stream(43);
    const Matrix mask = generate_mcar_mask(n, 2, 0.3, mask_stream);

    GainHyperparams hp;
    hp.batch_size = 64;
    hp.iterations = 2000;
    const TrainResult result = train_gain(normalized, mask, hp, 4242);

    RngStream noise_stream(45);
    const Matrix imputed =
        impute_full_normalized(result.model, normalized.values, mask, noise_stream);

    // Independent oracle: column means over observed cells.
    Matrix mean_imputed = make_observed(normalized.values, mask);
    for (std::size_t j = 0; j < 2; ++j) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask.at(i, j) == 1.0) {
                sum += normalized.values.at(i, j);
                ++count;
            }
        }
        const double mean = sum / static_cast<double>(count);
        for (std::size_t i = 0; i < n; ++i) {
            if (mask.at(i, j) == 0.0) mean_imputed.at(i, j) = mean;
        }
    }

    double gain_sq = 0.0, mean_sq = 0.0;
    std::size_t missing = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask.storage()[i] != 0.0) continue;
        const double dg = normalized.values.storage()[i] - imputed.storage()[i];
        const double dm = normalized.values.storage()[i] - mean_imputed.storage()[i];
        gain_sq += dg * dg;
        mean_sq += dm * dm;
        ++missing;
    }
    REQUIRE(missing > 0);
    CHECK(std::sqrt(gain_sq / missing) < std::sqrt(mean_sq / missing));
}

TEST_CASE("impute_full preserves observed cells and hardens binary columns") {
    RngStream stream(47);
    DataTable table;
    const std::size_t n = 30;
    table.values = Matrix(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        table.values.at(i, 0) = stream.uniform(-5.0, 5.0);
        table.values.at(i, 1) = stream.uniform(10.0, 20.0);
        table.values.at(i, 2) = stream.bernoulli(0.5) ? 1.0 : 0.0;
    }
    table.mask = Matrix(n, 3, 1.0);
    table.column_kinds = {ColumnKind::continuous, ColumnKind::continuous, ColumnKind::binary};
    table.column_names = {"a", "b", "flag"};

    const auto [normalized, params] = normalize(table);
    GainHyperparams hp = micro_hyper();
    hp.iterations = 20;

    SUBCASE("mask all ones reproduces the table") {
        const Matrix mask(n, 3, 1.0);
        const TrainResult result = train_gain(normalized, mask, hp, 555);
        RngStream noise_stream(49);
        const Matrix completed =
            impute_full(result.model, normalized, mask, params, noise_stream);
        for (std::size_t i = 0; i < table.values.size(); ++i) {
            CHECK(std::abs(completed.storage()[i] - table.values.storage()[i]) < 1e-9);
        }
    }
    SUBCASE("binary outputs are hard 0/1 and everything is finite") {
        RngStream mask_stream(51);
        const Matrix mask = generate_mcar_mask(n, 3, 0.4, mask_stream);
        const TrainResult result = train_gain(normalized, mask, hp, 557);
        RngStream noise_stream(53);
        const Matrix completed =
            impute_full(result.model, normalized, mask, params, noise_stream);
        CHECK(all_finite(completed));
        for (std::size_t i = 0; i < n; ++i) {
            CHECK((completed.at(i, 2) == 0.0 || completed.at(i, 2) == 1.0));
        }
    }
}

TEST_CASE("increasing alpha does not worsen observed-cell reconstruction") {
    const DataTable table = random_unit_table(120, 3, 59);
    RngStream mask_stream(61);
    const Matrix mask = generate_mcar_mask(120, 3, 0.3, mask_stream);

    double previous = 1e18;
    for (const double alpha : {0.0, 10.0, 100.0}) {
        GainHyperparams hp = micro_hyper();
        hp.iterations = 400;
        hp.alpha = alpha;
        const TrainResult result = train_gain(table, mask, hp, 6464);
        RngStream noise_stream(63);
        const Matrix x_tilde = make_observed(table.values, mask);
        const Matrix noise = sample_noise(120, 3, hp.noise_high, noise_stream);
        const auto imputed = impute_batch(result.model, x_tilde, mask, noise);
        double observed_sq = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (mask.storage()[i] != 1.0) continue;
            const double diff = imputed.generated.storage()[i] - x_tilde.storage()[i];
            observed_sq += diff * diff;
            ++count;
        }
        const double rmse = std::sqrt(observed_sq / static_cast<double>(count));
        CHECK(rmse <= previous * 1.02);  // small tolerance for optimizer noise
        previous = rmse;
    }
}

TEST_CASE("loss curves are recorded once per iteration") {
    const DataTable table = random_unit_table(30, 3, 67);
    GainHyperparams hp = micro_hyper();
    hp.iterations = 25;
    RngStream mask_stream(69);
    const Matrix mask = generate_mcar_mask(30, 3, 0.3, mask_stream);
    const TrainResult result = train_gain(table, mask, hp, 888);
    REQUIRE(result.log.size() == 25);
    CHECK(result.log.front().iteration == 0);
    CHECK(result.log.back().iteration == 24);
}
