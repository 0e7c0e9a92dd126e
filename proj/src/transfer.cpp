#include "cluegain/transfer.hpp"

#include <cstring>
#include <fstream>

#include "cluegain/errors.hpp"

namespace cluegain {

namespace {

constexpr char kBundleMagic[8] = {'C', 'G', 'B', 'D', 'L', '0', '0', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw DataError("bundle file truncated");
    return value;
}

void write_hyper(std::ostream& out, const GainHyperparams& h) {
    write_pod(out, static_cast<std::int32_t>(h.batch_size));
    write_pod(out, h.hint_rate);
    write_pod(out, h.alpha);
    write_pod(out, h.learning_rate);
    write_pod(out, static_cast<std::int32_t>(h.iterations));
    write_pod(out, h.noise_high);
    write_pod(out, h.pretrain_miss_rate);
    write_pod(out, static_cast<std::int32_t>(h.hidden_count));
    write_pod(out, static_cast<std::int32_t>(h.hidden_width));
    write_pod(out, static_cast<std::uint8_t>(h.binary_full_cross_entropy ? 1 : 0));
}

GainHyperparams read_hyper(std::istream& in) {
    GainHyperparams h;
    h.batch_size = read_pod<std::int32_t>(in);
    h.hint_rate = read_pod<double>(in);
    h.alpha = read_pod<double>(in);
    h.learning_rate = read_pod<double>(in);
    h.iterations = read_pod<std::int32_t>(in);
    h.noise_high = read_pod<double>(in);
    h.pretrain_miss_rate = read_pod<double>(in);
    h.hidden_count = read_pod<std::int32_t>(in);
    h.hidden_width = read_pod<std::int32_t>(in);
    h.binary_full_cross_entropy = read_pod<std::uint8_t>(in) != 0;
    return h;
}

void check_hidden_chain(const std::vector<Layer>& hidden, const char* which) {
    if (hidden.empty()) throw ConfigError(std::string(which) + ": bundle has no hidden layers");
    for (std::size_t k = 0; k + 1 < hidden.size(); ++k) {
        if (hidden[k].fan_out() != hidden[k + 1].fan_in()) {
            throw ConfigError(std::string(which) + ": hidden layer chain broken at " +
                              std::to_string(k));
        }
    }
}

}  // namespace

const char* transfer_strategy_name(TransferStrategy s) {
    switch (s) {
        case TransferStrategy::direct_reuse: return "direct_reuse";
        case TransferStrategy::warm_start: return "warm_start";
        case TransferStrategy::append_layers: return "append_layers";
        case TransferStrategy::freeze_shallow: return "freeze_shallow";
        case TransferStrategy::freeze_deep: return "freeze_deep";
    }
    return "unknown";
}

std::optional<TransferStrategy> parse_transfer_strategy(const std::string& name) {
    if (name == "direct_reuse") return TransferStrategy::direct_reuse;
    if (name == "warm_start") return TransferStrategy::warm_start;
    if (name == "append_layers") return TransferStrategy::append_layers;
    if (name == "freeze_shallow") return TransferStrategy::freeze_shallow;
    if (name == "freeze_deep") return TransferStrategy::freeze_deep;
    return std::nullopt;
}

void save_bundle(const PretrainedBundle& bundle, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(kBundleMagic, sizeof(kBundleMagic));
    write_pod(out, bundle.source_schema_digest);
    write_pod(out, bundle.source_dim);
    write_hyper(out, bundle.pretrain_hyper);
    write_pod(out, static_cast<std::uint32_t>(bundle.generator_hidden.size()));
    for (const Layer& layer : bundle.generator_hidden) write_layer(out, layer);
    write_pod(out, static_cast<std::uint32_t>(bundle.discriminator_hidden.size()));
    for (const Layer& layer : bundle.discriminator_hidden) write_layer(out, layer);
    if (!out) throw DataError("failed writing bundle to '" + path + "'");
}

PretrainedBundle load_bundle(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kBundleMagic, sizeof(magic)) != 0) {
        throw DataError("'" + path + "' is not a pretrained bundle");
    }
    PretrainedBundle bundle;
    bundle.source_schema_digest = read_pod<std::uint64_t>(in);
    bundle.source_dim = read_pod<std::uint32_t>(in);
    bundle.pretrain_hyper = read_hyper(in);
    const auto g_count = read_pod<std::uint32_t>(in);
    bundle.generator_hidden.reserve(g_count);
    for (std::uint32_t k = 0; k < g_count; ++k) bundle.generator_hidden.push_back(read_layer(in));
    const auto d_count = read_pod<std::uint32_t>(in);
    bundle.discriminator_hidden.reserve(d_count);
    for (std::uint32_t k = 0; k < d_count; ++k) {
        bundle.discriminator_hidden.push_back(read_layer(in));
    }
    check_hidden_chain(bundle.generator_hidden, "load_bundle generator");
    check_hidden_chain(bundle.discriminator_hidden, "load_bundle discriminator");
    return bundle;
}

bool bundles_bit_equal(const PretrainedBundle& a, const PretrainedBundle& b) {
    if (a.source_schema_digest != b.source_schema_digest || a.source_dim != b.source_dim) {
        return false;
    }
    if (a.generator_hidden.size() != b.generator_hidden.size() ||
        a.discriminator_hidden.size() != b.discriminator_hidden.size()) {
        return false;
    }
    for (std::size_t k = 0; k < a.generator_hidden.size(); ++k) {
        if (!layers_bit_equal(a.generator_hidden[k], b.generator_hidden[k])) return false;
    }
    for (std::size_t k = 0; k < a.discriminator_hidden.size(); ++k) {
        if (!layers_bit_equal(a.discriminator_hidden[k], b.discriminator_hidden[k])) return false;
    }
    return true;
}

PretrainResult pretrain(const DataTable& source_norm, const GainHyperparams& hyper,
                        std::uint64_t seed) {
    if (const auto missing = source_norm.first_missing()) {
        throw InputError("pretrain: source table must be complete; first missing cell at row " +
                         std::to_string(missing->first + 1) + ", column '" +
                         source_norm.column_names[missing->second] + "'");
    }
    RngStreams streams = RngStreams::from_seed(seed);
    GainModel model =
        make_gain_model(source_norm.n_cols(), source_norm.column_kinds, hyper, streams.init);
    TrainLog log = train_loop(model, source_norm.values, Matrix(),
                              GeneratorObjective::reconstruction_all, streams);

    PretrainResult result;
    result.bundle.generator_hidden = surgery_extract_hidden(model.generator);
    result.bundle.discriminator_hidden = surgery_extract_hidden(model.discriminator);
    result.bundle.source_schema_digest = schema_digest(source_norm);
    result.bundle.source_dim = static_cast<std::uint32_t>(source_norm.n_cols());
    result.bundle.pretrain_hyper = hyper;
    result.log = std::move(log);
    return result;
}

std::vector<bool> freeze_mask_for(TransferStrategy strategy, std::size_t hidden_count) {
    std::vector<bool> mask(hidden_count, false);
    switch (strategy) {
        case TransferStrategy::direct_reuse:
        case TransferStrategy::append_layers:
            mask.assign(hidden_count, true);
            break;
        case TransferStrategy::warm_start:
            break;
        case TransferStrategy::freeze_shallow:
            for (std::size_t k = 0; k < hidden_count / 2; ++k) mask[k] = true;
            break;
        case TransferStrategy::freeze_deep:
            for (std::size_t k = hidden_count - hidden_count / 2; k < hidden_count; ++k) {
                mask[k] = true;
            }
            break;
    }
    return mask;
}

TrainResult finetune(const PretrainedBundle& bundle, const DataTable& target_norm,
                     const Matrix& target_mask, const TransferPlan& plan,
                     const GainHyperparams& hyper, std::uint64_t seed) {
    check_hidden_chain(bundle.generator_hidden, "finetune generator");
    check_hidden_chain(bundle.discriminator_hidden, "finetune discriminator");
    if (bundle.generator_hidden.size() !=
        static_cast<std::size_t>(plan.pretrain_hidden_count)) {
        throw ConfigError("finetune: bundle carries " +
                          std::to_string(bundle.generator_hidden.size()) +
                          " hidden layers but the plan expects " +
                          std::to_string(plan.pretrain_hidden_count));
    }
    if (plan.strategy == TransferStrategy::append_layers && plan.append_hidden_count < 1) {
        throw ConfigError("finetune: append_layers needs append_hidden_count >= 1");
    }

    const std::size_t d = target_norm.n_cols();
    RngStreams streams = RngStreams::from_seed(seed);
    const std::vector<bool> freeze =
        freeze_mask_for(plan.strategy, bundle.generator_hidden.size());

    auto build = [&](const std::vector<Layer>& hidden) {
        std::vector<Layer> append;
        if (plan.strategy == TransferStrategy::append_layers) {
            const std::size_t width = hidden.back().fan_out();
            for (int k = 0; k < plan.append_hidden_count; ++k) {
                append.push_back(init_layer(width, width, Activation::relu, streams.init));
            }
        }
        return surgery_rebuild(hidden, 2 * d, d, freeze, append, streams.init);
    };

    TrainResult result;
    result.model.generator = build(bundle.generator_hidden);
    result.model.discriminator = build(bundle.discriminator_hidden);
    result.model.hyper = hyper;
    result.model.data_dim = d;
    result.model.column_kinds = target_norm.column_kinds;
    result.log = train_loop(result.model, target_norm.values, target_mask,
                            GeneratorObjective::adversarial, streams);
    return result;
}

Matrix run_cluegain(const DataTable& source_raw, const DataTable& target_raw,
                    const Matrix& target_mask, const TransferPlan& plan,
                    const GainHyperparams& hyper, std::uint64_t seed,
                    const std::optional<GainHyperparams>& pretrain_hyper) {
    auto [source_norm, source_params] = normalize(source_raw);
    (void)source_params;
    const PretrainResult pre =
        pretrain(source_norm, pretrain_hyper.value_or(hyper), derive_seed(seed, 11));

    auto [target_norm, target_params] = normalize(target_raw);
    const TrainResult tuned =
        finetune(pre.bundle, target_norm, target_mask, plan, hyper, derive_seed(seed, 12));

    RngStream impute_noise(derive_seed(seed, 13));
    return impute_full(tuned.model, target_norm, target_mask, target_params, impute_noise);
}

}  // namespace cluegain
