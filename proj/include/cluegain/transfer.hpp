#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cluegain/data.hpp"
#include "cluegain/gain.hpp"
#include "cluegain/nn.hpp"

namespace cluegain {

enum class TransferStrategy {
    direct_reuse,   // all carried hidden layers frozen, fresh I/O trainable
    warm_start,     // carried hidden layers as initialization, all trainable
    append_layers,  // carried hiddens frozen + fresh trainable hiddens appended
    freeze_shallow, // first half of carried hiddens frozen
    freeze_deep,    // last half of carried hiddens frozen
};

const char* transfer_strategy_name(TransferStrategy s);
std::optional<TransferStrategy> parse_transfer_strategy(const std::string& name);

struct TransferPlan {
    TransferStrategy strategy = TransferStrategy::freeze_deep;
    int pretrain_hidden_count = 4;
    int append_hidden_count = 4;  // append_layers only
};

// Hidden layers of both pre-trained networks plus enough metadata to verify
// compatibility when they are transplanted later.
struct PretrainedBundle {
    std::vector<Layer> generator_hidden;
    std::vector<Layer> discriminator_hidden;
    std::uint64_t source_schema_digest = 0;
    std::uint32_t source_dim = 0;
    GainHyperparams pretrain_hyper;
};

void save_bundle(const PretrainedBundle& bundle, const std::string& path);
PretrainedBundle load_bundle(const std::string& path);
bool bundles_bit_equal(const PretrainedBundle& a, const PretrainedBundle& b);

struct PretrainResult {
    PretrainedBundle bundle;
    TrainLog log;
};

// Trains on a complete, normalized source table: the discriminator plays the
// usual hint game against artificial masks while the generator minimizes
// reconstruction error against the known true values on every component.
PretrainResult pretrain(const DataTable& source_norm, const GainHyperparams& hyper,
                        std::uint64_t seed);

// Freeze flags for the carried hidden layers under a strategy; odd counts
// freeze floor(n/2) layers.
std::vector<bool> freeze_mask_for(TransferStrategy strategy, std::size_t hidden_count);

// Builds target-dimension networks around the bundle's hidden layers per the
// plan, then runs the adversarial training loop on the target.
TrainResult finetune(const PretrainedBundle& bundle, const DataTable& target_norm,
                     const Matrix& target_mask, const TransferPlan& plan,
                     const GainHyperparams& hyper, std::uint64_t seed);

// Pre-train on the raw source, fine-tune on the raw target, impute, and map
// back to original units. pretrain_hyper defaults to hyper.
Matrix run_cluegain(const DataTable& source_raw, const DataTable& target_raw,
                    const Matrix& target_mask, const TransferPlan& plan,
                    const GainHyperparams& hyper, std::uint64_t seed,
                    const std::optional<GainHyperparams>& pretrain_hyper = std::nullopt);

}  // namespace cluegain
