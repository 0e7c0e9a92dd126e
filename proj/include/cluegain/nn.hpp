#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cluegain/matrix.hpp"
#include "cluegain/rng.hpp"

namespace cluegain {

enum class Activation : std::uint8_t { relu = 0, sigmoid = 1, identity = 2 };

const char* activation_name(Activation a);

// One dense layer: y = act(x W + b). `frozen` layers keep their parameters
// bit-identical through any number of optimizer steps.
struct Layer {
    Matrix weights;            // fan_in x fan_out
    std::vector<double> bias;  // fan_out
    Activation activation = Activation::relu;
    bool frozen = false;

    std::size_t fan_in() const { return weights.rows(); }
    std::size_t fan_out() const { return weights.cols(); }
};

struct Network {
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().fan_in(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().fan_out(); }
};

// Per-layer activations captured by forward(); consumed by gradients().
struct ForwardCache {
    Matrix input;                     // batch x input_dim
    std::vector<Matrix> pre;          // z_k = a_{k-1} W_k + b_k
    std::vector<Matrix> post;         // a_k = act(z_k)
    const Matrix& output() const { return post.back(); }
};

struct LayerGrad {
    Matrix weights;            // same shape as Layer::weights
    std::vector<double> bias;  // same shape as Layer::bias
};

// Gradients for every layer (frozen ones included; the optimizer ignores
// those) plus the gradient with respect to the network input, which is what
// lets the generator loss flow back through the discriminator.
struct Gradients {
    std::vector<LayerGrad> layers;
    Matrix input;
};

struct AdamState {
    std::vector<LayerGrad> first_moment;
    std::vector<LayerGrad> second_moment;
    std::int64_t step_count = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Xavier-scaled uniform weights (+-1/sqrt(fan_in)), zero biases.
// widths has one entry per neuron layer, so len(widths)-1 layers come out.
Network init_network(const std::vector<std::size_t>& widths,
                     const std::vector<Activation>& activations, RngStream& init_stream);

Layer init_layer(std::size_t fan_in, std::size_t fan_out, Activation activation,
                 RngStream& init_stream);

// Batched forward pass; x is batch x input_dim.
ForwardCache forward(const Network& net, const Matrix& x);

// Convenience single-pass evaluation.
Matrix forward_values(const Network& net, const Matrix& x);

// Exact reverse-mode gradients given dLoss/dOutput at the cache's output.
Gradients gradients(const Network& net, const Matrix& loss_grad_at_output,
                    const ForwardCache& cache);

AdamState make_adam_state(const Network& net, double learning_rate);

// Standard Adam with bias correction. Frozen layers are skipped outright:
// parameters and moments stay bit-identical.
void adam_step(Network& net, const Gradients& grads, AdamState& state);

// All layers except the first and last, order and parameters preserved.
std::vector<Layer> surgery_extract_hidden(const Network& net);

// Rebuild a network around carried hidden layers: fresh input layer
// (new_input_dim -> hidden front), carried hiddens with frozen flags from
// freeze_mask, appended layers (trainable) after them, fresh output layer.
Network surgery_rebuild(const std::vector<Layer>& hidden, std::size_t new_input_dim,
                        std::size_t new_output_dim, const std::vector<bool>& freeze_mask,
                        const std::vector<Layer>& append, RngStream& init_stream,
                        Activation input_activation = Activation::relu,
                        Activation output_activation = Activation::sigmoid);

// Canonical widths for this project's imputation networks: input layer
// (input_dim -> hidden_width), hidden_count carried-size hidden layers,
// output layer (hidden_width -> output_dim).
std::vector<std::size_t> default_widths(std::size_t input_dim, std::size_t output_dim,
                                        int hidden_count, int hidden_width);
std::vector<Activation> default_activations(int hidden_count,
                                            Activation output_activation = Activation::sigmoid);

void throw_if_chain_broken(const Network& net);

bool networks_bit_equal(const Network& a, const Network& b);
bool layers_bit_equal(const Layer& a, const Layer& b);

// Versioned binary dump of layer shapes + row-major parameters; round-trips
// bit exactly.
void write_layer(std::ostream& out, const Layer& layer);
Layer read_layer(std::istream& in);
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace cluegain
