#include "cluegain/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "cluegain/errors.hpp"

namespace cluegain {

namespace {

constexpr char kNetworkMagic[8] = {'C', 'G', 'N', 'E', 'T', '0', '0', '1'};

double apply_activation(Activation a, double z) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
        case Activation::identity: return z;
    }
    throw InternalError("unknown activation");
}

// Derivative expressed through the post-activation value where possible
// (sigmoid) or the pre-activation (relu).
double activation_derivative(Activation a, double z, double post) {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::sigmoid: return post * (1.0 - post);
        case Activation::identity: return 1.0;
    }
    throw InternalError("unknown activation");
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw DataError("network file truncated");
    return value;
}

}  // namespace

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::identity: return "identity";
    }
    return "unknown";
}

Layer init_layer(std::size_t fan_in, std::size_t fan_out, Activation activation,
                 RngStream& init_stream) {
    if (fan_in == 0 || fan_out == 0) throw ConfigError("layer dimensions must be positive");
    Layer layer;
    layer.weights = Matrix(fan_in, fan_out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& w : layer.weights.storage()) w = init_stream.uniform(-bound, bound);
    layer.bias.assign(fan_out, 0.0);
    layer.activation = activation;
    layer.frozen = false;
    return layer;
}

Network init_network(const std::vector<std::size_t>& widths,
                     const std::vector<Activation>& activations, RngStream& init_stream) {
    if (widths.size() < 2) throw ConfigError("init_network: need at least two widths");
    if (activations.size() != widths.size() - 1) {
        throw ConfigError("init_network: expected " + std::to_string(widths.size() - 1) +
                          " activations, got " + std::to_string(activations.size()));
    }
    for (std::size_t w : widths) {
        if (w == 0) throw ConfigError("init_network: widths must be >= 1");
    }
    Network net;
    net.layers.reserve(widths.size() - 1);
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        net.layers.push_back(init_layer(widths[k], widths[k + 1], activations[k], init_stream));
    }
    return net;
}

ForwardCache forward(const Network& net, const Matrix& x) {
    if (net.layers.empty()) throw ConfigError("forward: empty network");
    if (x.cols() != net.input_dim()) {
        throw InputError("forward: input has " + std::to_string(x.cols()) +
                         " columns, network expects " + std::to_string(net.input_dim()));
    }
    if (!all_finite(x)) throw InputError("forward: non-finite input");

    ForwardCache cache;
    cache.input = x;
    cache.pre.reserve(net.layers.size());
    cache.post.reserve(net.layers.size());
    const Matrix* current = &cache.input;
    for (const Layer& layer : net.layers) {
        Matrix z = matmul(*current, layer.weights);
        for (std::size_t i = 0; i < z.rows(); ++i) {
            for (std::size_t j = 0; j < z.cols(); ++j) z.at(i, j) += layer.bias[j];
        }
        Matrix a(z.rows(), z.cols());
        for (std::size_t i = 0; i < z.size(); ++i) {
            a.storage()[i] = apply_activation(layer.activation, z.storage()[i]);
        }
        cache.pre.push_back(std::move(z));
        cache.post.push_back(std::move(a));
        current = &cache.post.back();
    }
    return cache;
}

Matrix forward_values(const Network& net, const Matrix& x) { return forward(net, x).output(); }

Gradients gradients(const Network& net, const Matrix& loss_grad_at_output,
                    const ForwardCache& cache) {
    const std::size_t n_layers = net.layers.size();
    if (cache.pre.size() != n_layers || cache.post.size() != n_layers) {
        throw InternalError("gradients: cache does not match network");
    }
    if (!loss_grad_at_output.same_shape(cache.post.back())) {
        throw InternalError("gradients: output-gradient shape does not match cached forward");
    }

    Gradients out;
    out.layers.resize(n_layers);

    Matrix upstream = loss_grad_at_output;  // dL/da_k
    for (std::size_t k = n_layers; k-- > 0;) {
        const Layer& layer = net.layers[k];
        const Matrix& z = cache.pre[k];
        const Matrix& post = cache.post[k];

        Matrix dz(upstream.rows(), upstream.cols());
        for (std::size_t i = 0; i < dz.size(); ++i) {
            dz.storage()[i] =
                upstream.storage()[i] *
                activation_derivative(layer.activation, z.storage()[i], post.storage()[i]);
        }

        const Matrix& below = (k == 0) ? cache.input : cache.post[k - 1];
        out.layers[k].weights = matmul_tn(below, dz);
        out.layers[k].bias = column_sums(dz);
        upstream = matmul_nt(dz, layer.weights);
    }
    out.input = std::move(upstream);
    return out;
}

AdamState make_adam_state(const Network& net, double learning_rate) {
    AdamState state;
    state.learning_rate = learning_rate;
    state.first_moment.resize(net.layers.size());
    state.second_moment.resize(net.layers.size());
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        const Layer& layer = net.layers[k];
        state.first_moment[k].weights = Matrix(layer.fan_in(), layer.fan_out());
        state.first_moment[k].bias.assign(layer.fan_out(), 0.0);
        state.second_moment[k].weights = Matrix(layer.fan_in(), layer.fan_out());
        state.second_moment[k].bias.assign(layer.fan_out(), 0.0);
    }
    return state;
}

void adam_step(Network& net, const Gradients& grads, AdamState& state) {
    if (grads.layers.size() != net.layers.size() ||
        state.first_moment.size() != net.layers.size()) {
        throw InternalError("adam_step: layer count mismatch");
    }
    state.step_count += 1;
    const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));

    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        Layer& layer = net.layers[k];
        if (layer.frozen) continue;
        const LayerGrad& g = grads.layers[k];
        if (!g.weights.same_shape(layer.weights) || g.bias.size() != layer.bias.size()) {
            throw InternalError("adam_step: gradient shape mismatch at layer " +
                                std::to_string(k));
        }
        LayerGrad& m = state.first_moment[k];
        LayerGrad& v = state.second_moment[k];
        for (std::size_t i = 0; i < layer.weights.size(); ++i) {
            const double grad = g.weights.storage()[i];
            double& mi = m.weights.storage()[i];
            double& vi = v.weights.storage()[i];
            mi = state.beta1 * mi + (1.0 - state.beta1) * grad;
            vi = state.beta2 * vi + (1.0 - state.beta2) * grad * grad;
            layer.weights.storage()[i] -=
                state.learning_rate * (mi / bias1) / (std::sqrt(vi / bias2) + state.epsilon);
        }
        for (std::size_t j = 0; j < layer.bias.size(); ++j) {
            const double grad = g.bias[j];
            double& mj = m.bias[j];
            double& vj = v.bias[j];
            mj = state.beta1 * mj + (1.0 - state.beta1) * grad;
            vj = state.beta2 * vj + (1.0 - state.beta2) * grad * grad;
            layer.bias[j] -=
                state.learning_rate * (mj / bias1) / (std::sqrt(vj / bias2) + state.epsilon);
        }
    }
}

std::vector<Layer> surgery_extract_hidden(const Network& net) {
    if (net.layers.size() < 3) {
        throw ConfigError("surgery_extract_hidden: network needs at least 3 layers, has " +
                          std::to_string(net.layers.size()));
    }
    return {net.layers.begin() + 1, net.layers.end() - 1};
}

Network surgery_rebuild(const std::vector<Layer>& hidden, std::size_t new_input_dim,
                        std::size_t new_output_dim, const std::vector<bool>& freeze_mask,
                        const std::vector<Layer>& append, RngStream& init_stream,
                        Activation input_activation, Activation output_activation) {
    if (hidden.empty()) throw ConfigError("surgery_rebuild: no hidden layers to carry");
    if (freeze_mask.size() != hidden.size()) {
        throw ConfigError("surgery_rebuild: freeze mask length does not match hidden count");
    }
    for (std::size_t k = 0; k + 1 < hidden.size(); ++k) {
        if (hidden[k].fan_out() != hidden[k + 1].fan_in()) {
            throw ConfigError("surgery_rebuild: hidden layer chain broken at " +
                              std::to_string(k));
        }
    }
    std::size_t tail_width = hidden.back().fan_out();
    for (std::size_t k = 0; k < append.size(); ++k) {
        const std::size_t expect = k == 0 ? tail_width : append[k - 1].fan_out();
        if (append[k].fan_in() != expect) {
            throw ConfigError("surgery_rebuild: appended layer chain broken at " +
                              std::to_string(k));
        }
    }
    if (!append.empty()) tail_width = append.back().fan_out();

    Network net;
    net.layers.reserve(hidden.size() + append.size() + 2);
    net.layers.push_back(
        init_layer(new_input_dim, hidden.front().fan_in(), input_activation, init_stream));
    for (std::size_t k = 0; k < hidden.size(); ++k) {
        net.layers.push_back(hidden[k]);
        net.layers.back().frozen = freeze_mask[k];
    }
    for (const Layer& layer : append) {
        net.layers.push_back(layer);
        net.layers.back().frozen = false;
    }
    net.layers.push_back(init_layer(tail_width, new_output_dim, output_activation, init_stream));
    throw_if_chain_broken(net);
    return net;
}

std::vector<std::size_t> default_widths(std::size_t input_dim, std::size_t output_dim,
                                        int hidden_count, int hidden_width) {
    if (hidden_count < 1) throw ConfigError("default_widths: hidden_count must be >= 1");
    if (hidden_width < 1) throw ConfigError("default_widths: hidden_width must be >= 1");
    std::vector<std::size_t> widths;
    widths.reserve(static_cast<std::size_t>(hidden_count) + 3);
    widths.push_back(input_dim);
    for (int k = 0; k <= hidden_count; ++k) widths.push_back(static_cast<std::size_t>(hidden_width));
    widths.push_back(output_dim);
    return widths;
}

std::vector<Activation> default_activations(int hidden_count, Activation output_activation) {
    std::vector<Activation> acts(static_cast<std::size_t>(hidden_count) + 1, Activation::relu);
    acts.push_back(output_activation);
    return acts;
}

void throw_if_chain_broken(const Network& net) {
    for (std::size_t k = 0; k + 1 < net.layers.size(); ++k) {
        if (net.layers[k].fan_out() != net.layers[k + 1].fan_in()) {
            throw ConfigError("network dimension chain broken between layers " +
                              std::to_string(k) + " and " + std::to_string(k + 1));
        }
    }
    for (const Layer& layer : net.layers) {
        if (layer.bias.size() != layer.fan_out()) {
            throw ConfigError("layer bias length does not match fan_out");
        }
    }
}

bool layers_bit_equal(const Layer& a, const Layer& b) {
    if (a.activation != b.activation) return false;
    if (!a.weights.same_shape(b.weights)) return false;
    if (std::memcmp(a.weights.data(), b.weights.data(),
                    a.weights.size() * sizeof(double)) != 0) {
        return false;
    }
    if (a.bias.size() != b.bias.size()) return false;
    return std::memcmp(a.bias.data(), b.bias.data(), a.bias.size() * sizeof(double)) == 0;
}

bool networks_bit_equal(const Network& a, const Network& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
        if (!layers_bit_equal(a.layers[k], b.layers[k])) return false;
        if (a.layers[k].frozen != b.layers[k].frozen) return false;
    }
    return true;
}

void write_layer(std::ostream& out, const Layer& layer) {
    write_pod(out, static_cast<std::uint32_t>(layer.fan_in()));
    write_pod(out, static_cast<std::uint32_t>(layer.fan_out()));
    write_pod(out, static_cast<std::uint8_t>(layer.activation));
    write_pod(out, static_cast<std::uint8_t>(layer.frozen ? 1 : 0));
    out.write(reinterpret_cast<const char*>(layer.weights.data()),
              static_cast<std::streamsize>(layer.weights.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(layer.bias.data()),
              static_cast<std::streamsize>(layer.bias.size() * sizeof(double)));
}

Layer read_layer(std::istream& in) {
    const auto fan_in = read_pod<std::uint32_t>(in);
    const auto fan_out = read_pod<std::uint32_t>(in);
    const auto act = read_pod<std::uint8_t>(in);
    const auto frozen = read_pod<std::uint8_t>(in);
    if (act > 2) throw DataError("network file has unknown activation code");
    Layer layer;
    layer.weights = Matrix(fan_in, fan_out);
    layer.bias.assign(fan_out, 0.0);
    layer.activation = static_cast<Activation>(act);
    layer.frozen = frozen != 0;
    in.read(reinterpret_cast<char*>(layer.weights.data()),
            static_cast<std::streamsize>(layer.weights.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(layer.bias.data()),
            static_cast<std::streamsize>(layer.bias.size() * sizeof(double)));
    if (!in) throw DataError("network file truncated");
    return layer;
}

void save_network(const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(kNetworkMagic, sizeof(kNetworkMagic));
    write_pod(out, static_cast<std::uint32_t>(net.layers.size()));
    for (const Layer& layer : net.layers) write_layer(out, layer);
    if (!out) throw DataError("failed writing network to '" + path + "'");
}

Network load_network(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kNetworkMagic, sizeof(magic)) != 0) {
        throw DataError("'" + path + "' is not a network file");
    }
    const auto n = read_pod<std::uint32_t>(in);
    Network net;
    net.layers.reserve(n);
    for (std::uint32_t k = 0; k < n; ++k) net.layers.push_back(read_layer(in));
    throw_if_chain_broken(net);
    return net;
}

}  // namespace cluegain
