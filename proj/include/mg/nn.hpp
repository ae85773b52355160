#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mg/tensor.hpp"

namespace mg::nn {

enum class LayerKind { Dense, Conv2D, ConvTranspose2D, MaxPool2x2, BatchNorm, ReLU, LeakyReLU, Tanh, Dropout, Reshape };

std::string kind_name(LayerKind k);
LayerKind parse_kind(const std::string& s);

// One layer of a sequential network. Only the fields relevant to `kind` are
// read. Shapes exclude the leading batch dimension.
struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    std::size_t in = 0;   // Dense in-features / conv in-channels / BatchNorm channels
    std::size_t out = 0;  // Dense out-features / conv out-channels
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t output_padding = 0;
    double slope = 0.2;     // LeakyReLU
    double p = 0.0;         // Dropout
    double momentum = 0.1;  // BatchNorm running-stat momentum
    double eps = 1e-5;      // BatchNorm
    Shape target;           // Reshape
    bool bias = true;       // Dense / Conv2D / ConvTranspose2D

    static LayerSpec dense(std::size_t in, std::size_t out);
    static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding);
    static LayerSpec conv_transpose2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                                      std::size_t padding, std::size_t output_padding = 0);
    static LayerSpec maxpool2x2();
    static LayerSpec batchnorm(std::size_t channels, double momentum = 0.1, double eps = 1e-5);
    static LayerSpec relu();
    static LayerSpec leaky_relu(double slope = 0.2);
    static LayerSpec tanh();
    static LayerSpec dropout(double p);
    static LayerSpec reshape(Shape target);

    bool has_params() const;
    // Copy without the additive bias (e.g. ahead of BatchNorm, whose shift makes it redundant).
    LayerSpec without_bias() const;
};

// Sequential network; shapes are checked end to end at construction and a
// ShapeError names the first layer that does not compose.
class NetworkSpec {
public:
    NetworkSpec() = default;
    NetworkSpec(Shape input_shape, std::vector<LayerSpec> layers);

    const Shape& input_shape() const { return input_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    // shapes()[0] is the input shape, shapes()[i + 1] the output of layer i.
    const std::vector<Shape>& shapes() const { return shapes_; }
    const Shape& output_shape() const { return shapes_.back(); }

private:
    Shape input_;
    std::vector<LayerSpec> layers_;
    std::vector<Shape> shapes_{Shape{}};
};

struct ParamBlock {
    std::size_t layer;
    std::string name;  // "weight", "bias", "gamma", "beta"
    std::size_t offset;
    std::size_t length;
    Shape shape;
};

struct RunningStats {
    std::size_t layer;
    std::vector<float> mean;
    std::vector<float> var;
};

// Flat storage of every trainable value in layer order.
// Dense weight is [in, out]; Conv2D weight [out, in, k, k];
// ConvTranspose2D weight [in, out, k, k].
struct Parameters {
    Tensor flat;
    std::vector<ParamBlock> layout;
    std::vector<RunningStats> running;

    std::size_t size() const { return flat.size(); }
    const ParamBlock* block(std::size_t layer, const std::string& name) const;
    std::span<const float> view(const ParamBlock& b) const { return flat.values().subspan(b.offset, b.length); }
    std::span<float> view(const ParamBlock& b) { return flat.values().subspan(b.offset, b.length); }
    const RunningStats* stats(std::size_t layer) const;
};

std::vector<ParamBlock> parameter_layout(const NetworkSpec& net);

// Glorot-uniform weights, zero biases, gamma = 1, beta = 0, running mean 0 / var 1.
Parameters init_parameters(const NetworkSpec& net, std::uint64_t seed);

enum class Mode { Train, Eval };

template <class T>
struct Tape {
    Mode mode = Mode::Eval;
    std::vector<BasicTensor<T>> inputs;          // input of each layer
    std::vector<std::vector<double>> bn_inv_std;  // per layer (BatchNorm only)
    std::vector<std::vector<T>> mask;             // dropout masks (already scaled)
    std::vector<std::vector<std::uint32_t>> argmax;  // max-pool winners
};

template <class T>
struct ForwardResult {
    BasicTensor<T> y;
    Tape<T> tape;
    std::vector<RunningStats> running;  // updated in train mode, unchanged in eval mode
};

// Dropout masks derive from rng_seed and the layer index.
template <class T>
ForwardResult<T> forward(const NetworkSpec& net, const Parameters& params, const BasicTensor<T>& x, Mode mode,
                         std::uint64_t rng_seed = 0);

template <class T>
struct BackwardResult {
    Tensor dparams;
    BasicTensor<T> dx;
};

template <class T>
BackwardResult<T> backward(const NetworkSpec& net, const Parameters& params, const Tape<T>& tape,
                           const BasicTensor<T>& dy);

// Convenience: eval-mode forward in f32.
Tensor predict(const NetworkSpec& net, const Parameters& params, const Tensor& x);

// Direct kernels, exposed for the layer tests. x is [B, Cin, H, W];
// weight is [Cin, Cout, k, k]; bias may be empty.
Tensor conv_transpose2d_forward(const Tensor& x, const Tensor& weight, std::span<const float> bias,
                                std::size_t stride, std::size_t padding, std::size_t output_padding);

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);
std::size_t conv_transpose_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding,
                                    std::size_t output_padding);

struct BatchNormResult {
    Tensor y;
    std::vector<float> running_mean;
    std::vector<float> running_var;
};

// x is [B, C] or [B, C, H, W].
BatchNormResult batchnorm_forward(const Tensor& x, std::span<const float> gamma, std::span<const float> beta,
                                  Mode mode, std::span<const float> running_mean,
                                  std::span<const float> running_var, double momentum, double eps);

// ---- optimization ----

struct AdamState {
    Tensor m;
    Tensor v;
    std::int64_t step = 0;

    static AdamState zeros(std::size_t n);
};

struct AdamResult {
    Tensor params;
    AdamState state;
};

// Decoupled weight decay p <- p (1 - lr wd), then the bias-corrected Adam update.
AdamResult adam_step(const Tensor& params, const Tensor& grads, const AdamState& state, double lr, double beta1,
                     double beta2, double eps, double weight_decay);

// lr_min + (lr_max - lr_min)(1 + cos(pi t / T)) / 2
double cosine_lr(std::size_t t, std::size_t T, double lr_max, double lr_min);

// ---- verification ----

template <class T>
using LossFn = std::function<std::pair<double, BasicTensor<T>>(const BasicTensor<T>& y)>;

struct GradCheckResult {
    double max_rel_error = 0;
    std::size_t worst_param = 0;  // index into flat params, or params.size() + i for input element i
    double analytic = 0;
    double numeric = 0;
};

// Compares backward() run with T activations against central differences over
// every parameter and input element. The differences are always taken with f64
// activations on the same f32 parameters and the same (T-rounded) input, since
// f32 activation rounding alone swamps a 1e-3 tolerance on deep ReLU networks.
// Relative error is |a - n| / max(|a|, |n|, floor). Train-mode dropout masks
// are held fixed across probes by reusing the seed.
template <class T>
GradCheckResult grad_check(const NetworkSpec& net, const Parameters& params, const LossFn<double>& loss,
                           const BasicTensor<double>& x, double eps, std::uint64_t seed = 0, double floor = 1e-3,
                           Mode mode = Mode::Train);

// ---- persistence ----

nlohmann::json to_json(const NetworkSpec& net);
NetworkSpec network_from_json(const nlohmann::json& j);

struct Checkpoint {
    NetworkSpec net;
    Parameters params;
    nlohmann::json meta;  // optimizer hyperparameters, epoch, free-form fields
};

// MGCKPT/1: JSON header at `path`, flat parameters at `<path>.params.mgt`,
// one [2, C] running-stat blob per BatchNorm layer at `<path>.bn<layer>.mgt`.
void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& net, const Parameters& params,
                     const nlohmann::json& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Files written by save_checkpoint for `path`, header first.
std::vector<std::filesystem::path> checkpoint_files(const std::filesystem::path& path, const NetworkSpec& net);

}  // namespace mg::nn
