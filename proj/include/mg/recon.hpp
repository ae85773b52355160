#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mg/image.hpp"
#include "mg/nldr.hpp"
#include "mg/nn.hpp"

namespace mg {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double lr = 2e-4;
    double lr_min = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 1e-4;
    double lambda_mse = 1.0;
    double lambda_perceptual = 0.0;
    double coord_dropout_p = 0.1;
    std::uint64_t seed = 0;
    double val_fraction = 0.2;

    // Throws ConfigError on any violated invariant.
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
// Missing keys keep their defaults.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct ReconReport {
    std::string model;  // "lle", "isomap", "le", "tsne", "autoencoder", ...
    std::string arch;
    std::vector<double> train_loss;  // per epoch, mean over batches
    std::vector<double> val_loss;    // per epoch, eval mode
    std::size_t best_epoch = 0;      // 0-based
    double val_mse = 0;              // at best epoch, in the training value range
    double val_psnr = 0;             // dB; +inf when exact
    double val_ssim = 0;
    double seconds = 0;
    std::size_t n_train = 0;
    std::size_t n_val = 0;
    TrainConfig config;
};

// Keys: model, arch, train_loss, val_loss, best_epoch, val_mse, val_psnr
// (null when infinite), val_ssim, n_train, n_val, config, and seconds
// unless with_timing is false.
nlohmann::json to_json(const ReconReport& r, bool with_timing = true);
ReconReport report_from_json(const nlohmann::json& j);

// Dense(d -> 8 h0 w0) -> Reshape(8, h0, w0) -> s x [ConvT k4 s2 p1, BatchNorm, ReLU]
// -> ConvT k3 s1 p1 to the image channels -> Tanh, where s <= 3 is the
// largest stage count dividing both output sides and h0 = H / 2^s. The
// stage widths are the last s entries of `widths`.
nn::NetworkSpec build_paper_decoder(std::size_t embed_dim, const Shape& out_shape,
                                    const std::vector<std::size_t>& widths = {128, 64, 32});

// Dense(d -> h1) ReLU ... Dense(-> C H W) Tanh Reshape(C, H, W).
nn::NetworkSpec build_dense_decoder(std::size_t embed_dim, const Shape& out_shape,
                                    const std::vector<std::size_t>& hidden = {256, 512});

struct AutoencoderSpec {
    nn::NetworkSpec net;          // image -> image, encoder layers first
    std::size_t encoder_layers;   // net.layers()[encoder_layers - 1] emits the latent code
    std::size_t latent_dim;
};

// Conv k3 p1 + BatchNorm + LeakyReLU(0.2) + MaxPool per stage, then Dense to
// the latent; the decoder mirrors it with transposed convolutions and ends
// in Tanh. Channel ladder 16/32/64/128 for gray, 32/64/128/256 for RGB,
// truncated to as many stages (<= 4) as the image sides allow. `linear`
// gives the Dense-only variant without nonlinearities.
AutoencoderSpec build_autoencoder(const Shape& image_shape, std::size_t latent_dim, bool linear = false,
                                  std::vector<std::size_t> ladder = {});

// Slot for a feature-space loss on (pred, target); returns value and dL/dpred.
using PerceptualLoss = std::function<std::pair<double, Tensor>(const Tensor& pred, const Tensor& target)>;

struct LossValue {
    double loss;
    Tensor grad;
};

// lambda_mse * mean((pred - target)^2) + lambda_perceptual * perceptual.
LossValue total_loss(const Tensor& pred, const Tensor& target, const TrainConfig& cfg,
                     const PerceptualLoss& perceptual = {});

// Zeroes each coordinate independently with probability p; survivors are not rescaled.
Tensor coordinate_dropout(const Tensor& coords, double p, std::uint64_t seed);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

// Seeded shuffle; the first round(n * val_fraction) indices go to validation.
Split split_indices(std::size_t n, double val_fraction, std::uint64_t seed);

struct TrainResult {
    nn::Parameters params;  // at the best validation epoch
    ReconReport report;
    Split split;
};

// Generic supervised loop shared by the decoders and the autoencoder.
// inputs [n, ...] must match net's input, targets [n, ...] its output.
TrainResult train_network(const nn::NetworkSpec& net, const Tensor& inputs, const ImageBatch& targets,
                          const TrainConfig& cfg, bool coordinate_dropout_on_inputs,
                          const PerceptualLoss& perceptual = {});

// Decoder from fixed embedding coordinates to images.
TrainResult train_decoder(const Embedding& e, const ImageBatch& images, const TrainConfig& cfg,
                          const nn::NetworkSpec& net);

TrainResult train_autoencoder(const ImageBatch& images, const TrainConfig& cfg, const AutoencoderSpec& ae);

// Eval-mode forward in chunks of `chunk` rows.
Tensor predict_batched(const nn::NetworkSpec& net, const nn::Parameters& params, const Tensor& x,
                       std::size_t chunk = 256);

}  // namespace mg
