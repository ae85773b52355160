#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>

#include "mg/image.hpp"
#include "mg/nldr.hpp"
#include "mg/nn.hpp"

namespace mg {

// Arrays are indexed by t - 1 for t = 1..T.
struct NoiseSchedule {
    std::size_t T = 0;
    double beta_start = 0;
    double beta_end = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    double beta_at(std::size_t t) const { return beta[t - 1]; }
    double alpha_at(std::size_t t) const { return alpha[t - 1]; }
    double alpha_bar_at(std::size_t t) const { return alpha_bar[t - 1]; }
};

NoiseSchedule linear_schedule(std::size_t T = 1000, double beta1 = 1e-4, double betaT = 0.02);

// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.
Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched);

// Interleaved (sin(t w_k), cos(t w_k)) with w_k = 10000^(-2k/dim).
Tensor time_embedding(std::size_t t, std::size_t T, std::size_t dim);

struct DenoiserSpec {
    std::size_t data_dim = 0;
    std::vector<std::size_t> hidden{256, 256, 256};
    std::size_t time_embed_dim = 32;
    nn::NetworkSpec net;  // [data_dim + time_embed_dim] -> [data_dim], ReLU hidden layers
};

DenoiserSpec make_denoiser(std::size_t data_dim, std::vector<std::size_t> hidden = {256, 256, 256},
                           std::size_t time_embed_dim = 32);

struct DiffusionConfig {
    double lr = 1e-4;
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
};

nlohmann::json to_json(const DiffusionConfig& c);
DiffusionConfig diffusion_config_from_json(const nlohmann::json& j, DiffusionConfig base = {});

// Throws ConfigError unless every column has |mean| <= 0.1 and |sd - 1| <= 0.1.
void require_standardized(const Tensor& coords);

struct DiffusionTrainResult {
    nn::Parameters params;
    std::vector<double> loss_history;  // mean per-coordinate loss per epoch
};

// Loss is the per-coordinate mean of (eps_hat - eps)^2; timesteps uniform in [1, T].
DiffusionTrainResult train_diffusion(const Tensor& coords, const NoiseSchedule& sched, const DenoiserSpec& spec,
                                     const DiffusionConfig& cfg);

// Objective on one seeded draw of (t, eps) per row, forward only. Used to
// compare parameter sets on identical noise.
double diffusion_objective(const DenoiserSpec& spec, const nn::Parameters& params, const Tensor& coords,
                           const NoiseSchedule& sched, std::uint64_t seed);

// eps_theta(x_t, t) for a batch of chains [n, d].
using EpsPredictor = std::function<Tensor(const Tensor& x_t, std::size_t t)>;

EpsPredictor network_predictor(const DenoiserSpec& spec, const nn::Parameters& params, const NoiseSchedule& sched);

struct StepStats {
    std::size_t t;
    double mean;
    double var;
};

struct SampleRun {
    std::uint64_t seed = 0;
    std::size_t n = 0;
    Tensor coords;                   // [n, d]
    std::vector<StepStats> trajectory;  // x_{t-1} summaries for t = T..1
};

// Ancestral sampling with sigma_t^2 = beta_t and no noise at t = 1. Chain i
// draws from its own generator seeded by derive_seed(seed, i).
SampleRun ddpm_sample(const EpsPredictor& eps, std::size_t dim, const NoiseSchedule& sched, std::size_t n,
                      std::uint64_t seed);
SampleRun ddpm_sample(const DenoiserSpec& spec, const nn::Parameters& params, const NoiseSchedule& sched,
                      std::size_t n, std::uint64_t seed);

struct Generation {
    SampleRun run;        // standardized coordinates
    Tensor coords;        // destandardized
    ImageBatch images;    // decoder output, range [-1, 1]
};

Generation generate_images(const DenoiserSpec& spec, const nn::Parameters& denoiser, const NoiseSchedule& sched,
                           const Embedding& e, const nn::NetworkSpec& decoder, const nn::Parameters& decoder_params,
                           std::size_t n, std::uint64_t seed);

// MGCKPT/1 checkpoint whose meta carries the schedule (T, beta_start, beta_end)
// and the denoiser shape.
void save_denoiser(const std::filesystem::path& path, const DenoiserSpec& spec, const nn::Parameters& params,
                   const NoiseSchedule& sched, nlohmann::json meta = nlohmann::json::object());

struct LoadedDenoiser {
    DenoiserSpec spec;
    nn::Parameters params;
    NoiseSchedule sched;
    nlohmann::json meta;
};

LoadedDenoiser load_denoiser(const std::filesystem::path& path);

}  // namespace mg
