#include "mg/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mg/rng.hpp"

namespace mg {

using nlohmann::json;

NoiseSchedule linear_schedule(std::size_t T, double beta1, double betaT) {
    if (T < 2) throw ParameterError("linear_schedule: T must be >= 2");
    if (!(beta1 > 0 && beta1 < betaT && betaT < 1))
        throw ParameterError("linear_schedule: need 0 < beta1 < betaT < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta_start = beta1;
    s.beta_end = betaT;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (std::size_t i = 0; i < T; ++i) {
        s.beta[i] = i + 1 == T ? betaT : beta1 + double(i) / double(T - 1) * (betaT - beta1);
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T) throw ParameterError("q_sample: t=" + std::to_string(t) + " outside [1, T]");
    if (x0.shape() != eps.shape()) throw ShapeError("q_sample: x0 and eps shapes differ");
    const double a = std::sqrt(sched.alpha_bar_at(t)), b = std::sqrt(1.0 - sched.alpha_bar_at(t));
    Tensor out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(a * x0[i] + b * eps[i]);
    return out;
}

Tensor time_embedding(std::size_t t, std::size_t T, std::size_t dim) {
    if (dim == 0 || dim % 2) throw ParameterError("time_embedding: dim must be even and positive");
    if (t > T) throw ParameterError("time_embedding: t exceeds T");
    Tensor e({dim});
    for (std::size_t k = 0; k < dim / 2; ++k) {
        const double w = std::pow(10000.0, -2.0 * double(k) / double(dim));
        e[2 * k] = static_cast<float>(std::sin(double(t) * w));
        e[2 * k + 1] = static_cast<float>(std::cos(double(t) * w));
    }
    return e;
}

DenoiserSpec make_denoiser(std::size_t data_dim, std::vector<std::size_t> hidden, std::size_t time_embed_dim) {
    if (data_dim == 0) throw ShapeError("make_denoiser: data_dim must be >= 1");
    if (time_embed_dim == 0 || time_embed_dim % 2) throw ParameterError("make_denoiser: time_embed_dim must be even");
    std::vector<nn::LayerSpec> L;
    std::size_t w = data_dim + time_embed_dim;
    for (std::size_t h : hidden) {
        L.push_back(nn::LayerSpec::dense(w, h));
        L.push_back(nn::LayerSpec::relu());
        w = h;
    }
    L.push_back(nn::LayerSpec::dense(w, data_dim));
    DenoiserSpec s;
    s.data_dim = data_dim;
    s.hidden = std::move(hidden);
    s.time_embed_dim = time_embed_dim;
    s.net = nn::NetworkSpec({data_dim + time_embed_dim}, std::move(L));
    return s;
}

json to_json(const DiffusionConfig& c) {
    return {{"lr", c.lr},           {"epochs", c.epochs}, {"batch_size", c.batch_size},
            {"seed", c.seed},       {"beta1", c.beta1},   {"beta2", c.beta2},
            {"adam_eps", c.adam_eps}, {"weight_decay", c.weight_decay}};
}

DiffusionConfig diffusion_config_from_json(const json& j, DiffusionConfig c) {
    if (!j.is_object()) throw ConfigError("diffusion config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "lr") c.lr = v.get<double>();
            else if (key == "epochs") c.epochs = v.get<std::size_t>();
            else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "beta1") c.beta1 = v.get<double>();
            else if (key == "beta2") c.beta2 = v.get<double>();
            else if (key == "adam_eps") c.adam_eps = v.get<double>();
            else if (key == "weight_decay") c.weight_decay = v.get<double>();
            else if (key == "T" || key == "beta_start" || key == "beta_end") continue;  // schedule keys
            else throw ConfigError("diffusion config: unknown key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("diffusion config: ") + e.what());
    }
    return c;
}

void require_standardized(const Tensor& coords) {
    if (coords.rank() != 2 || coords.dim(0) < 2) throw ShapeError("diffusion: coords must be [n >= 2, d]");
    const std::size_t n = coords.dim(0), d = coords.dim(1);
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s += coords.at(i, j);
        const double m = s / double(n);
        double v = 0;
        for (std::size_t i = 0; i < n; ++i) v += (coords.at(i, j) - m) * (coords.at(i, j) - m);
        const double sd = std::sqrt(v / double(n));
        if (std::abs(m) > 0.1 || std::abs(sd - 1.0) > 0.1)
            throw ConfigError("diffusion expects standardized coordinates; column " + std::to_string(j) + " has mean " +
                              std::to_string(m) + ", sd " + std::to_string(sd));
    }
}

namespace {

// Writes [x_t | temb(t)] rows for a batch; draws t and eps from rng.
struct NoisyBatch {
    Tensor input;  // [b, d + e]
    Tensor eps;    // [b, d]
};

NoisyBatch make_noisy_batch(const Tensor& coords, std::span<const std::size_t> rows, const NoiseSchedule& sched,
                            const DenoiserSpec& spec, Rng& rng) {
    const std::size_t d = spec.data_dim, e = spec.time_embed_dim, b = rows.size();
    NoisyBatch nb{Tensor({b, d + e}), Tensor({b, d})};
    std::uniform_int_distribution<std::size_t> pick(1, sched.T);
    for (std::size_t r = 0; r < b; ++r) {
        const std::size_t t = pick(rng);
        const double a = std::sqrt(sched.alpha_bar_at(t)), s = std::sqrt(1.0 - sched.alpha_bar_at(t));
        for (std::size_t j = 0; j < d; ++j) {
            const float eps = static_cast<float>(normal(rng));
            nb.eps.at(r, j) = eps;
            nb.input.at(r, j) = static_cast<float>(a * coords.at(rows[r], j) + s * eps);
        }
        const Tensor te = time_embedding(t, sched.T, e);
        std::copy(te.data(), te.data() + e, nb.input.data() + r * (d + e) + d);
    }
    return nb;
}

std::pair<double, Tensor> eps_loss(const Tensor& pred, const Tensor& eps) {
    Tensor g(pred.shape());
    const double n = double(pred.size());
    double s = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double diff = double(pred[i]) - double(eps[i]);
        s += diff * diff;
        g[i] = static_cast<float>(2.0 * diff / n);
    }
    return {s / n, g};
}

void check_coords(const Tensor& coords, const DenoiserSpec& spec) {
    if (coords.rank() != 2 || coords.dim(1) != spec.data_dim)
        throw ShapeError("diffusion: coords " + shape_str(coords.shape()) + " vs denoiser data_dim " +
                         std::to_string(spec.data_dim));
}

}  // namespace

DiffusionTrainResult train_diffusion(const Tensor& coords, const NoiseSchedule& sched, const DenoiserSpec& spec,
                                     const DiffusionConfig& cfg) {
    check_coords(coords, spec);
    require_standardized(coords);
    const std::size_t n = coords.dim(0);
    if (cfg.batch_size < 1 || n < cfg.batch_size)
        throw ConfigError("train_diffusion: need 1 <= batch_size <= n (" + std::to_string(n) + ")");
    if (cfg.epochs == 0 || !(cfg.lr > 0)) throw ConfigError("train_diffusion: epochs >= 1 and lr > 0 required");

    DiffusionTrainResult res;
    res.params = nn::init_parameters(spec.net, derive_seed(cfg.seed, "denoiser_init"));
    nn::AdamState adam = nn::AdamState::zeros(res.params.size());
    Rng rng(derive_seed(cfg.seed, "diffusion_noise"));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t per_epoch = n / cfg.batch_size;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0;
        for (std::size_t b = 0; b < per_epoch; ++b) {
            const std::span<const std::size_t> rows(order.data() + b * cfg.batch_size, cfg.batch_size);
            const NoisyBatch nb = make_noisy_batch(coords, rows, sched, spec, rng);
            auto fwd = nn::forward<float>(spec.net, res.params, nb.input, nn::Mode::Train);
            const auto [loss, grad] = eps_loss(fwd.y, nb.eps);
            if (!std::isfinite(loss)) throw OptimizationError("train_diffusion: non-finite loss at epoch " + std::to_string(epoch));
            const auto bwd = nn::backward<float>(spec.net, res.params, fwd.tape, grad);
            auto upd = nn::adam_step(res.params.flat, bwd.dparams, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps,
                                     cfg.weight_decay);
            res.params.flat = std::move(upd.params);
            adam = std::move(upd.state);
            total += loss;
        }
        res.loss_history.push_back(total / double(per_epoch));
    }
    return res;
}

double diffusion_objective(const DenoiserSpec& spec, const nn::Parameters& params, const Tensor& coords,
                           const NoiseSchedule& sched, std::uint64_t seed) {
    check_coords(coords, spec);
    std::vector<std::size_t> rows(coords.dim(0));
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    Rng rng(seed);
    const NoisyBatch nb = make_noisy_batch(coords, rows, sched, spec, rng);
    const Tensor pred = nn::predict(spec.net, params, nb.input);
    return eps_loss(pred, nb.eps).first;
}

EpsPredictor network_predictor(const DenoiserSpec& spec, const nn::Parameters& params, const NoiseSchedule& sched) {
    return [&spec, &params, T = sched.T](const Tensor& x, std::size_t t) {
        const std::size_t n = x.dim(0), d = spec.data_dim, e = spec.time_embed_dim;
        const Tensor te = time_embedding(t, T, e);
        Tensor in({n, d + e});
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(x.data() + i * d, x.data() + (i + 1) * d, in.data() + i * (d + e));
            std::copy(te.data(), te.data() + e, in.data() + i * (d + e) + d);
        }
        return nn::predict(spec.net, params, in);
    };
}

SampleRun ddpm_sample(const EpsPredictor& eps, std::size_t dim, const NoiseSchedule& sched, std::size_t n,
                      std::uint64_t seed) {
    if (dim == 0 || n == 0) throw ParameterError("ddpm_sample: need n >= 1 and dim >= 1");
    std::vector<Rng> chains;
    chains.reserve(n);
    for (std::size_t i = 0; i < n; ++i) chains.emplace_back(derive_seed(seed, std::uint64_t(i)));
    // State kept in f64; the predictor sees an f32 copy.
    std::vector<double> x(n * dim);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j) x[i * dim + j] = normal(chains[i]);

    SampleRun run;
    run.seed = seed;
    run.n = n;
    run.trajectory.reserve(sched.T);
    Tensor xt({n, dim});
    for (std::size_t t = sched.T; t >= 1; --t) {
        for (std::size_t i = 0; i < x.size(); ++i) xt[i] = static_cast<float>(x[i]);
        const Tensor e = eps(xt, t);
        if (e.shape() != xt.shape()) throw ShapeError("ddpm_sample: predictor returned " + shape_str(e.shape()));
        const double a = sched.alpha_at(t), b = sched.beta_at(t);
        const double inv_sqrt_a = 1.0 / std::sqrt(a), coef = b / std::sqrt(1.0 - sched.alpha_bar_at(t));
        const double sigma = t > 1 ? std::sqrt(b) : 0.0;
        double s = 0, ss = 0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < dim; ++j) {
                double v = inv_sqrt_a * (x[i * dim + j] - coef * double(e[i * dim + j]));
                if (t > 1) v += sigma * normal(chains[i]);
                if (!std::isfinite(v)) throw SamplingError("ddpm_sample: non-finite state at t=" + std::to_string(t));
                x[i * dim + j] = v;
                s += v;
                ss += v * v;
            }
        const double m = s / double(x.size());
        run.trajectory.push_back({t, m, ss / double(x.size()) - m * m});
    }
    run.coords = Tensor({n, dim});
    for (std::size_t i = 0; i < x.size(); ++i) run.coords[i] = static_cast<float>(x[i]);
    if (!run.coords.all_finite()) throw SamplingError("ddpm_sample: coordinates overflow f32 at t=0");
    return run;
}

SampleRun ddpm_sample(const DenoiserSpec& spec, const nn::Parameters& params, const NoiseSchedule& sched,
                      std::size_t n, std::uint64_t seed) {
    return ddpm_sample(network_predictor(spec, params, sched), spec.data_dim, sched, n, seed);
}

Generation generate_images(const DenoiserSpec& spec, const nn::Parameters& denoiser, const NoiseSchedule& sched,
                           const Embedding& e, const nn::NetworkSpec& decoder, const nn::Parameters& decoder_params,
                           std::size_t n, std::uint64_t seed) {
    if (!e.standardization) throw ConfigError("generate_images: embedding carries no standardization stats");
    if (e.dim() != spec.data_dim || decoder.input_shape() != Shape{e.dim()})
        throw ShapeError("generate_images: embedding dim " + std::to_string(e.dim()) + ", denoiser " +
                         std::to_string(spec.data_dim) + ", decoder input " + shape_str(decoder.input_shape()));
    Generation g;
    g.run = ddpm_sample(spec, denoiser, sched, n, seed);
    g.coords = destandardize_coords(g.run.coords, *e.standardization);
    g.images = ImageBatch(nn::predict(decoder, decoder_params, g.coords), -1.0f, 1.0f);
    return g;
}

void save_denoiser(const std::filesystem::path& path, const DenoiserSpec& spec, const nn::Parameters& params,
                   const NoiseSchedule& sched, json meta) {
    meta["schedule"] = {{"T", sched.T}, {"beta_start", sched.beta_start}, {"beta_end", sched.beta_end}};
    meta["denoiser"] = {{"data_dim", spec.data_dim}, {"hidden", spec.hidden}, {"time_embed_dim", spec.time_embed_dim}};
    nn::save_checkpoint(path, spec.net, params, meta);
}

LoadedDenoiser load_denoiser(const std::filesystem::path& path) {
    nn::Checkpoint ck = nn::load_checkpoint(path);
    try {
        const json& d = ck.meta.at("denoiser");
        const json& s = ck.meta.at("schedule");
        LoadedDenoiser out;
        out.spec = make_denoiser(d.at("data_dim"), d.at("hidden").get<std::vector<std::size_t>>(), d.at("time_embed_dim"));
        if (nn::to_json(out.spec.net) != nn::to_json(ck.net))
            throw FormatError(path.string() + ": network does not match the recorded denoiser shape");
        out.params = std::move(ck.params);
        out.sched = linear_schedule(s.at("T"), s.at("beta_start"), s.at("beta_end"));
        out.meta = std::move(ck.meta);
        return out;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": not a denoiser checkpoint (" + e.what() + ")");
    }
}

}  // namespace mg
