#include "mg/recon.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "mg/metrics.hpp"
#include "mg/rng.hpp"

namespace mg {

using nlohmann::json;
using nn::LayerSpec;
using nn::NetworkSpec;

void TrainConfig::validate() const {
    auto bad = [](const std::string& m) { throw ConfigError("train config: " + m); };
    if (epochs == 0) bad("epochs must be >= 1");
    if (batch_size < 2) bad("batch_size must be >= 2 (batch norm)");
    if (!(lr > 0) || !(lr_min >= 0) || lr_min > lr) bad("need 0 <= lr_min <= lr, lr > 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) bad("betas must be in [0, 1)");
    if (!(adam_eps > 0)) bad("adam_eps must be > 0");
    if (!(weight_decay >= 0)) bad("weight_decay must be >= 0");
    if (!(lambda_mse >= 0) || !(lambda_perceptual >= 0)) bad("loss weights must be >= 0");
    if (!(coord_dropout_p >= 0 && coord_dropout_p < 1)) bad("coord_dropout_p must be in [0, 1)");
    if (!(val_fraction > 0 && val_fraction < 1)) bad("val_fraction must be in (0, 1)");
}

json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr", c.lr},
            {"lr_min", c.lr_min},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"adam_eps", c.adam_eps},
            {"weight_decay", c.weight_decay},
            {"lambda_mse", c.lambda_mse},
            {"lambda_perceptual", c.lambda_perceptual},
            {"coord_dropout_p", c.coord_dropout_p},
            {"seed", c.seed},
            {"val_fraction", c.val_fraction}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "epochs") c.epochs = v.get<std::size_t>();
            else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
            else if (key == "lr") c.lr = v.get<double>();
            else if (key == "lr_min") c.lr_min = v.get<double>();
            else if (key == "beta1") c.beta1 = v.get<double>();
            else if (key == "beta2") c.beta2 = v.get<double>();
            else if (key == "adam_eps") c.adam_eps = v.get<double>();
            else if (key == "weight_decay") c.weight_decay = v.get<double>();
            else if (key == "lambda_mse") c.lambda_mse = v.get<double>();
            else if (key == "lambda_perceptual") c.lambda_perceptual = v.get<double>();
            else if (key == "coord_dropout_p") c.coord_dropout_p = v.get<double>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "val_fraction") c.val_fraction = v.get<double>();
            else throw ConfigError("train config: unknown key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    return c;
}

json to_json(const ReconReport& r, bool with_timing) {
    json j{{"model", r.model},
           {"arch", r.arch},
           {"train_loss", r.train_loss},
           {"val_loss", r.val_loss},
           {"best_epoch", r.best_epoch},
           {"val_mse", r.val_mse},
           {"val_psnr", std::isinf(r.val_psnr) ? json(nullptr) : json(r.val_psnr)},
           {"val_ssim", r.val_ssim},
           {"n_train", r.n_train},
           {"n_val", r.n_val},
           {"config", to_json(r.config)}};
    if (with_timing) j["seconds"] = r.seconds;
    return j;
}

ReconReport report_from_json(const json& j) {
    try {
        ReconReport r;
        r.model = j.at("model").get<std::string>();
        r.arch = j.value("arch", "");
        r.train_loss = j.at("train_loss").get<std::vector<double>>();
        r.val_loss = j.at("val_loss").get<std::vector<double>>();
        r.best_epoch = j.at("best_epoch").get<std::size_t>();
        r.val_mse = j.at("val_mse").get<double>();
        r.val_psnr = j.at("val_psnr").is_null() ? std::numeric_limits<double>::infinity()
                                                : j.at("val_psnr").get<double>();
        r.val_ssim = j.at("val_ssim").get<double>();
        r.n_train = j.value("n_train", std::size_t{0});
        r.n_val = j.value("n_val", std::size_t{0});
        r.seconds = j.value("seconds", 0.0);
        if (j.contains("config")) r.config = train_config_from_json(j.at("config"));
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("recon report: ") + e.what());
    }
}

namespace {

std::size_t halving_stages(const Shape& s, std::size_t max_stages) {
    std::size_t k = 0;
    while (k < max_stages && s[1] % (std::size_t{2} << k) == 0 && s[2] % (std::size_t{2} << k) == 0) ++k;
    return k;
}

void require_image_shape(const Shape& s, const char* who) {
    if (s.size() != 3 || s[0] == 0 || s[1] == 0 || s[2] == 0)
        throw ShapeError(std::string(who) + ": output shape must be [C, H, W], got " + shape_str(s));
}

}  // namespace

NetworkSpec build_paper_decoder(std::size_t embed_dim, const Shape& out_shape, const std::vector<std::size_t>& widths) {
    require_image_shape(out_shape, "build_paper_decoder");
    if (embed_dim == 0) throw ShapeError("build_paper_decoder: embed_dim must be >= 1");
    const std::size_t s = halving_stages(out_shape, 3);
    if (s == 0)
        throw ShapeError("build_paper_decoder: output " + shape_str(out_shape) +
                         " is not reachable by x2 upsampling (sides must be even)");
    if (widths.size() < s)
        throw ShapeError("build_paper_decoder: need " + std::to_string(s) + " stage widths, got " +
                         std::to_string(widths.size()));
    const std::size_t h0 = out_shape[1] >> s, w0 = out_shape[2] >> s;
    std::vector<LayerSpec> L{LayerSpec::dense(embed_dim, 8 * h0 * w0), LayerSpec::reshape({8, h0, w0})};
    std::size_t c = 8;
    for (std::size_t i = widths.size() - s; i < widths.size(); ++i) {
        L.push_back(LayerSpec::conv_transpose2d(c, widths[i], 4, 2, 1).without_bias());
        L.push_back(LayerSpec::batchnorm(widths[i]));
        L.push_back(LayerSpec::relu());
        c = widths[i];
    }
    L.push_back(LayerSpec::conv_transpose2d(c, out_shape[0], 3, 1, 1));
    L.push_back(LayerSpec::tanh());
    return NetworkSpec({embed_dim}, std::move(L));
}

NetworkSpec build_dense_decoder(std::size_t embed_dim, const Shape& out_shape, const std::vector<std::size_t>& hidden) {
    require_image_shape(out_shape, "build_dense_decoder");
    std::vector<LayerSpec> L;
    std::size_t w = embed_dim;
    for (std::size_t h : hidden) {
        L.push_back(LayerSpec::dense(w, h));
        L.push_back(LayerSpec::relu());
        w = h;
    }
    L.push_back(LayerSpec::dense(w, shape_numel(out_shape)));
    L.push_back(LayerSpec::tanh());
    L.push_back(LayerSpec::reshape(out_shape));
    return NetworkSpec({embed_dim}, std::move(L));
}

AutoencoderSpec build_autoencoder(const Shape& image_shape, std::size_t latent_dim, bool linear,
                                  std::vector<std::size_t> ladder) {
    require_image_shape(image_shape, "build_autoencoder");
    if (latent_dim == 0) throw ShapeError("build_autoencoder: latent_dim must be >= 1");
    const std::size_t flat = shape_numel(image_shape);
    if (linear) {
        std::vector<LayerSpec> L{LayerSpec::reshape({flat}), LayerSpec::dense(flat, latent_dim),
                                 LayerSpec::dense(latent_dim, flat), LayerSpec::reshape(image_shape)};
        return {NetworkSpec(image_shape, std::move(L)), 2, latent_dim};
    }
    if (ladder.empty())
        ladder = image_shape[0] == 1 ? std::vector<std::size_t>{16, 32, 64, 128}
                                     : std::vector<std::size_t>{32, 64, 128, 256};
    const std::size_t s = std::min(halving_stages(image_shape, 4), ladder.size());
    if (s == 0)
        throw ShapeError("build_autoencoder: image sides " + shape_str(image_shape) +
                         " are not divisible by 2 for any pooling stage");
    ladder.resize(s);
    std::vector<LayerSpec> L;
    std::size_t c = image_shape[0];
    for (std::size_t w : ladder) {
        L.push_back(LayerSpec::conv2d(c, w, 3, 1, 1).without_bias());
        L.push_back(LayerSpec::batchnorm(w));
        L.push_back(LayerSpec::leaky_relu(0.2));
        L.push_back(LayerSpec::maxpool2x2());
        c = w;
    }
    const std::size_t h = image_shape[1] >> s, w = image_shape[2] >> s;
    const std::size_t code = c * h * w;
    L.push_back(LayerSpec::reshape({code}));
    L.push_back(LayerSpec::dense(code, latent_dim));
    const std::size_t encoder_layers = L.size();

    L.push_back(LayerSpec::dense(latent_dim, code));
    L.push_back(LayerSpec::reshape({c, h, w}));
    for (std::size_t i = s; i-- > 0;) {
        const std::size_t to = ladder[i == 0 ? 0 : i - 1];
        L.push_back(LayerSpec::conv_transpose2d(c, to, 4, 2, 1).without_bias());
        L.push_back(LayerSpec::batchnorm(to));
        L.push_back(LayerSpec::leaky_relu(0.2));
        c = to;
    }
    L.push_back(LayerSpec::conv_transpose2d(c, image_shape[0], 3, 1, 1));
    L.push_back(LayerSpec::tanh());
    return {NetworkSpec(image_shape, std::move(L)), encoder_layers, latent_dim};
}

LossValue total_loss(const Tensor& pred, const Tensor& target, const TrainConfig& cfg,
                     const PerceptualLoss& perceptual) {
    if (pred.shape() != target.shape())
        throw ShapeError("total_loss: pred " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
    if (cfg.lambda_perceptual > 0 && !perceptual)
        throw ConfigError("lambda_perceptual > 0 but no perceptual backend is registered");
    const std::size_t n = pred.size();
    LossValue r{0.0, Tensor(pred.shape())};
    if (n == 0) return r;
    double sum = 0;
    const double scale = 2.0 * cfg.lambda_mse / double(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = double(pred[i]) - double(target[i]);
        sum += d * d;
        r.grad[i] = static_cast<float>(scale * d);
    }
    r.loss = cfg.lambda_mse * sum / double(n);
    if (cfg.lambda_perceptual > 0) {
        auto [pl, pg] = perceptual(pred, target);
        if (pg.shape() != pred.shape()) throw ShapeError("perceptual backend returned a mis-shaped gradient");
        r.loss += cfg.lambda_perceptual * pl;
        for (std::size_t i = 0; i < n; ++i)
            r.grad[i] = static_cast<float>(double(r.grad[i]) + cfg.lambda_perceptual * double(pg[i]));
    }
    return r;
}

Tensor coordinate_dropout(const Tensor& coords, double p, std::uint64_t seed) {
    if (!(p >= 0 && p < 1)) throw ParameterError("coordinate_dropout: p must be in [0, 1)");
    Tensor out = coords;
    if (p == 0) return out;
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (u(rng) < p) out[i] = 0.0f;
    return out;
}

Split split_indices(std::size_t n, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("val_fraction must be in (0, 1)");
    const auto n_val = static_cast<std::size_t>(std::llround(double(n) * val_fraction));
    if (n_val < 1 || n_val >= n)
        throw ConfigError("split: " + std::to_string(n) + " samples with val_fraction " + std::to_string(val_fraction) +
                          " leaves an empty train or validation set");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    Split s;
    s.val.assign(idx.begin(), idx.begin() + n_val);
    s.train.assign(idx.begin() + n_val, idx.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

Tensor predict_batched(const NetworkSpec& net, const nn::Parameters& params, const Tensor& x, std::size_t chunk) {
    const std::size_t n = x.dim(0);
    Shape full{n};
    full.insert(full.end(), net.output_shape().begin(), net.output_shape().end());
    Tensor out(full);
    const std::size_t stride = shape_numel(net.output_shape());
    for (std::size_t b = 0; b < n; b += chunk) {
        const std::size_t e = std::min(n, b + chunk);
        const Tensor y = nn::predict(net, params, x.rows(b, e));
        std::copy(y.data(), y.data() + y.size(), out.data() + b * stride);
    }
    return out;
}

TrainResult train_network(const NetworkSpec& net, const Tensor& inputs, const ImageBatch& targets,
                          const TrainConfig& cfg, bool coordinate_dropout_on_inputs, const PerceptualLoss& perceptual) {
    cfg.validate();
    if (cfg.lambda_perceptual > 0 && !perceptual)
        throw ConfigError("lambda_perceptual > 0 but no perceptual backend is registered");
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = inputs.dim(0);
    if (targets.count() != n)
        throw ShapeError("train: " + std::to_string(n) + " inputs but " + std::to_string(targets.count()) + " targets");
    const Shape& out = net.output_shape();
    if (!std::equal(out.begin(), out.end(), targets.pixels.shape().begin() + 1) || out.size() != 3)
        throw ShapeError("train: network output " + shape_str(out) + " does not match images " +
                         shape_str(targets.pixels.shape()));

    TrainResult res;
    res.split = split_indices(n, cfg.val_fraction, derive_seed(cfg.seed, "split"));
    const auto& tr = res.split.train;
    const Tensor x_val = gather_rows(inputs, std::span<const std::size_t>(res.split.val));
    const Tensor y_val = gather_rows(targets.pixels, std::span<const std::size_t>(res.split.val));

    nn::Parameters params = nn::init_parameters(net, derive_seed(cfg.seed, "init"));
    nn::AdamState adam = nn::AdamState::zeros(params.size());
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    const std::uint64_t coord_seed = derive_seed(cfg.seed, "coord_dropout");
    const std::uint64_t layer_seed = derive_seed(cfg.seed, "layer_dropout");

    const std::size_t bs = std::min(cfg.batch_size, tr.size());
    std::size_t per_epoch = tr.size() / bs;
    if (tr.size() % bs >= 2) ++per_epoch;
    if (per_epoch == 0) throw ConfigError("train: training split smaller than 2 samples");
    const std::size_t total_steps = per_epoch * cfg.epochs;

    ReconReport& rep = res.report;
    rep.config = cfg;
    rep.n_train = tr.size();
    rep.n_val = res.split.val.size();
    double best = std::numeric_limits<double>::infinity();
    Tensor best_pred;
    std::vector<std::size_t> order = tr;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0;
        for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
            const std::size_t lo = b * bs, hi = std::min(order.size(), lo + bs);
            const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
            Tensor xb = gather_rows(inputs, idx);
            if (coordinate_dropout_on_inputs && cfg.coord_dropout_p > 0)
                xb = coordinate_dropout(xb, cfg.coord_dropout_p, derive_seed(coord_seed, step));
            const Tensor yb = gather_rows(targets.pixels, idx);
            auto fwd = nn::forward<float>(net, params, xb, nn::Mode::Train, derive_seed(layer_seed, step));
            const LossValue lv = total_loss(fwd.y, yb, cfg, perceptual);
            if (!std::isfinite(lv.loss))
                throw OptimizationError("train: non-finite loss at epoch " + std::to_string(epoch));
            const auto bwd = nn::backward<float>(net, params, fwd.tape, lv.grad);
            const double lr = nn::cosine_lr(step, total_steps, cfg.lr, cfg.lr_min);
            auto upd = nn::adam_step(params.flat, bwd.dparams, adam, lr, cfg.beta1, cfg.beta2, cfg.adam_eps,
                                     cfg.weight_decay);
            params.flat = std::move(upd.params);
            params.running = std::move(fwd.running);
            adam = std::move(upd.state);
            epoch_loss += lv.loss;
        }
        rep.train_loss.push_back(epoch_loss / double(per_epoch));

        Tensor pred = predict_batched(net, params, x_val);
        const double vl = total_loss(pred, y_val, cfg, perceptual).loss;
        rep.val_loss.push_back(vl);
        if (vl < best) {
            best = vl;
            rep.best_epoch = epoch;
            res.params = params;
            best_pred = std::move(pred);
        }
    }
    if (best_pred.size() == 0) throw OptimizationError("train: validation loss never finite");

    rep.val_mse = metric_mse(best_pred, y_val);
    const ImageBatch a(best_pred, targets.lo, targets.hi), b(y_val, targets.lo, targets.hi);
    rep.val_psnr = metric_psnr(a, b);
    rep.val_ssim = std::min(a.height(), a.width()) >= kSsimWindow ? metric_ssim(a, b) : 0.0;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

TrainResult train_decoder(const Embedding& e, const ImageBatch& images, const TrainConfig& cfg, const NetworkSpec& net) {
    if (e.coords.rank() != 2 || e.n() != images.count())
        throw ShapeError("train_decoder: embedding has " + std::to_string(e.coords.rank() == 2 ? e.n() : 0) +
                         " rows, images " + std::to_string(images.count()));
    if (net.input_shape() != Shape{e.dim()})
        throw ShapeError("train_decoder: decoder input " + shape_str(net.input_shape()) + " vs embedding dim " +
                         std::to_string(e.dim()));
    auto r = train_network(net, e.coords, images, cfg, true);
    r.report.model = method_name(e.method);
    return r;
}

TrainResult train_autoencoder(const ImageBatch& images, const TrainConfig& cfg, const AutoencoderSpec& ae) {
    const Shape& in = ae.net.input_shape();
    if (!std::equal(in.begin(), in.end(), images.pixels.shape().begin() + 1))
        throw ShapeError("train_autoencoder: network input " + shape_str(in) + " vs images " +
                         shape_str(images.pixels.shape()));
    auto r = train_network(ae.net, images.pixels, images, cfg, false);
    r.report.model = "autoencoder";
    return r;
}

}  // namespace mg
