// mgen: command-line pipeline over the mg library.
//
// Every subcommand reads an optional JSON config (--config) and applies its
// flags on top; the merged config is what gets hashed into the manifest.
// Errors go to stderr as one JSON line; exit 1 for runtime failures, 2 for
// usage, config and input-format problems.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mg/diffusion.hpp"
#include "mg/metrics.hpp"
#include "mg/nldr.hpp"
#include "mg/recon.hpp"
#include "mg/rng.hpp"
#include "mg/synthetic.hpp"
#include "mg/tsne.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mg;

namespace {

constexpr const char* kVersion = "0.1.0";

// ---- config plumbing ----

struct Overrides {
    std::vector<std::function<void(json&)>> apply;

    template <class T>
    CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
        auto v = std::make_shared<T>();
        CLI::Option* opt = app->add_option(flag, *v, help);
        apply.push_back([opt, v, pointer](json& j) {
            if (opt->count()) j[json::json_pointer(pointer)] = *v;
        });
        return opt;
    }
    CLI::Option* flag(CLI::App* app, const std::string& flag, const std::string& pointer, const std::string& help) {
        CLI::Option* opt = app->add_flag(flag, help);
        apply.push_back([opt, pointer](json& j) {
            if (opt->count()) j[json::json_pointer(pointer)] = true;
        });
        return opt;
    }
};

struct Command {
    std::string name;
    CLI::App* app = nullptr;
    Overrides ov;
    std::string config_path;
    std::function<void(const json&)> run;
};

json read_json_file(const fs::path& p, const char* what) {
    std::ifstream f(p);
    if (!f) throw FormatError(std::string(what) + " not found: " + p.string());
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw FormatError(std::string(what) + " " + p.string() + " is not valid JSON: " + e.what());
    }
}

json merged_config(const Command& c) {
    json j = json::object();
    if (!c.config_path.empty()) {
        j = read_json_file(c.config_path, "config");
        if (!j.is_object()) throw ConfigError("config " + c.config_path + " must be a JSON object");
    }
    for (const auto& a : c.ov.apply) a(j);
    return j;
}

template <class T>
T get(const json& j, const std::string& pointer, T fallback) {
    try {
        const json::json_pointer p(pointer);
        return j.contains(p) ? j.at(p).get<T>() : fallback;
    } catch (const json::exception& e) {
        throw ConfigError("config key " + pointer + ": " + e.what());
    }
}

std::uint64_t root_seed(const json& cfg) { return get<std::uint64_t>(cfg, "/seed", 0); }
fs::path output_dir(const json& cfg) {
    fs::path d = get<std::string>(cfg, "/output_dir", ".");
    fs::create_directories(d);
    return d;
}

fs::path require_file(const json& cfg, const std::string& pointer, const fs::path& fallback, const char* what) {
    fs::path p = get<std::string>(cfg, pointer, fallback.string());
    if (p.empty()) throw ConfigError(std::string(what) + " path is required (" + pointer + ")");
    if (!fs::exists(p)) throw FormatError(std::string(what) + " not found: " + p.string());
    return p;
}

// ---- manifest ----

std::string hex64(std::uint64_t h) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

std::string file_hash(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot read " + p.string() + " for hashing");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return hex64(fnv1a64(bytes));
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

class StageRecord {
public:
    StageRecord(std::string stage, const json& cfg)
        : stage_(std::move(stage)), cfg_(cfg), started_(utc_now()), t0_(std::chrono::steady_clock::now()) {}

    void file(const fs::path& p) { files_.push_back(p); }
    void timing(const std::string& step, double seconds) { steps_[step] = seconds; }

    // Merges this stage into <output_dir>/manifest.json; paths are stored
    // relative to the output directory when they live inside it.
    void commit(const fs::path& dir) const {
        const fs::path mpath = dir / "manifest.json";
        json m = fs::exists(mpath) ? read_json_file(mpath, "manifest") : json::object();
        m["tool"] = "mgen";
        m["version"] = kVersion;
        json files = json::object();
        for (const auto& f : files_) {
            const fs::path rel = fs::proximate(f, dir);
            const std::string key = rel.string().starts_with("..") ? f.string() : rel.string();
            files[key] = file_hash(f);
        }
        const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
        m["stages"][stage_] = {{"config", cfg_},
                               {"config_hash", hex64(fnv1a64(cfg_.dump()))},
                               {"started", started_},
                               {"seconds", total},
                               {"steps", steps_},
                               {"files", files}};
        std::ofstream(mpath) << m.dump(2) << '\n';
    }

private:
    std::string stage_;
    json cfg_;
    std::string started_;
    std::chrono::steady_clock::time_point t0_;
    std::vector<fs::path> files_;
    json steps_ = json::object();
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_json(const fs::path& p, const json& j) {
    std::ofstream f(p);
    if (!f) throw IoError("cannot write " + p.string());
    f << j.dump(2) << '\n';
}

// ---- data loading ----

bool is_image_tensor(const Tensor& t) { return t.rank() == 4; }

Tensor load_dataset_tensor(const json& cfg) {
    if (cfg.contains(json::json_pointer("/dataset/synthetic"))) {
        const json& s = cfg.at(json::json_pointer("/dataset/synthetic"));
        const std::string kind = get<std::string>(s, "/kind", "shapes");
        const auto n = get<std::size_t>(s, "/n", 2000);
        const auto seed = get<std::uint64_t>(s, "/seed", derive_seed(root_seed(cfg), "dataset"));
        if (kind == "shapes")
            return make_shape_images(n, get<std::size_t>(s, "/height", 28), get<std::size_t>(s, "/width", 28), seed)
                .images.pixels;
        if (kind == "swiss_roll") return make_swiss_roll(n, get<double>(s, "/noise", 0.0), seed).points;
        throw ConfigError("unknown synthetic dataset kind '" + kind + "'");
    }
    return load_tensor(require_file(cfg, "/dataset/path", "", "dataset"));
}

// Resize / channel conversion / global min-max into the configured range.
ImageBatch preprocess(const Tensor& raw, const json& cfg) {
    ImageBatch b(raw, 0.0f, 1.0f);
    const auto h = get<std::size_t>(cfg, "/preprocessing/height", b.height());
    const auto w = get<std::size_t>(cfg, "/preprocessing/width", b.width());
    const auto c = get<std::size_t>(cfg, "/preprocessing/channels", b.channels());
    if (c != b.channels()) b = convert_channels(b, c);
    if (h != b.height() || w != b.width()) b = resize_bilinear(b, h, w);
    const auto range = get<std::vector<double>>(cfg, "/preprocessing/range", {-1.0, 1.0});
    if (range.size() != 2) throw ConfigError("preprocessing.range must be [lo, hi]");
    auto r = normalize_minmax(b, float(range[0]), float(range[1]));
    if (r.degenerate) std::cerr << json{{"warning", "dataset is constant; mapped to the range midpoint"}}.dump() << '\n';
    return r.batch;
}

ImageBatch load_images(const json& cfg) {
    Tensor raw = load_dataset_tensor(cfg);
    if (!is_image_tensor(raw))
        throw ShapeError("dataset must be an image tensor [n, C, H, W], got " + shape_str(raw.shape()));
    return preprocess(raw, cfg);
}

// ---- subcommands ----

void cmd_make_dataset(const json& cfg) {
    const fs::path dir = output_dir(cfg);
    StageRecord rec("make-dataset", cfg);
    const std::string kind = get<std::string>(cfg, "/dataset/kind", "shapes");
    const auto n = get<std::size_t>(cfg, "/dataset/n", 2000);
    const std::uint64_t seed = derive_seed(root_seed(cfg), "dataset");
    const fs::path out = dir / get<std::string>(cfg, "/dataset/file", "dataset.mgt");
    fs::path extra;
    if (kind == "shapes") {
        auto s = make_shape_images(n, get<std::size_t>(cfg, "/dataset/height", 28),
                                   get<std::size_t>(cfg, "/dataset/width", 28), seed);
        save_tensor(s.images.pixels, out);
        extra = fs::path(out).replace_extension(".factors.mgt");
        save_tensor(s.factors, extra);
    } else if (kind == "swiss_roll") {
        auto s = make_swiss_roll(n, get<double>(cfg, "/dataset/noise", 0.0), seed);
        save_tensor(s.points, out);
        extra = fs::path(out).replace_extension(".intrinsic.mgt");
        save_tensor(s.intrinsic, extra);
    } else if (kind == "blobs") {
        const auto clusters = get<std::size_t>(cfg, "/dataset/clusters", 3);
        auto s = make_gaussian_blobs(n / clusters, clusters, get<std::size_t>(cfg, "/dataset/dim", 10),
                                     get<double>(cfg, "/dataset/separation", 10.0), seed);
        save_tensor(s.points, out);
        Tensor labels({s.label.size()});
        for (std::size_t i = 0; i < s.label.size(); ++i) labels[i] = float(s.label[i]);
        extra = fs::path(out).replace_extension(".labels.mgt");
        save_tensor(labels, extra);
    } else {
        throw ConfigError("unknown dataset kind '" + kind + "' (shapes, swiss_roll, blobs)");
    }
    rec.file(out);
    rec.file(extra);
    rec.commit(dir);
    std::cout << json{{"dataset", out.string()}, {"kind", kind}, {"n", n}}.dump() << '\n';
}

void cmd_embed(const json& cfg) {
    const fs::path dir = output_dir(cfg);
    StageRecord rec("embed", cfg);
    auto t0 = std::chrono::steady_clock::now();
    Tensor raw = load_dataset_tensor(cfg);
    Tensor X = is_image_tensor(raw) ? flatten_images(preprocess(raw, cfg)) : raw;
    if (X.rank() != 2) throw ShapeError("embed input must be points [n, D] or images [n, C, H, W]");
    rec.timing("load", seconds_since(t0));

    const Method method = [&] {
        try {
            return parse_method(get<std::string>(cfg, "/method/name", "isomap"));
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
    }();
    const auto k = get<std::size_t>(cfg, "/method/k", 10);
    const auto d = get<std::size_t>(cfg, "/method/dim", 2);
    t0 = std::chrono::steady_clock::now();
    Embedding e;
    switch (method) {
        case Method::LLE: e = lle_embed(X, k, d, get<double>(cfg, "/method/reg", 1e-3)); break;
        case Method::Isomap: e = isomap_embed(X, k, d); break;
        case Method::LE: {
            double sigma = get<double>(cfg, "/method/sigma", 0.0);
            if (sigma <= 0) sigma = median_neighbor_distance(knn_graph(X, k));
            e = le_embed(X, k, sigma, d);
            break;
        }
        case Method::TSNE: {
            TsneConfig tc;
            tc.dim = d;
            tc.perplexity = get<double>(cfg, "/method/perplexity", tc.perplexity);
            tc.learning_rate = get<double>(cfg, "/method/lr", tc.learning_rate);
            tc.iterations = get<std::size_t>(cfg, "/method/iterations", tc.iterations);
            tc.theta = get<double>(cfg, "/method/theta", d <= 3 ? tc.theta : 0.0);
            tc.pca_dims = get<std::size_t>(cfg, "/method/pca_dims", tc.pca_dims);
            tc.seed = derive_seed(root_seed(cfg), "tsne");
            e = tsne_embed(X, tc).embedding;
            break;
        }
    }
    const double secs = seconds_since(t0);
    rec.timing("embed", secs);
    const fs::path out = dir / get<std::string>(cfg, "/method/file", "embedding.mgt");
    save_embedding(e, out);
    rec.file(out);
    rec.file(fs::path(out.string() + ".json"));
    rec.commit(dir);
    std::cout << json{{"embedding", out.string()}, {"method", method_name(method)}, {"n", e.n()}, {"d", e.dim()},
                      {"seconds", secs}, {"diagnostics", e.diagnostics}}
                     .dump()
              << '\n';
}

TrainConfig train_config(const json& cfg, const std::string& section) {
    TrainConfig base;
    base.seed = derive_seed(root_seed(cfg), section);
    try {
        const json::json_pointer p("/" + section + "/train");
        TrainConfig c = cfg.contains(p) ? train_config_from_json(cfg.at(p), base) : base;
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(section + ".train: " + e.what());
    }
}

// Writes originals and reconstructions of up to 16 validation rows as
// interleaved pairs, four pairs per grid row.
fs::path write_recon_grid(const ImageBatch& images, const Tensor& recon_all, const std::vector<std::size_t>& val,
                          const fs::path& stem) {
    std::vector<std::size_t> pick(val.begin(), val.begin() + std::min<std::size_t>(16, val.size()));
    std::sort(pick.begin(), pick.end());
    const Tensor orig = gather_rows(images.pixels, pick);
    const Tensor rec = gather_rows(recon_all, pick);
    const std::size_t stride = orig.size() / std::max<std::size_t>(pick.size(), 1);
    Shape s = orig.shape();
    s[0] = 2 * pick.size();
    Tensor pairs(s);
    for (std::size_t i = 0; i < pick.size(); ++i) {
        std::copy_n(orig.data() + i * stride, stride, pairs.data() + 2 * i * stride);
        std::copy_n(rec.data() + i * stride, stride, pairs.data() + (2 * i + 1) * stride);
    }
    fs::path out = stem;
    out += images.channels() == 1 ? ".pgm" : ".ppm";
    write_grid(ImageBatch(pairs, images.lo, images.hi), 8, out);
    return out;
}

void save_training(const fs::path& dir, const std::string& stem, const nn::NetworkSpec& net, const TrainResult& r,
                   StageRecord& rec, const ImageBatch& images, const Tensor& inputs) {
    const fs::path ck = dir / (stem + ".ckpt.json");
    nn::save_checkpoint(ck, net, r.params, {{"report", to_json(r.report, false)}});
    for (const auto& f : nn::checkpoint_files(ck, net)) rec.file(f);
    // Timing lives in the manifest so the report stays byte-identical on reruns.
    const fs::path rep = dir / (stem + "_report.json");
    write_json(rep, to_json(r.report, false));
    rec.file(rep);
    const Tensor recon = predict_batched(net, r.params, gather_rows(inputs, r.split.val));
    // predict_batched ran on the validation rows only; scatter back by position.
    Shape s = images.pixels.shape();
    Tensor full(s);
    const std::size_t stride = images.image_size();
    for (std::size_t i = 0; i < r.split.val.size(); ++i)
        std::copy_n(recon.data() + i * stride, stride, full.data() + r.split.val[i] * stride);
    rec.file(write_recon_grid(images, full, r.split.val, dir / (stem + "_recon")));
    std::cout << json{{"checkpoint", ck.string()},   {"report", rep.string()},
                      {"val_mse", r.report.val_mse}, {"val_psnr", r.report.val_psnr},
                      {"val_ssim", r.report.val_ssim}, {"best_epoch", r.report.best_epoch}}
                     .dump()
              << '\n';
}

void cmd_train_decoder(const json& cfg) {
    const fs::path dir = output_dir(cfg);
    StageRecord rec("train-decoder", cfg);
    const Embedding e = load_embedding(require_file(cfg, "/embedding", dir / "embedding.mgt", "embedding"));
    const ImageBatch images = load_images(cfg);
    if (e.n() != images.count())
        throw AlignmentError("embedding has " + std::to_string(e.n()) + " rows but the dataset has " +
                             std::to_string(images.count()) + " images");
    const std::string arch = get<std::string>(cfg, "/decoder/arch", "paper_conv");
    const Shape out_shape{images.channels(), images.height(), images.width()};
    nn::NetworkSpec net;
    if (arch == "paper_conv")
        net = build_paper_decoder(e.dim(), out_shape,
                                  get<std::vector<std::size_t>>(cfg, "/decoder/widths", {128, 64, 32}));
    else if (arch == "dense")
        net = build_dense_decoder(e.dim(), out_shape, get<std::vector<std::size_t>>(cfg, "/decoder/widths", {256, 512}));
    else
        throw ConfigError("decoder.arch must be paper_conv or dense, got '" + arch + "'");
    const TrainConfig tc = train_config(cfg, "decoder");
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult r = train_decoder(e, images, tc, net);
    r.report.arch = arch;
    rec.timing("train", seconds_since(t0));
    save_training(dir, "decoder", net, r, rec, images, e.coords);
    rec.commit(dir);
}

void cmd_train_ae(const json& cfg) {
    const fs::path dir = output_dir(cfg);
    StageRecord rec("train-ae", cfg);
    const ImageBatch images = load_images(cfg);
    const AutoencoderSpec ae = build_autoencoder({images.channels(), images.height(), images.width()},
                                                 get<std::size_t>(cfg, "/autoencoder/latent", 50),
                                                 get<bool>(cfg, "/autoencoder/linear", false));
    const TrainConfig tc = train_config(cfg, "autoencoder");
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult r = train_autoencoder(images, tc, ae);
    r.report.arch = get<bool>(cfg, "/autoencoder/linear", false) ? "linear_ae" : "conv_ae";
    rec.timing("train", seconds_since(t0));
    save_training(dir, "autoencoder", ae.net, r, rec, images, images.pixels);
    rec.commit(dir);
}

NoiseSchedule schedule_from(const json& cfg) {
    return linear_schedule(get<std::size_t>(cfg, "/diffusion/T", 1000), get<double>(cfg, "/diffusion/beta1", 1e-4),
                           get<double>(cfg, "/diffusion/betaT", 0.02));
}

DenoiserSpec denoiser_from(const json& cfg, std::size_t dim) {
    return make_denoiser(dim, get<std::vector<std::size_t>>(cfg, "/diffusion/hidden", {256, 256, 256}),
                         get<std::size_t>(cfg, "/diffusion/time_embed_dim", 32));
}

// Standardizes unless the coordinates already pass the check; the returned
// embedding always carries stats so samples can be mapped back.
Embedding standardized_for_diffusion(const Embedding& raw) {
    try {
        require_standardized(raw.coords);
    } catch (const ConfigError&) {
        std::cerr << json{{"warning", "embedding was not standardized; standardizing before diffusion"}}.dump()
                  << '\n';
    }
    return standardize_embedding(raw);
}

json standardization_json(const Standardization& s) { return {{"mean", s.mean}, {"sd", s.sd}}; }

void cmd_train_diffusion(const json& cfg) {
    const fs::path dir = output_dir(cfg);
    StageRecord rec("train-diffusion", cfg);
    const Embedding e = standardized_for_diffusion(
        load_embedding(require_file(cfg, "/embedding", dir / "embedding.mgt", "embedding")));
    const NoiseSchedule sched = schedule_from(cfg);
    const DenoiserSpec spec = denoiser_from(cfg, e.dim());
    DiffusionConfig dc;
    dc.seed = derive_seed(root_seed(cfg), "diffusion");
    try {
        const json::json_pointer p("/diffusion/train");
        if (cfg.contains(p)) dc = diffusion_config_from_json(cfg.at(p), dc);
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("diffusion.train: ") + ex.what());
    }
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = train_diffusion(e.coords, sched, spec, dc);
    rec.timing("train", seconds_since(t0));
    const fs::path ck = dir / "denoiser.ckpt.json";
    save_denoiser(ck, spec, r.params, sched,
                  {{"standardization", standardization_json(*e.standardization)},
                   {"method", method_name(e.method)},
                   {"config", to_json(dc)},
                   {"loss_history", r.loss_history}});
    for (const auto& f : nn::checkpoint_files(ck, spec.net)) rec.file(f);
    rec.commit(dir);
    std::cout << json{{"checkpoint", ck.string()},
                      {"initial_loss", r.loss_history.front()},
                      {"final_loss", r.loss_history.back()}}
                     .dump()
              << '\n';
}

void cmd_sample(const json& cfg) {
    const fs::path dir = output_dir(cfg);
    StageRecord rec("sample", cfg);
    const std::string dec_path = get<std::string>(cfg, "/sample/decoder", "");
    if (dec_path.empty()) throw ConfigError("sample needs a decoder checkpoint (--decoder)");
    if (!fs::exists(dec_path)) throw ConfigError("decoder checkpoint not found: " + dec_path);
    const nn::Checkpoint dec = nn::load_checkpoint(dec_path);

    DenoiserSpec spec;
    nn::Parameters params;
    NoiseSchedule sched;
    Embedding e;
    if (get<bool>(cfg, "/sample/untrained", false)) {
        // Fresh weights; standardization comes from the embedding itself.
        e = standardized_for_diffusion(
            load_embedding(require_file(cfg, "/embedding", dir / "embedding.mgt", "embedding")));
        sched = schedule_from(cfg);
        spec = denoiser_from(cfg, e.dim());
        params = nn::init_parameters(spec.net, derive_seed(root_seed(cfg), "denoiser_init"));
    } else {
        auto l = load_denoiser(require_file(cfg, "/sample/denoiser", dir / "denoiser.ckpt.json", "denoiser"));
        spec = std::move(l.spec);
        params = std::move(l.params);
        sched = std::move(l.sched);
        Standardization s;
        try {
            s.mean = l.meta.at("standardization").at("mean").get<std::vector<double>>();
            s.sd = l.meta.at("standardization").at("sd").get<std::vector<double>>();
        } catch (const json::exception&) {
            throw FormatError("denoiser checkpoint carries no standardization stats");
        }
        e.coords = Tensor({1, spec.data_dim});
        e.standardization = std::move(s);
    }
    const auto n = get<std::size_t>(cfg, "/sample/n", 64);
    const auto t0 = std::chrono::steady_clock::now();
    const Generation g =
        generate_images(spec, params, sched, e, dec.net, dec.params, n, derive_seed(root_seed(cfg), "sample"));
    rec.timing("sample", seconds_since(t0));

    const fs::path coords = dir / "samples.mgt";
    save_tensor(g.coords, coords);
    rec.file(coords);
    fs::path grid = dir / (g.images.channels() == 1 ? "samples.pgm" : "samples.ppm");
    const auto cols = std::size_t(std::ceil(std::sqrt(double(n))));
    write_grid(g.images, cols, grid);
    rec.file(grid);
    rec.commit(dir);
    std::cout << json{{"samples", coords.string()}, {"grid", grid.string()}, {"n", n}}.dump() << '\n';
}

void cmd_evaluate(const json& cfg) {
    const fs::path dir = output_dir(cfg);
    StageRecord rec("evaluate", cfg);
    const auto paths = get<std::vector<std::string>>(cfg, "/evaluate/reports", {});
    if (paths.empty()) throw ConfigError("evaluate needs at least one report");
    std::vector<ReconReport> reports;
    for (const auto& p : paths) {
        const json j = read_json_file(p, "report");
        try {
            reports.push_back(report_from_json(j));
        } catch (const std::exception& e) {
            throw FormatError("malformed report " + p + ": " + e.what());
        }
    }
    std::stable_sort(reports.begin(), reports.end(),
                     [](const ReconReport& a, const ReconReport& b) { return a.val_mse < b.val_mse; });
    json rows = json::array();
    std::ostringstream table;
    table << std::left << std::setw(6) << "rank" << std::setw(14) << "model" << std::setw(12) << "arch"
          << std::setw(12) << "val_mse" << std::setw(10) << "psnr" << "ssim\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        table << std::left << std::setw(6) << i + 1 << std::setw(14) << r.model << std::setw(12) << r.arch
              << std::setw(12) << std::setprecision(5) << r.val_mse << std::setw(10) << std::setprecision(4)
              << r.val_psnr << std::setprecision(4) << r.val_ssim << '\n';
        rows.push_back({{"rank", i + 1},
                        {"model", r.model},
                        {"arch", r.arch},
                        {"val_mse", r.val_mse},
                        {"val_psnr", std::isfinite(r.val_psnr) ? json(r.val_psnr) : json(nullptr)},
                        {"val_ssim", r.val_ssim}});
    }
    const fs::path out = dir / "evaluation.json";
    write_json(out, {{"rows", rows}});
    rec.file(out);
    rec.commit(dir);
    std::cout << table.str();
}

int exit_code_for(const std::string& kind) {
    static const std::set<std::string> usage{"ConfigError", "FormatError", "ParameterError", "UsageError"};
    return usage.count(kind) ? 2 : 1;
}

int report_error(const std::string& command, const std::string& kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}, {"command", command}}.dump() << '\n';
    return exit_code_for(kind);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mgen: manifold embeddings, decoders and latent diffusion"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::vector<std::unique_ptr<Command>> cmds;
    auto make = [&](const std::string& name, const std::string& help, std::function<void(const json&)> run) {
        auto c = std::make_unique<Command>();
        c->name = name;
        c->app = app.add_subcommand(name, help);
        c->run = std::move(run);
        c->app->add_option("--config", c->config_path, "JSON config; flags override its values");
        c->ov.add<std::uint64_t>(c->app, "--seed", "/seed", "root seed");
        c->ov.add<std::string>(c->app, "-o,--output-dir", "/output_dir", "directory for artifacts and manifest.json");
        cmds.push_back(std::move(c));
        return cmds.back().get();
    };
    auto dataset_opts = [](Command* c) {
        c->ov.add<std::string>(c->app, "--input", "/dataset/path", "MGT1 tensor: images [n,C,H,W] or points [n,D]");
        c->ov.add<std::size_t>(c->app, "--height", "/preprocessing/height", "resize images to this height");
        c->ov.add<std::size_t>(c->app, "--width", "/preprocessing/width", "resize images to this width");
        c->ov.add<std::size_t>(c->app, "--channels", "/preprocessing/channels", "1 (gray) or 3 (RGB)");
    };
    auto train_opts = [](Command* c, const std::string& s) {
        c->ov.add<std::size_t>(c->app, "--epochs", "/" + s + "/train/epochs", "training epochs");
        c->ov.add<std::size_t>(c->app, "--batch-size", "/" + s + "/train/batch_size", "minibatch size");
        c->ov.add<double>(c->app, "--lr", "/" + s + "/train/lr", "Adam learning rate");
        c->ov.add<double>(c->app, "--weight-decay", "/" + s + "/train/weight_decay", "decoupled weight decay");
        c->ov.add<double>(c->app, "--val-fraction", "/" + s + "/train/val_fraction", "held-out fraction");
    };

    Command* c = make("make-dataset", "write a synthetic dataset", cmd_make_dataset);
    c->ov.add<std::string>(c->app, "--kind", "/dataset/kind", "shapes | swiss_roll | blobs");
    c->ov.add<std::size_t>(c->app, "--n", "/dataset/n", "number of samples");
    c->ov.add<std::size_t>(c->app, "--height", "/dataset/height", "image height (shapes)");
    c->ov.add<std::size_t>(c->app, "--width", "/dataset/width", "image width (shapes)");
    c->ov.add<double>(c->app, "--noise", "/dataset/noise", "swiss roll noise sd");
    c->ov.add<std::string>(c->app, "--file", "/dataset/file", "output file name inside the output dir");

    c = make("embed", "run an NLDR method", cmd_embed);
    dataset_opts(c);
    c->ov.add<std::string>(c->app, "--method", "/method/name", "lle | isomap | le | tsne");
    c->ov.add<std::size_t>(c->app, "--k", "/method/k", "neighbours");
    c->ov.add<std::size_t>(c->app, "--dim", "/method/dim", "embedding dimension");
    c->ov.add<double>(c->app, "--perplexity", "/method/perplexity", "t-SNE perplexity");
    c->ov.add<std::size_t>(c->app, "--iterations", "/method/iterations", "t-SNE iterations");
    c->ov.add<double>(c->app, "--theta", "/method/theta", "Barnes-Hut theta (0 = exact)");
    c->ov.add<std::size_t>(c->app, "--pca-dims", "/method/pca_dims", "t-SNE PCA pre-reduction");
    c->ov.add<double>(c->app, "--sigma", "/method/sigma", "LE kernel width (0 = median edge)");
    c->ov.add<double>(c->app, "--reg", "/method/reg", "LLE regularization");
    c->ov.add<std::string>(c->app, "--file", "/method/file", "output file name inside the output dir");

    c = make("train-decoder", "train a decoder from embedding to images", cmd_train_decoder);
    dataset_opts(c);
    c->ov.add<std::string>(c->app, "--embedding", "/embedding", "embedding file");
    c->ov.add<std::string>(c->app, "--arch", "/decoder/arch", "paper_conv | dense");
    c->ov.add<std::vector<std::size_t>>(c->app, "--widths", "/decoder/widths", "channel or hidden widths");
    train_opts(c, "decoder");

    c = make("train-ae", "train the convolutional autoencoder baseline", cmd_train_ae);
    dataset_opts(c);
    c->ov.add<std::size_t>(c->app, "--latent", "/autoencoder/latent", "latent dimension");
    c->ov.flag(c->app, "--linear", "/autoencoder/linear", "dense-only linear autoencoder");
    train_opts(c, "autoencoder");

    c = make("train-diffusion", "train a DDPM denoiser on embedding coordinates", cmd_train_diffusion);
    c->ov.add<std::string>(c->app, "--embedding", "/embedding", "embedding file");
    c->ov.add<std::size_t>(c->app, "--T", "/diffusion/T", "diffusion steps");
    c->ov.add<std::vector<std::size_t>>(c->app, "--hidden", "/diffusion/hidden", "denoiser hidden widths");
    c->ov.add<std::size_t>(c->app, "--epochs", "/diffusion/train/epochs", "training epochs");
    c->ov.add<double>(c->app, "--lr", "/diffusion/train/lr", "Adam learning rate");
    c->ov.add<std::size_t>(c->app, "--batch-size", "/diffusion/train/batch_size", "minibatch size");

    c = make("sample", "sample coordinates and decode them to an image grid", cmd_sample);
    c->ov.add<std::string>(c->app, "--denoiser", "/sample/denoiser", "denoiser checkpoint");
    c->ov.add<std::string>(c->app, "--decoder", "/sample/decoder", "decoder checkpoint");
    c->ov.add<std::size_t>(c->app, "--n", "/sample/n", "number of samples");
    c->ov.flag(c->app, "--untrained", "/sample/untrained", "use a freshly initialized denoiser");
    c->ov.add<std::string>(c->app, "--embedding", "/embedding", "embedding (with --untrained)");
    c->ov.add<std::size_t>(c->app, "--T", "/diffusion/T", "diffusion steps (with --untrained)");
    c->ov.add<std::vector<std::size_t>>(c->app, "--hidden", "/diffusion/hidden", "denoiser widths (with --untrained)");

    c = make("evaluate", "tabulate reconstruction reports by validation MSE", cmd_evaluate);
    c->ov.add<std::vector<std::string>>(c->app, "reports", "/evaluate/reports", "report JSON files");

    std::string active = "mgen";
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error(active, "UsageError", e.what());
    }
    for (const auto& cmd : cmds) {
        if (!cmd->app->parsed()) continue;
        active = cmd->name;
        try {
            cmd->run(merged_config(*cmd));
            return 0;
        } catch (const Error& e) {
            return report_error(active, e.kind(), e.what());
        } catch (const std::exception& e) {
            return report_error(active, "InternalError", e.what());
        }
    }
    return report_error(active, "UsageError", "no subcommand");
}
