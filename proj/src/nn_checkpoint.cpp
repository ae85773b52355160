#include <fstream>

#include "mg/nn.hpp"

namespace mg::nn {

using nlohmann::json;

json to_json(const NetworkSpec& net) {
    json layers = json::array();
    for (const auto& l : net.layers()) {
        json j{{"kind", kind_name(l.kind)}};
        switch (l.kind) {
            case LayerKind::Dense:
                j["in"] = l.in, j["out"] = l.out, j["bias"] = l.bias;
                break;
            case LayerKind::Conv2D:
            case LayerKind::ConvTranspose2D:
                j["in"] = l.in, j["out"] = l.out, j["kernel"] = l.kernel, j["stride"] = l.stride,
                j["padding"] = l.padding;
                if (l.kind == LayerKind::ConvTranspose2D) j["output_padding"] = l.output_padding;
                j["bias"] = l.bias;
                break;
            case LayerKind::BatchNorm:
                j["channels"] = l.in, j["momentum"] = l.momentum, j["eps"] = l.eps;
                break;
            case LayerKind::LeakyReLU:
                j["slope"] = l.slope;
                break;
            case LayerKind::Dropout:
                j["p"] = l.p;
                break;
            case LayerKind::Reshape:
                j["target"] = l.target;
                break;
            default:
                break;
        }
        layers.push_back(std::move(j));
    }
    return {{"input", net.input_shape()}, {"layers", layers}};
}

NetworkSpec network_from_json(const json& j) {
    try {
        std::vector<LayerSpec> layers;
        for (const auto& lj : j.at("layers")) {
            const LayerKind k = parse_kind(lj.at("kind").get<std::string>());
            switch (k) {
                case LayerKind::Dense:
                    layers.push_back(LayerSpec::dense(lj.at("in"), lj.at("out")));
                    break;
                case LayerKind::Conv2D:
                    layers.push_back(LayerSpec::conv2d(lj.at("in"), lj.at("out"), lj.at("kernel"), lj.at("stride"),
                                                       lj.at("padding")));
                    break;
                case LayerKind::ConvTranspose2D:
                    layers.push_back(LayerSpec::conv_transpose2d(lj.at("in"), lj.at("out"), lj.at("kernel"),
                                                                 lj.at("stride"), lj.at("padding"),
                                                                 lj.value("output_padding", std::size_t{0})));
                    break;
                case LayerKind::MaxPool2x2:
                    layers.push_back(LayerSpec::maxpool2x2());
                    break;
                case LayerKind::BatchNorm:
                    layers.push_back(LayerSpec::batchnorm(lj.at("channels"), lj.value("momentum", 0.1),
                                                          lj.value("eps", 1e-5)));
                    break;
                case LayerKind::ReLU:
                    layers.push_back(LayerSpec::relu());
                    break;
                case LayerKind::LeakyReLU:
                    layers.push_back(LayerSpec::leaky_relu(lj.value("slope", 0.2)));
                    break;
                case LayerKind::Tanh:
                    layers.push_back(LayerSpec::tanh());
                    break;
                case LayerKind::Dropout:
                    layers.push_back(LayerSpec::dropout(lj.at("p")));
                    break;
                case LayerKind::Reshape:
                    layers.push_back(LayerSpec::reshape(lj.at("target").get<Shape>()));
                    break;
            }
            layers.back().bias = lj.value("bias", true);
        }
        return NetworkSpec(j.at("input").get<Shape>(), std::move(layers));
    } catch (const json::exception& e) {
        throw FormatError(std::string("network spec: ") + e.what());
    }
}

namespace {

std::filesystem::path sibling(const std::filesystem::path& path, const std::string& suffix) {
    return std::filesystem::path(path.string() + suffix);
}

}  // namespace

std::vector<std::filesystem::path> checkpoint_files(const std::filesystem::path& path, const NetworkSpec& net) {
    std::vector<std::filesystem::path> out{path, sibling(path, ".params.mgt")};
    for (std::size_t i = 0; i < net.layers().size(); ++i)
        if (net.layers()[i].kind == LayerKind::BatchNorm) out.push_back(sibling(path, ".bn" + std::to_string(i) + ".mgt"));
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& net, const Parameters& params,
                     const json& meta) {
    if (params.size() != [&] {
            std::size_t n = 0;
            for (const auto& b : parameter_layout(net)) n += b.length;
            return n;
        }())
        throw ShapeError("save_checkpoint: parameter count does not match network");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    json layout = json::array();
    for (const auto& b : params.layout)
        layout.push_back({{"layer", b.layer}, {"name", b.name}, {"offset", b.offset}, {"length", b.length},
                          {"shape", b.shape}});
    const json header{{"format", "MGCKPT/1"}, {"network", to_json(net)}, {"param_count", params.size()},
                      {"layout", layout}, {"meta", meta}};
    {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot write " + path.string());
        f << header.dump(2) << '\n';
        if (!f) throw IoError("write failed: " + path.string());
    }
    save_tensor(params.flat, sibling(path, ".params.mgt"));
    for (const auto& rs : params.running) {
        const std::size_t C = rs.mean.size();
        Tensor t({2, C});
        for (std::size_t c = 0; c < C; ++c) t.at(0, c) = rs.mean[c], t.at(1, c) = rs.var[c];
        save_tensor(t, sibling(path, ".bn" + std::to_string(rs.layer) + ".mgt"));
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path.string());
    json header;
    try {
        header = json::parse(f);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (header.value("format", "") != "MGCKPT/1") throw FormatError(path.string() + ": not an MGCKPT/1 checkpoint");
    Checkpoint ck;
    ck.net = network_from_json(header.at("network"));
    ck.meta = header.value("meta", json::object());
    ck.params = init_parameters(ck.net, 0);
    Tensor flat = load_tensor(sibling(path, ".params.mgt"));
    if (flat.size() != ck.params.size())
        throw FormatError(path.string() + ": parameter blob has " + std::to_string(flat.size()) + " values, expected " +
                          std::to_string(ck.params.size()));
    ck.params.flat = flat.reshaped({flat.size()});
    for (auto& rs : ck.params.running) {
        const auto p = sibling(path, ".bn" + std::to_string(rs.layer) + ".mgt");
        const Tensor t = load_tensor(p);
        if (t.rank() != 2 || t.dim(0) != 2 || t.dim(1) != rs.mean.size())
            throw FormatError(p.string() + ": running stats shape " + shape_str(t.shape()));
        for (std::size_t c = 0; c < rs.mean.size(); ++c) rs.mean[c] = t.at(0, c), rs.var[c] = t.at(1, c);
    }
    return ck;
}

}  // namespace mg::nn
