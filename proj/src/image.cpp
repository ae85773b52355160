#include "mg/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace mg {

ImageBatch::ImageBatch(Tensor px, float lo_, float hi_) : pixels(std::move(px)), lo(lo_), hi(hi_) {
    if (pixels.rank() != 4) throw ShapeError("image batch must be [count, C, H, W], got " + shape_str(pixels.shape()));
    if (pixels.dim(1) != 1 && pixels.dim(1) != 3)
        throw ShapeError("image batch must have 1 or 3 channels, got " + std::to_string(pixels.dim(1)));
    if (!(lo < hi)) throw ParameterError("image value range must satisfy lo < hi");
}

NormalizeResult normalize_minmax(const ImageBatch& batch, float lo, float hi) {
    if (!(lo < hi)) throw ParameterError("normalize_minmax: lo must be < hi");
    NormalizeResult r{ImageBatch(batch.pixels, lo, hi), false};
    auto px = r.batch.pixels.values();
    if (px.empty()) return r;
    const auto [mn_it, mx_it] = std::minmax_element(px.begin(), px.end());
    const double mn = *mn_it, mx = *mx_it;
    if (mx == mn) {
        const float mid = static_cast<float>((double(lo) + double(hi)) / 2.0);
        std::fill(px.begin(), px.end(), mid);
        r.degenerate = true;
        return r;
    }
    const double span = double(hi) - double(lo);
    for (float& v : px) {
        const double u = (double(v) - mn) / (mx - mn);
        v = std::clamp(static_cast<float>(double(lo) + u * span), lo, hi);
    }
    return r;
}

ImageBatch resize_bilinear(const ImageBatch& batch, std::size_t out_h, std::size_t out_w) {
    if (out_h < 1 || out_w < 1) throw ParameterError("resize_bilinear: output dims must be >= 1");
    const std::size_t n = batch.count(), c = batch.channels(), h = batch.height(), w = batch.width();
    if (out_h == h && out_w == w) return batch;

    struct Tap {
        std::size_t i0, i1;
        double f;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> t(out);
        const double scale = double(in) / double(out);
        for (std::size_t o = 0; o < out; ++o) {
            double src = (double(o) + 0.5) * scale - 0.5;
            src = std::clamp(src, 0.0, double(in - 1));
            const auto i0 = static_cast<std::size_t>(std::floor(src));
            const std::size_t i1 = std::min(i0 + 1, in - 1);
            t[o] = {i0, i1, src - double(i0)};
        }
        return t;
    };
    const auto ty = taps(h, out_h), tx = taps(w, out_w);

    Tensor out({n, c, out_h, out_w});
    for (std::size_t p = 0; p < n * c; ++p) {
        const float* src = batch.pixels.data() + p * h * w;
        float* dst = out.data() + p * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const auto& a = ty[y];
            for (std::size_t x = 0; x < out_w; ++x) {
                const auto& b = tx[x];
                const double top = (1 - b.f) * src[a.i0 * w + b.i0] + b.f * src[a.i0 * w + b.i1];
                const double bot = (1 - b.f) * src[a.i1 * w + b.i0] + b.f * src[a.i1 * w + b.i1];
                dst[y * out_w + x] = std::clamp(static_cast<float>((1 - a.f) * top + a.f * bot), batch.lo, batch.hi);
            }
        }
    }
    return ImageBatch(std::move(out), batch.lo, batch.hi);
}

Tensor flatten_images(const ImageBatch& batch) {
    return batch.pixels.reshaped({batch.count(), batch.image_size()});
}

ImageBatch unflatten_images(const Tensor& flat, std::size_t channels, std::size_t height, std::size_t width,
                            float lo, float hi) {
    if (flat.rank() != 2 || flat.dim(1) != channels * height * width)
        throw ShapeError("unflatten: " + shape_str(flat.shape()) + " does not hold " + std::to_string(channels) +
                         "x" + std::to_string(height) + "x" + std::to_string(width) + " images");
    return ImageBatch(flat.reshaped({flat.dim(0), channels, height, width}), lo, hi);
}

ImageBatch convert_channels(const ImageBatch& batch, std::size_t channels) {
    if (channels == batch.channels()) return batch;
    const std::size_t n = batch.count(), hw = batch.height() * batch.width();
    Tensor out({n, channels, batch.height(), batch.width()});
    for (std::size_t i = 0; i < n; ++i) {
        const float* src = batch.pixels.data() + i * batch.channels() * hw;
        float* dst = out.data() + i * channels * hw;
        if (channels == 1) {
            for (std::size_t p = 0; p < hw; ++p)
                dst[p] = static_cast<float>(0.299 * src[p] + 0.587 * src[hw + p] + 0.114 * src[2 * hw + p]);
        } else {
            for (std::size_t ch = 0; ch < 3; ++ch) std::copy_n(src, hw, dst + ch * hw);
        }
    }
    return ImageBatch(std::move(out), batch.lo, batch.hi);
}

namespace {

void skip_ws_and_comments(std::istream& in) {
    for (;;) {
        int ch = in.peek();
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            return;
        }
    }
}

std::size_t read_header_int(std::istream& in, const std::string& ctx) {
    skip_ws_and_comments(in);
    long v = -1;
    if (!(in >> v) || v <= 0) throw FormatError(ctx + ": malformed PNM header");
    return static_cast<std::size_t>(v);
}

}  // namespace

ImageBatch read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    char magic[2] = {};
    in.read(magic, 2);
    if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
        throw FormatError(path.string() + ": not a binary PGM/PPM (P5/P6)");
    const std::size_t channels = magic[1] == '5' ? 1 : 3;
    const std::size_t w = read_header_int(in, path.string());
    const std::size_t h = read_header_int(in, path.string());
    const std::size_t maxval = read_header_int(in, path.string());
    if (maxval != 255) throw FormatError(path.string() + ": only maxval 255 is supported");
    in.get();  // single whitespace before raster
    std::vector<unsigned char> raster(w * h * channels);
    in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
    if (static_cast<std::size_t>(in.gcount()) != raster.size()) throw FormatError(path.string() + ": truncated raster");
    Tensor px({1, channels, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < channels; ++c)
                px[(c * h + y) * w + x] = raster[(y * w + x) * channels + c];
    return ImageBatch(std::move(px), 0.0f, 255.0f);
}

void write_pnm(const ImageBatch& image, const std::filesystem::path& path) {
    if (image.count() != 1) throw ParameterError("write_pnm expects a single image; use write_grid");
    const std::size_t c = image.channels(), h = image.height(), w = image.width();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << (c == 1 ? "P5" : "P6") << '\n' << w << ' ' << h << "\n255\n";
    std::vector<unsigned char> raster(w * h * c);
    const double scale = 255.0 / (double(image.hi) - double(image.lo));
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double v = (image.pixels[(ch * h + y) * w + x] - double(image.lo)) * scale;
                raster[(y * w + x) * c + ch] = static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
            }
    out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

ImageBatch tile_grid(const ImageBatch& batch, std::size_t cols) {
    const std::size_t n = batch.count(), c = batch.channels(), h = batch.height(), w = batch.width();
    cols = std::max<std::size_t>(1, std::min(cols, std::max<std::size_t>(n, 1)));
    const std::size_t rows = std::max<std::size_t>(1, (n + cols - 1) / cols);
    Tensor grid({1, c, rows * h, cols * w}, batch.lo);
    const std::size_t gw = cols * w, gh = rows * h;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t oy = (i / cols) * h, ox = (i % cols) * w;
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                std::copy_n(batch.pixels.data() + ((i * c + ch) * h + y) * w, w,
                            grid.data() + (ch * gh + oy + y) * gw + ox);
    }
    return ImageBatch(std::move(grid), batch.lo, batch.hi);
}

void write_grid(const ImageBatch& batch, std::size_t cols, const std::filesystem::path& path) {
    write_pnm(tile_grid(batch, cols), path);
}

}  // namespace mg
