#pragma once

#include <filesystem>
#include <utility>

#include "mg/tensor.hpp"

namespace mg {

// Batch of images in NCHW layout with a declared value range.
struct ImageBatch {
    Tensor pixels;  // [count, channels, height, width]
    float lo = 0.0f;
    float hi = 1.0f;

    ImageBatch() = default;
    ImageBatch(Tensor px, float lo_, float hi_);

    std::size_t count() const { return pixels.dim(0); }
    std::size_t channels() const { return pixels.dim(1); }
    std::size_t height() const { return pixels.dim(2); }
    std::size_t width() const { return pixels.dim(3); }
    std::size_t image_size() const { return channels() * height() * width(); }
};

struct NormalizeResult {
    ImageBatch batch;
    bool degenerate = false;  // input was constant; mapped to the range midpoint
};

// Global (whole-batch) affine min-max rescale into [lo, hi].
NormalizeResult normalize_minmax(const ImageBatch& batch, float lo, float hi);

// Bilinear resampling with half-pixel centers (align_corners = false).
ImageBatch resize_bilinear(const ImageBatch& batch, std::size_t out_h, std::size_t out_w);

// [count, C, H, W] -> [count, C*H*W]; the inverse needs the image dims.
Tensor flatten_images(const ImageBatch& batch);
ImageBatch unflatten_images(const Tensor& flat, std::size_t channels, std::size_t height,
                            std::size_t width, float lo, float hi);

// Convert image channels to grayscale (luma) or replicate gray to RGB.
ImageBatch convert_channels(const ImageBatch& batch, std::size_t channels);

// Binary PGM (P5) / PPM (P6), maxval 255. Reading yields one image with range [0, 255].
ImageBatch read_pnm(const std::filesystem::path& path);
void write_pnm(const ImageBatch& image, const std::filesystem::path& path);

// Tiles the batch into a cols-wide grid and writes it as PGM/PPM.
void write_grid(const ImageBatch& batch, std::size_t cols, const std::filesystem::path& path);
ImageBatch tile_grid(const ImageBatch& batch, std::size_t cols);

}  // namespace mg
