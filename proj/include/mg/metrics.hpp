#pragma once

#include "mg/image.hpp"
#include "mg/tensor.hpp"

namespace mg {

// Mean squared elementwise difference, accumulated in f64.
double metric_mse(const Tensor& a, const Tensor& b);

// Both batches are rescaled from their declared range to [0, 1]; peak 1.
// Returns +infinity when the images are identical.
double metric_psnr(const ImageBatch& a, const ImageBatch& b);

// Mean local SSIM over uniform 8x8 windows (stride 1), population
// statistics, C1 = 0.01^2, C2 = 0.03^2, averaged over channels and images.
double metric_ssim(const ImageBatch& a, const ImageBatch& b);

constexpr std::size_t kSsimWindow = 8;

}  // namespace mg
