#pragma once

#include <cstdint>
#include <vector>

#include "mg/image.hpp"
#include "mg/tensor.hpp"

namespace mg {

struct SyntheticManifold {
    Tensor points;     // [n, ambient_dim]
    Tensor intrinsic;  // [n, intrinsic_dim] ground-truth parameters
};

// (t cos t, h, t sin t) + N(0, noise_sd^2); t ~ U[1.5pi, 4.5pi], h ~ U[0, 21].
// intrinsic columns are (t, h).
SyntheticManifold make_swiss_roll(std::size_t n, double noise_sd, std::uint64_t seed);

struct LabeledPoints {
    Tensor points;                   // [n, dim]
    std::vector<std::size_t> label;  // cluster index per row
};

// `clusters` isotropic Gaussians with unit sd whose centers sit `separation`
// apart along distinct axes; rows are emitted cluster by cluster.
LabeledPoints make_gaussian_blobs(std::size_t per_cluster, std::size_t clusters, std::size_t dim,
                                  double separation, std::uint64_t seed);

// Grayscale images of one soft-edged ellipse over a flat background. Seven
// latent factors per image: center (x, y), two semi-axes, rotation,
// foreground and background intensity. Values lie in [0, 1].
// Returns the batch plus a [n, 7] tensor of the latent factors.
struct ShapeImages {
    ImageBatch images;
    Tensor factors;
};
ShapeImages make_shape_images(std::size_t n, std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace mg
