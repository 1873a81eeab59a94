#pragma once

#include "sodkit/image.hpp"
#include "sodkit/params.hpp"

namespace sodkit {

// One synthetic training pair: RGB image in [0,1] (planar CHW) and an exactly
// binary saliency mask, both side×side.
struct Sample {
    int side = 0;
    std::uint64_t seed = 0;
    std::vector<double> image;  // 3 * side * side
    std::vector<double> mask;   // side * side, values in {0,1}
};

// Seed ranges of the fixed dataset split.
constexpr std::uint64_t kTrainSeedBase = 0;
constexpr int kTrainSeedCount = 800;
constexpr std::uint64_t kValSeedBase = 800;
constexpr int kValSeedCount = 100;

// Deterministic generation: 1-3 figures (ellipse / convex polygon / ring) with
// distinct flat colors over a low-frequency noise background. The mask is the
// union of the figures' supersampled-then-thresholded coverage and its
// foreground fraction is rejection-sampled into [0.02, 0.6].
Sample generate_sample(std::uint64_t seed, int side);

// Independent k*90-degree rotation (k uniform in 0..3) and horizontal flip
// (probability 1/2), applied identically to image and mask.
Sample augment(const Sample& s, std::uint64_t seed);

Image sample_image(const Sample& s);
Image sample_mask(const Sample& s);

}  // namespace sodkit
