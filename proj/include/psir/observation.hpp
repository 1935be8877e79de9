#pragma once

#include "psir/tensor.hpp"

#include <optional>
#include <vector>

namespace psir {

/// Image stack plus mask, with optional ground truth for evaluation.
struct ObservationSet {
    int width = 0, height = 0, channels = 1;
    std::vector<Tensor> images;     // each [H,W,C], linear float
    Tensor mask;                    // [H,W], nonzero = valid
    std::vector<Tensor> loss_masks; // optional per-image [H,W] 0/1 (percentile filter)

    std::optional<Tensor> gt_normals;      // [H,W,3]
    std::optional<Tensor> gt_depth;        // [H,W]
    std::optional<Tensor> gt_lights;       // [F,3]
    std::optional<Tensor> gt_intensities;  // [F,C]
    std::vector<Tensor> gt_shadows;        // empty, or [F] binary [H,W]

    int light_count() const { return static_cast<int>(images.size()); }
};

} // namespace psir
