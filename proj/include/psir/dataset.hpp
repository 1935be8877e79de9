#pragma once

#include "psir/config.hpp"
#include "psir/observation.hpp"
#include "psir/synthetic.hpp"

#include <string>

namespace psir {

// Directory layout: filenames.txt (one image per line), mask.png, optional
// light_directions.txt / light_intensities.txt (3- and 1-or-3-column rows),
// optional normal_gt.pfm / depth_gt.pfm, optional shadow_gt_##.png.

/// Loads the stack, applies gamma decoding, resolution cap, and the
/// percentile filter as configured. Throws with a precise diagnostic on any
/// inconsistency (dimension mismatch, unreadable file, empty mask).
ObservationSet load_dataset(const std::string& dir, const RunConfig& config = {});

/// Writes oracle output in the same layout (images as PFM).
void save_dataset(const std::string& dir, const GroundTruth& gt);

/// Flags pixels below the p-th percentile of each image's masked intensity
/// out of the inverse-rendering loss for that image only (strict inequality;
/// p = 0 is a no-op).
void percentile_filter(ObservationSet& obs, double p);

/// Integer-factor box downsampling so max(W, H) <= cap. Ground-truth maps
/// are downsampled identically; normals renormalized; masks re-binarized.
void downsample_to_cap(ObservationSet& obs, int cap);

} // namespace psir
