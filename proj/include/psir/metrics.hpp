#pragma once

#include "psir/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace psir {

struct EvalReport {
    std::optional<double> normal_mae_deg;
    std::optional<double> light_dir_mae_deg;
    std::optional<double> e_int;
    std::vector<double> per_light_angle_deg;
    std::vector<double> shadow_iou_per_image;

    std::string to_text() const;           // "key: value" lines
    static std::string csv_header();
    std::string csv_row() const;           // one machine-readable table row
};

/// Mean angle in degrees between corresponding rows of two [...,3] tensors.
/// Non-unit rows are normalized with a warning (tolerance 1e-9).
double mae_degrees(const Tensor& est, const Tensor& gt);

/// Per-row angular errors in degrees.
std::vector<double> angle_errors_deg(const Tensor& est, const Tensor& gt);

/// Scale-invariant intensity error: eta = sum(e*gt)/sum(e^2) by least
/// squares, then mean over entries of |eta e - gt| / gt. gt must be positive;
/// all-zero estimates are rejected.
double e_int(const Tensor& e, const Tensor& gt);

/// IoU of the thresholded soft shadow region {s < threshold} against the
/// ground-truth occluded region {gt < 0.5}, over the mask. Both regions
/// empty counts as 1.
double shadow_iou(const Tensor& soft, const Tensor& hard_gt, const Tensor& mask,
                  double threshold = 0.5);

/// Rows of a [H,W,k] map at the mask's nonzero pixels -> [P,k].
Tensor masked_rows(const Tensor& map, const Tensor& mask);

} // namespace psir
