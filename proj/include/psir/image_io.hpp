#pragma once

#include "psir/tensor.hpp"

#include <string>

namespace psir {

/// Decodes 8/16-bit gray or RGB PNG to [H,W,C] linear floats in [0,1]
/// (palette and alpha are expanded/stripped). C is 1 or 3.
Tensor read_png(const std::string& path);

/// img: [H,W] or [H,W,C] with C in {1,3}, values clamped to [0,1].
void write_png(const std::string& path, const Tensor& img, int bit_depth = 8);

/// PFM, little-endian float32, rows stored bottom-up. [H,W] ("Pf") or
/// [H,W,3] ("PF").
Tensor read_pfm(const std::string& path);
void write_pfm(const std::string& path, const Tensor& img);

/// n in [-1,1] per channel -> [0,1] for 16-bit PNG storage and back.
/// Decoding renormalizes rows; pixels outside the mask (if given) are zeroed.
Tensor encode_normal_map(const Tensor& normals);
Tensor decode_normal_map(const Tensor& packed, const Tensor* mask = nullptr);

/// Angular error in degrees -> RGB heatmap (dark blue 0 .. red >= max_deg);
/// unmasked pixels black.
Tensor error_heatmap(const Tensor& errors_deg, const Tensor& mask, double max_deg = 45.0);

/// Top-down plot of light directions on the unit disk: ground truth (when
/// given) in green, estimates in red.
Tensor light_sphere_plot(const Tensor& est_dirs, const Tensor* gt_dirs, int resolution = 256);

} // namespace psir
