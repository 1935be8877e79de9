#pragma once

#include "psir/autodiff.hpp"
#include "psir/geometry.hpp"
#include "psir/vec3.hpp"

#include <vector>

namespace psir {

/// Ray segment from a surface point toward a light, cut where its xy
/// projection leaves the image rectangle. Samples are uniform on the
/// segment at fractions k/N_p, k = 1..N_p (the origin itself is excluded:
/// its depth difference is identically zero and would dominate the min).
struct LightSegment {
    Vec3 origin;          // surface point, (x*pitch, y*pitch, -w)
    Vec3 direction;       // unit light direction
    Vec3 endpoint;        // xy projection on the image boundary
    int sample_count = 0;

    std::vector<Vec3> samples() const;
};

LightSegment make_light_segment(const DepthField& field, int x, int y, const Vec3& light,
                                int sample_count);

/// Soft cast shadow at one pixel: s = sigmoid(alpha * min_k(w_k - w_hat_k) + beta)
/// where w_hat_k is the sample's depth coordinate and w_k the surface depth
/// bilinearly interpolated at the sample's xy. A zero-length segment (pixel
/// on the boundary toward the light) degenerates to sigmoid(beta).
/// Throws unless light.z > 0.
double soft_shadow(const DepthField& field, int x, int y, const Vec3& light, double alpha,
                   double beta, int sample_count = 64);

/// Vectorized differentiable route over a whole pixel set for one light.
/// Gradients flow to the touched grid depths, the pixel depths, alpha, beta,
/// and the light direction (through both the sample positions and the ray
/// depth slope).
ad::Var soft_shadow_graph(const ad::Var& grid, const ad::Var& depth_pixels,
                          const ad::Var& light_unit, const ad::Var& alpha, const ad::Var& beta,
                          const PixelSet& pixels, int sample_count, double pitch);

} // namespace psir
