#pragma once

#include "psir/autodiff.hpp"
#include "psir/tensor.hpp"
#include "psir/vec3.hpp"

#include <vector>

namespace psir {

/// View direction of the orthographic camera.
inline constexpr Vec3 kViewDir{0.0, 0.0, 1.0};

/// Anisotropic spherical Gaussian basis set. Widths are shared across color
/// channels; `active` implements the annealing schedule (bases beyond it
/// contribute exactly zero).
struct AsgBasisSet {
    Tensor rx, ry;   // [N_G] lobe widths along tangent / binormal
    int active = 0;  // number of activated bases, <= N_G

    int count() const { return static_cast<int>(rx.size()); }
};

struct TangentFrame {
    Vec3 x, y, n;  // y = n cross x exactly; x orthogonal to n
};

/// x = Nor(V_d - (V_d.n) n), y = n cross x. At the degenerate pole
/// n == V_d the formula leaves x undefined; falls back to x = [1,0,0].
TangentFrame tangent_frame(const Vec3& n);

/// rho_s = sum_k c_k exp(-rx_k (h.x)^2 - ry_k (h.y)^2) over the active bases.
double asg_specular(const std::vector<double>& weights, const TangentFrame& frame, const Vec3& h,
                    const AsgBasisSet& bases);

/// Rendered intensity of one pixel for one light (single channel):
/// m = e * s * (rho_s + rho_d) * max(n.l, 0).
double render_pixel(double rho_d, double rho_s, double s, double e, const Vec3& n, const Vec3& l);

inline Vec3 half_vector(const Vec3& l) { return (kViewDir + l).normalized(); }

// ---- vectorized graph builders ---------------------------------------------

struct FrameGraph {
    ad::Var x;  // [P,3]
    ad::Var y;  // [P,3]
};

/// Per-pixel tangent frames from unit normal components.
FrameGraph tangent_frames_graph(const ad::Var& nx, const ad::Var& ny, const ad::Var& nz);

/// Unit half vectors for every light: Nor(V_d + l_j). lights_unit: [F,3].
ad::Var half_vectors_graph(const ad::Var& lights_unit);

/// ASG lobe values t_k = exp(-rx_k (h.x)^2 - ry_k (h.y)^2), one [P,F] Var per
/// active basis. With `isotropic_tie` the ry leaf is ignored and rx serves
/// both directions.
std::vector<ad::Var> asg_lobes_graph(const FrameGraph& frame, const ad::Var& half_vectors,
                                     const ad::Var& rx, const ad::Var& ry, int active,
                                     bool isotropic_tie = false);

/// rho_s for one channel: sum_k c_k * t_k with per-pixel weights c_k [P].
ad::Var asg_weighted_sum(const std::vector<ad::Var>& lobes, const std::vector<ad::Var>& weights);

/// Disk visualization of rho over the hemisphere of half vectors for one
/// pixel's material; returns [res,res,channels] in linear intensity.
Tensor brdf_sphere_image(const std::vector<double>& rho_d,
                         const std::vector<std::vector<double>>& weights, const AsgBasisSet& bases,
                         int resolution);

} // namespace psir
