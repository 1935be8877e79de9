#pragma once

#include "psir/autodiff.hpp"
#include "psir/tensor.hpp"
#include "psir/vec3.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

namespace psir {

/// Masked depth grid. Depth follows the camera-distance convention
/// (larger = farther); the surface point of pixel (x, y) is
/// (x*pitch, y*pitch, -depth) under an orthographic camera looking along
/// V_d = [0,0,1], image u right, v down.
struct DepthField {
    int width = 0, height = 0;
    Tensor depth;  // [H,W]
    Tensor mask;   // [H,W], nonzero = masked (valid)
    double pitch = 1.0;

    bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    bool masked(int x, int y) const { return inside(x, y) && mask.at(y, x) != 0.0; }
    double at(int x, int y) const { return depth.at(y, x); }
};

/// Masked pixels in row-major order plus their flat grid indices.
struct PixelSet {
    int width = 0, height = 0;
    std::vector<int> xs, ys;
    std::vector<std::int64_t> flat;  // y*width + x

    std::int64_t count() const { return static_cast<std::int64_t>(xs.size()); }
    std::int64_t index_of(int x, int y) const;  // -1 if not masked
};

PixelSet make_pixel_set(const Tensor& mask);

/// Bilinear blend of the four surrounding grid depths; queries outside the
/// grid clamp to the border.
double bilinear_depth(const DepthField& field, double x, double y);

/// Weighted-interpolation normal at a masked pixel: the four triangles
/// spanned by the cyclic neighbors (up, right, down, left) contribute unit
/// normals, blended with weights inversely proportional to
/// |w_k + w_{k+1} - 2 w_i| (eps-regularized) and renormalized. A missing or
/// unmasked neighbor is replaced by linear extrapolation through the pixel
/// from the opposite side (one-sided differencing), which keeps affine
/// fields exact up to the mask boundary.
Vec3 fit_normal(const DepthField& field, int x, int y);

/// Per-pixel gather plan for the vectorized normal fit:
/// D_k = a_k * (w[idx_k] - w_i) reproduces the neighbor depth difference
/// including the one-sided boundary rule above.
struct NeighborTable {
    // k: 0=up, 1=right, 2=down, 3=left
    std::array<std::shared_ptr<const std::vector<std::int64_t>>, 4> idx;
    std::array<Tensor, 4> coef;                  // each [P], values in {1,-1,0}
    std::vector<std::uint8_t> interior;          // 1 where all four neighbors are masked
};

NeighborTable make_neighbor_table(const Tensor& mask, const PixelSet& pixels);

struct NormalGraph {
    ad::Var nx, ny, nz;  // [P] unit components
    ad::Var matrix;      // [P,3]
};

/// Differentiable normal fit over the whole pixel set; mirrors fit_normal.
NormalGraph fit_normals_graph(const ad::Var& depth_pixels, const NeighborTable& table,
                              double pitch);

/// Maps every grid cell to the pixel-list index of its nearest masked pixel
/// (masked cells map to themselves; ties resolved by BFS order).
std::shared_ptr<const std::vector<std::int64_t>> nearest_masked_map(const Tensor& mask,
                                                                    const PixelSet& pixels);

/// Scatter masked depths into a full [H,W] grid, filling unmasked cells with
/// the nearest masked depth. One gather; fully differentiable.
ad::Var grid_fill_graph(const ad::Var& depth_pixels,
                        const std::shared_ptr<const std::vector<std::int64_t>>& cell_map,
                        int width, int height);

struct SilhouettePoint {
    int x = 0, y = 0;
    Vec3 normal;  // unit, z = 0, outward
};

/// Outward in-plane normals along the mask's outer boundary. The tangent at
/// each boundary pixel comes from a least-squares line through a 5-pixel
/// window of the traced boundary chain. Isolated single-pixel components are
/// skipped with a warning on stderr.
std::vector<SilhouettePoint> silhouette_normals(const Tensor& mask);

} // namespace psir
