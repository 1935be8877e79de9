#pragma once

#include "psir/observation.hpp"
#include "psir/reflectance.hpp"
#include "psir/tensor.hpp"
#include "psir/vec3.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace psir {

// Ground-truth oracle: analytic height fields with closed-form normals, an
// exact (non-differentiable) forward renderer with ray-traced hard shadows,
// and the GBR transform. Deliberately independent of the differentiable
// shadow path.

enum class SceneShape { Plane, HemisphereOnPlane, SphereOnPlane, GaussianBump, DoubleBump };
enum class MaterialModel { Lambertian, IsotropicSg, AnisotropicAsg };

struct SceneMaterial {
    MaterialModel model = MaterialModel::Lambertian;
    double rho_d = 0.7;
    double c = 0.4;            // single specular lobe weight (SG / ASG)
    double rx = 40, ry = 40;   // lobe widths; rx == ry for the isotropic case
};

struct AnalyticScene {
    SceneShape shape = SceneShape::HemisphereOnPlane;
    int resolution = 64;
    double plane_depth = 24.0;
    double radius_frac = 0.35;   // dome/sphere radius as a fraction of the image size
    double bump_amp = 10.0;      // gaussian bump amplitude (depth units)
    double bump_sigma_frac = 0.14;
    SceneMaterial material;
    Tensor light_dirs;           // [F,3], l_z > 0
    Tensor light_intensities;    // [F]
    bool object_mask = false;    // true: mask only the object footprint; false: full frame
    std::uint64_t seed = 1;

    double height(double x, double y) const;             // depth w at (x, y) in pixels
    Vec3 normal(double x, double y) const;               // analytic unit normal
    bool on_object(double x, double y) const;            // inside the object footprint
};

struct GroundTruth {
    ObservationSet observations;
    Tensor normals;                    // [H,W,3]
    Tensor depth;                      // [H,W]
    std::vector<Tensor> hard_shadows;  // per light, [H,W], 1 = lit, 0 = occluded
};

/// Exact visibility: closed-form ray/sphere intersections for the sphere and
/// hemisphere scenes, a 0.1-pixel ray march on the analytic height otherwise.
bool hard_visibility(const AnalyticScene& scene, int x, int y, const Vec3& light);

GroundTruth render_ground_truth(const AnalyticScene& scene);

/// Ring of `ring_count` directions at the given elevation plus
/// `random_count` extra hemisphere samples; intensities uniform in
/// [0.8, 1.2].
void default_lights(AnalyticScene& scene, int ring_count, double elevation_deg, int random_count,
                    std::uint64_t seed);

/// The 64x64 hemisphere-on-plane desk scene: 16 ring lights at 40 degrees
/// elevation plus 4 random ones.
AnalyticScene default_desk_scene();

/// Scene description file (JSON): shape, material, lights, resolution, seed.
AnalyticScene scene_from_json(const std::string& path);
void scene_to_json(const AnalyticScene& scene, const std::string& path);

// ---- GBR ----------------------------------------------------------------------

struct GbrResult {
    Tensor normals;          // transformed unit normals, same shape as input
    Tensor albedo_scale;     // per entry: multiply rho_d by this
    Tensor lights;           // [F,3] transformed unit directions
    Tensor intensity_scale;  // [F]: multiply e by this
};

/// G = [[1,0,0],[0,1,0],[mu,nu,lambda]] acting on lights; normals transform
/// by the inverse transpose. Norms are absorbed into intensity / albedo so a
/// Lambertian rendering is bit-for-bit preserved. normals: [...,3] (last dim
/// 3), lights: [F,3]. lambda = 0 is rejected.
GbrResult gbr_transform(const Tensor& normals, const Tensor& lights, double mu, double nu,
                        double lambda);

} // namespace psir
