#include "psir/synthetic.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace psir {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMarchStep = 0.1;  // pixels, oracle visibility march

double center_of(const AnalyticScene& s) { return (s.resolution - 1) / 2.0; }
double dome_radius(const AnalyticScene& s) { return s.radius_frac * s.resolution; }
double bump_sigma(const AnalyticScene& s) { return s.bump_sigma_frac * s.resolution; }

struct Bump {
    double cx, cy, amp, sigma;
    double eval(double x, double y) const {
        const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        return amp * std::exp(-r2 / (2 * sigma * sigma));
    }
    // gradient of the height contribution w = -eval
    void grad(double x, double y, double& gx, double& gy) const {
        const double g = eval(x, y) / (sigma * sigma);
        gx += (x - cx) * g;
        gy += (y - cy) * g;
    }
};

std::vector<Bump> bumps_of(const AnalyticScene& s) {
    const double c = center_of(s), off = 0.22 * s.resolution, sg = bump_sigma(s);
    switch (s.shape) {
    case SceneShape::GaussianBump:
        return {{c, c, s.bump_amp, sg}};
    case SceneShape::DoubleBump:
        return {{c - off, c, s.bump_amp, sg}, {c + off, c, 0.65 * s.bump_amp, sg}};
    default:
        return {};
    }
}

} // namespace

double AnalyticScene::height(double x, double y) const {
    const double c = center_of(*this);
    switch (shape) {
    case SceneShape::Plane:
        return plane_depth;
    case SceneShape::HemisphereOnPlane: {
        const double R = dome_radius(*this);
        const double r2 = (x - c) * (x - c) + (y - c) * (y - c);
        return r2 < R * R ? plane_depth - std::sqrt(R * R - r2) : plane_depth;
    }
    case SceneShape::SphereOnPlane: {
        const double R = dome_radius(*this);
        const double r2 = (x - c) * (x - c) + (y - c) * (y - c);
        return r2 < R * R ? plane_depth - R - std::sqrt(R * R - r2) : plane_depth;
    }
    case SceneShape::GaussianBump:
    case SceneShape::DoubleBump: {
        double w = plane_depth;
        for (const Bump& b : bumps_of(*this)) w -= b.eval(x, y);
        return w;
    }
    }
    return plane_depth;
}

Vec3 AnalyticScene::normal(double x, double y) const {
    const double c = center_of(*this);
    switch (shape) {
    case SceneShape::Plane:
        return {0, 0, 1};
    case SceneShape::HemisphereOnPlane:
    case SceneShape::SphereOnPlane: {
        const double R = dome_radius(*this);
        const double dx = x - c, dy = y - c;
        const double r2 = dx * dx + dy * dy;
        if (r2 >= R * R) return {0, 0, 1};
        return Vec3{dx / R, dy / R, std::sqrt(R * R - r2) / R};
    }
    case SceneShape::GaussianBump:
    case SceneShape::DoubleBump: {
        // n ∝ (dw/du, dw/dv, 1) under the camera-distance sign convention
        double gx = 0, gy = 0;
        for (const Bump& b : bumps_of(*this)) b.grad(x, y, gx, gy);
        return Vec3{gx, gy, 1.0}.normalized();
    }
    }
    return {0, 0, 1};
}

bool AnalyticScene::on_object(double x, double y) const {
    switch (shape) {
    case SceneShape::HemisphereOnPlane:
    case SceneShape::SphereOnPlane: {
        const double c = center_of(*this), R = dome_radius(*this) - 0.5;
        return (x - c) * (x - c) + (y - c) * (y - c) <= R * R;
    }
    default:
        return true;
    }
}

bool hard_visibility(const AnalyticScene& scene, int x, int y, const Vec3& light) {
    if (light.z <= 0) throw std::invalid_argument("hard_visibility: light z must be positive");
    const Vec3 l = light.normalized();
    const double w = scene.height(x, y);
    const Vec3 p{static_cast<double>(x), static_cast<double>(y), -w};

    if (scene.shape == SceneShape::Plane) return true;

    if (scene.shape == SceneShape::HemisphereOnPlane || scene.shape == SceneShape::SphereOnPlane) {
        const double c = center_of(scene), R = dome_radius(scene);
        const double cz = scene.shape == SceneShape::HemisphereOnPlane
                              ? -scene.plane_depth
                              : -(scene.plane_depth - R);
        const Vec3 center{c, c, cz};
        const Vec3 oc = p - center;
        const double b = 2.0 * l.dot(oc);
        const double q = oc.dot(oc) - R * R;
        const double disc = b * b - 4 * q;
        if (disc <= 0) return true;
        const double sq = std::sqrt(disc);
        const double eps = 1e-6 * (R + 1.0);
        for (double t : {(-b - sq) / 2.0, (-b + sq) / 2.0}) {
            if (t <= eps) continue;
            const double hz = p.z + t * l.z;
            // the hemisphere only exists on the camera side of its base plane
            if (scene.shape == SceneShape::HemisphereOnPlane && hz < -scene.plane_depth - 1e-9)
                continue;
            return false;
        }
        return true;
    }

    // fine march on the analytic height field
    const double sxy = std::hypot(l.x, l.y);
    if (sxy < 1e-12) return true;
    const double dirx = l.x / sxy, diry = l.y / sxy, slope = l.z / sxy;
    const int n = scene.resolution;
    double d = 3 * kMarchStep;  // skip the immediate neighborhood of the origin
    while (true) {
        const double px = x + d * dirx, py = y + d * diry;
        if (px < 0 || px > n - 1 || py < 0 || py > n - 1) return true;
        const double ray_w = w - d * slope;
        if (scene.height(px, py) < ray_w - 1e-6) return false;
        d += kMarchStep;
    }
}

GroundTruth render_ground_truth(const AnalyticScene& scene) {
    const int n = scene.resolution;
    const int f = static_cast<int>(scene.light_dirs.dim(0));
    if (f == 0) throw std::invalid_argument("render_ground_truth: scene has no lights");
    for (std::int64_t j = 0; j < f; ++j)
        if (scene.light_dirs.at(j, 2) <= 0)
            throw std::invalid_argument("render_ground_truth: light z must be positive");

    GroundTruth gt;
    gt.normals = Tensor({n, n, 3});
    gt.depth = Tensor({n, n});
    gt.observations.width = n;
    gt.observations.height = n;
    gt.observations.channels = 1;
    gt.observations.mask = Tensor({n, n});

    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const Vec3 nm = scene.normal(x, y);
            gt.normals[(static_cast<std::int64_t>(y) * n + x) * 3 + 0] = nm.x;
            gt.normals[(static_cast<std::int64_t>(y) * n + x) * 3 + 1] = nm.y;
            gt.normals[(static_cast<std::int64_t>(y) * n + x) * 3 + 2] = nm.z;
            gt.depth.at(y, x) = scene.height(x, y);
            gt.observations.mask.at(y, x) =
                scene.object_mask ? (scene.on_object(x, y) ? 1.0 : 0.0) : 1.0;
        }

    AsgBasisSet bases;
    bases.rx = Tensor::from({scene.material.rx}, {1});
    bases.ry = Tensor::from(
        {scene.material.model == MaterialModel::IsotropicSg ? scene.material.rx
                                                            : scene.material.ry},
        {1});
    bases.active = scene.material.model == MaterialModel::Lambertian ? 0 : 1;
    const std::vector<double> cw{scene.material.c};

    for (std::int64_t j = 0; j < f; ++j) {
        const Vec3 l{scene.light_dirs.at(j, 0), scene.light_dirs.at(j, 1),
                     scene.light_dirs.at(j, 2)};
        const double e = scene.light_intensities[j];
        const Vec3 h = half_vector(l);
        Tensor img({n, n, 1});
        Tensor shadow({n, n});
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const bool lit = hard_visibility(scene, x, y, l);
                shadow.at(y, x) = lit ? 1.0 : 0.0;
                const Vec3 nm = scene.normal(x, y);
                double rho_s = 0.0;
                if (bases.active > 0) rho_s = asg_specular(cw, tangent_frame(nm), h, bases);
                img[static_cast<std::int64_t>(y) * n + x] =
                    render_pixel(scene.material.rho_d, rho_s, lit ? 1.0 : 0.0, e, nm, l);
            }
        gt.observations.images.push_back(std::move(img));
        gt.hard_shadows.push_back(std::move(shadow));
    }

    gt.observations.gt_normals = gt.normals;
    gt.observations.gt_depth = gt.depth;
    gt.observations.gt_lights = scene.light_dirs;
    Tensor ints({f, 1});
    for (std::int64_t j = 0; j < f; ++j) ints[j] = scene.light_intensities[j];
    gt.observations.gt_intensities = ints;
    gt.observations.gt_shadows = gt.hard_shadows;
    return gt;
}

void default_lights(AnalyticScene& scene, int ring_count, double elevation_deg, int random_count,
                    std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ue(0.8, 1.2), uz(0.5, 0.9), uphi(0, 2 * kPi);
    const int f = ring_count + random_count;
    scene.light_dirs = Tensor({f, 3});
    scene.light_intensities = Tensor({f});
    const double el = elevation_deg * kPi / 180.0;
    for (int j = 0; j < ring_count; ++j) {
        const double a = 2 * kPi * j / ring_count + 0.3;
        scene.light_dirs.at(j, 0) = std::cos(el) * std::cos(a);
        scene.light_dirs.at(j, 1) = std::cos(el) * std::sin(a);
        scene.light_dirs.at(j, 2) = std::sin(el);
    }
    for (int j = ring_count; j < f; ++j) {
        const double z = uz(rng), phi = uphi(rng), r = std::sqrt(1 - z * z);
        scene.light_dirs.at(j, 0) = r * std::cos(phi);
        scene.light_dirs.at(j, 1) = r * std::sin(phi);
        scene.light_dirs.at(j, 2) = z;
    }
    for (int j = 0; j < f; ++j) scene.light_intensities[j] = ue(rng);
}

AnalyticScene default_desk_scene() {
    AnalyticScene scene;
    scene.shape = SceneShape::HemisphereOnPlane;
    scene.resolution = 64;
    scene.radius_frac = 0.35;
    scene.plane_depth = 24.0;
    scene.object_mask = true;
    scene.material.model = MaterialModel::IsotropicSg;
    scene.material.rho_d = 0.7;
    scene.material.c = 0.4;
    scene.material.rx = scene.material.ry = 40.0;
    default_lights(scene, 16, 40.0, 4, scene.seed);
    return scene;
}

// ---- scene files ------------------------------------------------------------------

namespace {

const char* shape_name(SceneShape s) {
    switch (s) {
    case SceneShape::Plane: return "plane";
    case SceneShape::HemisphereOnPlane: return "hemisphere_on_plane";
    case SceneShape::SphereOnPlane: return "sphere_on_plane";
    case SceneShape::GaussianBump: return "gaussian_bump";
    case SceneShape::DoubleBump: return "double_bump";
    }
    return "plane";
}

SceneShape shape_from(const std::string& s) {
    if (s == "plane") return SceneShape::Plane;
    if (s == "hemisphere_on_plane") return SceneShape::HemisphereOnPlane;
    if (s == "sphere_on_plane") return SceneShape::SphereOnPlane;
    if (s == "gaussian_bump") return SceneShape::GaussianBump;
    if (s == "double_bump") return SceneShape::DoubleBump;
    throw std::invalid_argument("scene file: unknown shape '" + s + "'");
}

const char* material_name(MaterialModel m) {
    switch (m) {
    case MaterialModel::Lambertian: return "lambertian";
    case MaterialModel::IsotropicSg: return "isotropic_sg";
    case MaterialModel::AnisotropicAsg: return "anisotropic_asg";
    }
    return "lambertian";
}

MaterialModel material_from(const std::string& s) {
    if (s == "lambertian") return MaterialModel::Lambertian;
    if (s == "isotropic_sg") return MaterialModel::IsotropicSg;
    if (s == "anisotropic_asg") return MaterialModel::AnisotropicAsg;
    throw std::invalid_argument("scene file: unknown material '" + s + "'");
}

} // namespace

AnalyticScene scene_from_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scene file '" + path + "'");
    nlohmann::json j;
    in >> j;

    AnalyticScene scene;
    for (auto& [key, value] : j.items()) {
        if (key == "shape") scene.shape = shape_from(value.get<std::string>());
        else if (key == "resolution") scene.resolution = value.get<int>();
        else if (key == "plane_depth") scene.plane_depth = value.get<double>();
        else if (key == "radius_frac") scene.radius_frac = value.get<double>();
        else if (key == "bump_amp") scene.bump_amp = value.get<double>();
        else if (key == "bump_sigma_frac") scene.bump_sigma_frac = value.get<double>();
        else if (key == "object_mask") scene.object_mask = value.get<bool>();
        else if (key == "seed") scene.seed = value.get<std::uint64_t>();
        else if (key == "material") {
            for (auto& [mk, mv] : value.items()) {
                if (mk == "model") scene.material.model = material_from(mv.get<std::string>());
                else if (mk == "rho_d") scene.material.rho_d = mv.get<double>();
                else if (mk == "c") scene.material.c = mv.get<double>();
                else if (mk == "rx") scene.material.rx = mv.get<double>();
                else if (mk == "ry") scene.material.ry = mv.get<double>();
                else throw std::invalid_argument("scene file: unknown material key '" + mk + "'");
            }
        } else if (key == "lights") {
            if (value.contains("list")) {
                const auto& list = value.at("list");
                const int f = static_cast<int>(list.size());
                scene.light_dirs = Tensor({f, 3});
                scene.light_intensities = Tensor({f});
                for (int idx = 0; idx < f; ++idx) {
                    const auto& row = list.at(static_cast<std::size_t>(idx));
                    Vec3 l = Vec3{row.at(0).get<double>(), row.at(1).get<double>(),
                                  row.at(2).get<double>()}
                                 .normalized();
                    scene.light_dirs.at(idx, 0) = l.x;
                    scene.light_dirs.at(idx, 1) = l.y;
                    scene.light_dirs.at(idx, 2) = l.z;
                    scene.light_intensities[idx] =
                        row.size() > 3 ? row.at(3).get<double>() : 1.0;
                }
            } else {
                default_lights(scene, value.value("ring", 16), value.value("elevation_deg", 40.0),
                               value.value("random", 4), value.value("seed", scene.seed));
            }
        } else {
            throw std::invalid_argument("scene file: unknown key '" + key + "'");
        }
    }
    if (scene.light_dirs.size() == 0) default_lights(scene, 16, 40.0, 4, scene.seed);
    return scene;
}

void scene_to_json(const AnalyticScene& scene, const std::string& path) {
    nlohmann::json j;
    j["shape"] = shape_name(scene.shape);
    j["resolution"] = scene.resolution;
    j["plane_depth"] = scene.plane_depth;
    j["radius_frac"] = scene.radius_frac;
    j["bump_amp"] = scene.bump_amp;
    j["bump_sigma_frac"] = scene.bump_sigma_frac;
    j["object_mask"] = scene.object_mask;
    j["seed"] = scene.seed;
    j["material"] = {{"model", material_name(scene.material.model)},
                     {"rho_d", scene.material.rho_d},
                     {"c", scene.material.c},
                     {"rx", scene.material.rx},
                     {"ry", scene.material.ry}};
    nlohmann::json list = nlohmann::json::array();
    for (std::int64_t k = 0; k < scene.light_dirs.dim(0); ++k)
        list.push_back({scene.light_dirs.at(k, 0), scene.light_dirs.at(k, 1),
                        scene.light_dirs.at(k, 2), scene.light_intensities[k]});
    j["lights"] = {{"list", list}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write scene file '" + path + "'");
    out << j.dump(2) << '\n';
}

// ---- GBR -------------------------------------------------------------------------

GbrResult gbr_transform(const Tensor& normals, const Tensor& lights, double mu, double nu,
                        double lambda) {
    if (lambda == 0.0) throw std::invalid_argument("gbr_transform: lambda must be nonzero");
    if (normals.size() % 3 != 0 || lights.rank() != 2 || lights.dim(1) != 3)
        throw std::invalid_argument("gbr_transform: normals [...,3] and lights [F,3] expected");

    GbrResult out;
    out.normals = Tensor(normals.shape());
    out.albedo_scale = Tensor({normals.size() / 3});
    out.lights = Tensor(lights.shape());
    out.intensity_scale = Tensor({lights.dim(0)});

    for (std::int64_t i = 0; i < normals.size() / 3; ++i) {
        const double nx = normals[3 * i], ny = normals[3 * i + 1], nz = normals[3 * i + 2];
        // inverse transpose of G: [[1,0,-mu/l],[0,1,-nu/l],[0,0,1/l]]
        const Vec3 b{nx - mu / lambda * nz, ny - nu / lambda * nz, nz / lambda};
        const double a = b.norm();
        out.albedo_scale[i] = a;
        out.normals[3 * i] = b.x / a;
        out.normals[3 * i + 1] = b.y / a;
        out.normals[3 * i + 2] = b.z / a;
    }
    for (std::int64_t j = 0; j < lights.dim(0); ++j) {
        const double lx = lights.at(j, 0), ly = lights.at(j, 1), lz = lights.at(j, 2);
        const Vec3 gl{lx, ly, mu * lx + nu * ly + lambda * lz};
        const double s = gl.norm();
        out.intensity_scale[j] = s;
        out.lights.at(j, 0) = gl.x / s;
        out.lights.at(j, 1) = gl.y / s;
        out.lights.at(j, 2) = gl.z / s;
    }
    return out;
}

} // namespace psir
