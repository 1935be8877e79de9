#include "psir/shadow.hpp"

#include <cmath>
#include <stdexcept>

namespace psir {

namespace {

constexpr double kDirTiny = 1e-9;   // below this the ray is axis-aligned in xy
constexpr double kBigDistance = 1e18;

// s must stay inside the open interval even where the sigmoid saturates in
// double arithmetic
constexpr double kShadowFloor = 1e-300;
constexpr double kShadowCeil = 1.0 - 1e-15;

double sigmoid(double x) {
    double s;
    if (x >= 0) {
        s = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        s = e / (1.0 + e);
    }
    return std::min(std::max(s, kShadowFloor), kShadowCeil);
}

// exit distance (in pixels) from (x, y) along (dirx, diry) to the image rectangle
double exit_distance(double x, double y, double dirx, double diry, int width, int height) {
    double tx = kBigDistance, ty = kBigDistance;
    if (dirx > kDirTiny) tx = (width - 1 - x) / dirx;
    else if (dirx < -kDirTiny) tx = -x / dirx;
    if (diry > kDirTiny) ty = (height - 1 - y) / diry;
    else if (diry < -kDirTiny) ty = -y / diry;
    return std::min(tx, ty);
}

// min(max(s, floor), ceil) composed from max_const; gradient is zero on
// the clamped tails, where the true sigmoid slope is below double precision
ad::Var clamp_open_unit(const ad::Var& s) {
    using namespace ad;
    return neg(max_const(neg(max_const(s, kShadowFloor)), -kShadowCeil));
}

} // namespace

std::vector<Vec3> LightSegment::samples() const {
    std::vector<Vec3> pts;
    pts.reserve(static_cast<std::size_t>(sample_count));
    for (int k = 1; k <= sample_count; ++k) {
        const double f = static_cast<double>(k) / sample_count;
        pts.push_back(origin + (endpoint - origin) * f);
    }
    return pts;
}

LightSegment make_light_segment(const DepthField& field, int x, int y, const Vec3& light,
                                int sample_count) {
    if (light.z <= 0) throw std::invalid_argument("make_light_segment: light z must be positive");
    const Vec3 l = light.normalized();
    LightSegment seg;
    seg.sample_count = sample_count;
    seg.direction = l;
    const double w = field.at(x, y);
    seg.origin = {x * field.pitch, y * field.pitch, -w};
    const double sxy = std::hypot(l.x, l.y);
    if (sxy < kDirTiny) {
        seg.endpoint = seg.origin;  // frontal light: zero-length segment
        return seg;
    }
    const double d = exit_distance(x, y, l.x / sxy, l.y / sxy, field.width, field.height);
    const double t = d * field.pitch / sxy;  // 3D parameter reaching the boundary in xy
    seg.endpoint = seg.origin + l * t;
    return seg;
}

double soft_shadow(const DepthField& field, int x, int y, const Vec3& light, double alpha,
                   double beta, int sample_count) {
    if (light.z <= 0) throw std::invalid_argument("soft_shadow: light z must be positive");
    const Vec3 l = light.normalized();
    const double sxy = std::hypot(l.x, l.y);
    if (sxy < kDirTiny) return sigmoid(beta);  // zero-length segment: unoccluded

    const double dirx = l.x / sxy, diry = l.y / sxy;
    const double slope = field.pitch * l.z / sxy;  // depth drop per pixel of xy travel
    const double d = exit_distance(x, y, dirx, diry, field.width, field.height);
    const double wi = field.at(x, y);
    double min_diff = kBigDistance;
    for (int k = 1; k <= sample_count; ++k) {
        const double f = static_cast<double>(k) / sample_count * d;
        const double surf = bilinear_depth(field, x + f * dirx, y + f * diry);
        const double ray = wi - f * slope;
        min_diff = std::min(min_diff, surf - ray);
    }
    return sigmoid(alpha * min_diff + beta);
}

ad::Var soft_shadow_graph(const ad::Var& grid, const ad::Var& depth_pixels,
                          const ad::Var& light_unit, const ad::Var& alpha, const ad::Var& beta,
                          const PixelSet& pixels, int sample_count, double pitch) {
    using namespace ad;
    if (light_unit.value().size() != 3)
        throw std::invalid_argument("soft_shadow_graph: light must have 3 components");
    const double lxv = light_unit.value()[0];
    const double lyv = light_unit.value()[1];
    const double lzv = light_unit.value()[2];
    if (lzv <= 0) throw std::invalid_argument("soft_shadow_graph: light z must be positive");

    const std::int64_t p = pixels.count();
    const double sxyv = std::hypot(lxv, lyv);
    if (sxyv < kDirTiny) {
        // frontal light: every segment degenerates, s = sigmoid(beta)
        return clamp_open_unit(ad::sigmoid(broadcast_to(beta, {p})));
    }

    Var lx = gather(light_unit, std::vector<std::int64_t>{0});
    Var ly = gather(light_unit, std::vector<std::int64_t>{1});
    Var lz = gather(light_unit, std::vector<std::int64_t>{2});
    Var sxy = ad::sqrt(add(mul(lx, lx), mul(ly, ly)));
    Var dirx = div(lx, sxy);
    Var diry = div(ly, sxy);
    Var slope = div(mul(lz, Var::constant(pitch)), sxy);

    const double dirxv = lxv / sxyv, diryv = lyv / sxyv;
    Tensor numx({p}), numy({p});
    Tensor x0({p, 1}), y0({p, 1});
    for (std::int64_t i = 0; i < p; ++i) {
        const double xi = pixels.xs[static_cast<std::size_t>(i)];
        const double yi = pixels.ys[static_cast<std::size_t>(i)];
        x0[i] = xi;
        y0[i] = yi;
        numx[i] = dirxv > kDirTiny ? (pixels.width - 1 - xi) : (dirxv < -kDirTiny ? -xi : 0.0);
        numy[i] = diryv > kDirTiny ? (pixels.height - 1 - yi) : (diryv < -kDirTiny ? -yi : 0.0);
    }
    // exit distances along each axis; the sign branch is frozen at the
    // forward value, which is the subgradient choice at the axis kink
    Var tx = std::fabs(dirxv) > kDirTiny ? div(Var::constant(numx), dirx)
                                         : Var::constant(Tensor::full({p}, kBigDistance));
    Var ty = std::fabs(diryv) > kDirTiny ? div(Var::constant(numy), diry)
                                         : Var::constant(Tensor::full({p}, kBigDistance));
    Var dist = minimum(tx, ty);  // [P]

    auto fracs = std::make_shared<const std::vector<double>>([sample_count] {
        std::vector<double> f(static_cast<std::size_t>(sample_count));
        for (int k = 1; k <= sample_count; ++k)
            f[static_cast<std::size_t>(k - 1)] = static_cast<double>(k) / sample_count;
        return f;
    }());

    Var u_all = outer_affine(Var::constant(x0.reshaped({p})), mul(dist, dirx), fracs);  // [P,K]
    Var v_all = outer_affine(Var::constant(y0.reshaped({p})), mul(dist, diry), fracs);  // [P,K]
    Var ray_w = outer_affine(depth_pixels, neg(mul(dist, slope)), fracs);               // [P,K]
    Var surf_w = bilinear_gather(grid, u_all, v_all);
    Var min_diff = min_last(sub(surf_w, ray_w));  // [P]
    return clamp_open_unit(ad::sigmoid(add(mul(alpha, min_diff), beta)));
}

} // namespace psir
