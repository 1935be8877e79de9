#include "psir/reflectance.hpp"

#include <cmath>
#include <stdexcept>

namespace psir {

namespace {
constexpr double kPoleEps = 1e-8;  // |V_d - (V_d.n)n| below this counts as the pole
}

TangentFrame tangent_frame(const Vec3& n) {
    TangentFrame f;
    f.n = n;
    const Vec3 proj = kViewDir - n * kViewDir.dot(n);
    if (proj.norm() < kPoleEps) {
        f.x = {1, 0, 0};  // n parallel to the view axis
    } else {
        f.x = proj.normalized();
    }
    f.y = n.cross(f.x);
    return f;
}

double asg_specular(const std::vector<double>& weights, const TangentFrame& frame, const Vec3& h,
                    const AsgBasisSet& bases) {
    if (static_cast<int>(weights.size()) < bases.active)
        throw std::invalid_argument("asg_specular: fewer weights than active bases");
    const double hx = h.dot(frame.x), hy = h.dot(frame.y);
    double rho = 0.0;
    for (int k = 0; k < bases.active; ++k)
        rho += weights[static_cast<std::size_t>(k)] *
               std::exp(-bases.rx[k] * hx * hx - bases.ry[k] * hy * hy);
    return rho;
}

double render_pixel(double rho_d, double rho_s, double s, double e, const Vec3& n, const Vec3& l) {
    const double shading = std::max(n.dot(l), 0.0);
    return e * s * (rho_s + rho_d) * shading;
}

// ---- graph builders -----------------------------------------------------------

FrameGraph tangent_frames_graph(const ad::Var& nx, const ad::Var& ny, const ad::Var& nz) {
    using namespace ad;
    const std::int64_t p = nx.value().size();

    // x ∝ V_d - (V_d.n) n = (-nz nx, -nz ny, 1 - nz^2); its norm equals
    // sqrt(nx^2 + ny^2) for unit n
    Var s2 = add(mul(nx, nx), mul(ny, ny));
    Tensor pole_t({p});
    for (std::int64_t i = 0; i < p; ++i)
        pole_t[i] = s2.value()[i] < kPoleEps * kPoleEps ? 1.0 : 0.0;
    Var pole = Var::constant(pole_t);
    Var slen = ad::sqrt(add(s2, pole));  // the +1 at the pole keeps sqrt off zero
    Var inv = div(sub(Var::constant(1.0), pole), slen);  // 0 at the pole, 1/slen elsewhere

    Var xx = add(mul(neg(mul(nz, nx)), inv), pole);  // pole: x = [1,0,0]
    Var xy = mul(neg(mul(nz, ny)), inv);
    Var xz = mul(s2, inv);

    Var yx = sub(mul(ny, xz), mul(nz, xy));
    Var yy = sub(mul(nz, xx), mul(nx, xz));
    Var yz = sub(mul(nx, xy), mul(ny, xx));

    FrameGraph out;
    out.x = stack_cols({xx, xy, xz});
    out.y = stack_cols({yx, yy, yz});
    return out;
}

ad::Var half_vectors_graph(const ad::Var& lights_unit) {
    using namespace ad;
    Var h = add(lights_unit, Var::constant(Tensor::from({0, 0, 1}, {3})));
    Var ones = Var::constant(Tensor::full({3, 1}, 1.0));
    Var len = ad::sqrt(matmul(mul(h, h), ones));
    return div(h, len);
}

std::vector<ad::Var> asg_lobes_graph(const FrameGraph& frame, const ad::Var& half_vectors,
                                     const ad::Var& rx, const ad::Var& ry, int active,
                                     bool isotropic_tie) {
    using namespace ad;
    Var ht = transpose(half_vectors);
    Var hx = matmul(frame.x, ht);  // [P,F]
    Var hy = matmul(frame.y, ht);
    Var hx2 = mul(hx, hx);
    Var hy2 = mul(hy, hy);

    std::vector<Var> lobes;
    lobes.reserve(static_cast<std::size_t>(active));
    for (int k = 0; k < active; ++k) {
        Var rxk = gather(rx, std::vector<std::int64_t>{k});
        Var ryk = isotropic_tie ? rxk : gather(ry, std::vector<std::int64_t>{k});
        lobes.push_back(ad::exp(neg(add(mul(rxk, hx2), mul(ryk, hy2)))));
    }
    return lobes;
}

ad::Var asg_weighted_sum(const std::vector<ad::Var>& lobes, const std::vector<ad::Var>& weights) {
    using namespace ad;
    if (weights.size() < lobes.size())
        throw std::invalid_argument("asg_weighted_sum: fewer weight maps than lobes");
    Var acc;
    for (std::size_t k = 0; k < lobes.size(); ++k) {
        const std::int64_t p = weights[k].value().size();
        Var w = reshape(weights[k], {p, 1});
        acc = k == 0 ? mul(w, lobes[k]) : add(acc, mul(w, lobes[k]));
    }
    return acc;
}

Tensor brdf_sphere_image(const std::vector<double>& rho_d,
                         const std::vector<std::vector<double>>& weights, const AsgBasisSet& bases,
                         int resolution) {
    const int channels = static_cast<int>(rho_d.size());
    Tensor img({resolution, resolution, channels});
    const TangentFrame frame = tangent_frame({0, 0, 1});
    const double c = (resolution - 1) / 2.0;
    for (int py = 0; py < resolution; ++py)
        for (int px = 0; px < resolution; ++px) {
            const double u = (px - c) / c, v = (py - c) / c;
            const double r2 = u * u + v * v;
            if (r2 > 1.0) continue;
            const Vec3 h{u, v, std::sqrt(1.0 - r2)};
            for (int ch = 0; ch < channels; ++ch) {
                const double rho =
                    rho_d[static_cast<std::size_t>(ch)] +
                    asg_specular(weights[static_cast<std::size_t>(ch)], frame, h, bases);
                img[(static_cast<std::int64_t>(py) * resolution + px) * channels + ch] = rho;
            }
        }
    return img;
}

} // namespace psir
