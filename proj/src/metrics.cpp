#include "psir/metrics.hpp"

#include "psir/vec3.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace psir {

namespace {
constexpr double kUnitTol = 1e-9;
}

std::vector<double> angle_errors_deg(const Tensor& est, const Tensor& gt) {
    if (!est.same_shape(gt) || est.size() % 3 != 0)
        throw std::invalid_argument("angle_errors: shapes " + est.shape_str() + " vs " +
                                    gt.shape_str());
    const std::int64_t n = est.size() / 3;
    std::vector<double> out(static_cast<std::size_t>(n));
    bool warned = false;
    for (std::int64_t i = 0; i < n; ++i) {
        Vec3 a{est[3 * i], est[3 * i + 1], est[3 * i + 2]};
        Vec3 b{gt[3 * i], gt[3 * i + 1], gt[3 * i + 2]};
        if (!warned && (std::fabs(a.norm() - 1.0) > kUnitTol || std::fabs(b.norm() - 1.0) > kUnitTol)) {
            std::fprintf(stderr, "mae_degrees: non-unit input normalized\n");
            warned = true;
        }
        double c = a.normalized().dot(b.normalized());
        c = std::min(1.0, std::max(-1.0, c));  // absorb rounding
        out[static_cast<std::size_t>(i)] = std::acos(c) * 180.0 / 3.14159265358979323846;
    }
    return out;
}

double mae_degrees(const Tensor& est, const Tensor& gt) {
    const auto errs = angle_errors_deg(est, gt);
    if (errs.empty()) throw std::invalid_argument("mae_degrees: empty input");
    double acc = 0;
    for (double e : errs) acc += e;
    return acc / static_cast<double>(errs.size());
}

double e_int(const Tensor& e, const Tensor& gt) {
    if (e.size() != gt.size() || e.size() == 0)
        throw std::invalid_argument("e_int: size mismatch " + e.shape_str() + " vs " +
                                    gt.shape_str());
    double num = 0, den = 0;
    for (std::int64_t j = 0; j < e.size(); ++j) {
        if (gt[j] <= 0) throw std::invalid_argument("e_int: ground-truth intensities must be positive");
        num += e[j] * gt[j];
        den += e[j] * e[j];
    }
    if (den == 0) throw std::invalid_argument("e_int: all estimated intensities are zero");
    const double eta = num / den;
    double acc = 0;
    for (std::int64_t j = 0; j < e.size(); ++j) acc += std::fabs(eta * e[j] - gt[j]) / gt[j];
    return acc / static_cast<double>(e.size());
}

double shadow_iou(const Tensor& soft, const Tensor& hard_gt, const Tensor& mask,
                  double threshold) {
    if (!soft.same_shape(hard_gt) || !soft.same_shape(mask))
        throw std::invalid_argument("shadow_iou: shape mismatch");
    std::int64_t inter = 0, uni = 0;
    for (std::int64_t i = 0; i < soft.size(); ++i) {
        if (mask[i] == 0.0) continue;
        const bool a = soft[i] < threshold;
        const bool b = hard_gt[i] < 0.5;
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Tensor masked_rows(const Tensor& map, const Tensor& mask) {
    if (map.rank() != 3 || mask.rank() != 2 || map.dim(0) != mask.dim(0) ||
        map.dim(1) != mask.dim(1))
        throw std::invalid_argument("masked_rows: map " + map.shape_str() + " vs mask " +
                                    mask.shape_str());
    const std::int64_t k = map.dim(2);
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < mask.size(); ++i) count += mask[i] != 0.0 ? 1 : 0;
    Tensor out({count, k});
    std::int64_t r = 0;
    for (std::int64_t i = 0; i < mask.size(); ++i) {
        if (mask[i] == 0.0) continue;
        for (std::int64_t j = 0; j < k; ++j) out.at(r, j) = map[i * k + j];
        ++r;
    }
    return out;
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os.precision(6);
    if (normal_mae_deg) os << "normal_mae_deg: " << *normal_mae_deg << '\n';
    if (light_dir_mae_deg) os << "light_dir_mae_deg: " << *light_dir_mae_deg << '\n';
    if (e_int) os << "e_int: " << *e_int << '\n';
    for (std::size_t j = 0; j < per_light_angle_deg.size(); ++j)
        os << "light_" << j << "_angle_deg: " << per_light_angle_deg[j] << '\n';
    for (std::size_t j = 0; j < shadow_iou_per_image.size(); ++j)
        os << "shadow_iou_" << j << ": " << shadow_iou_per_image[j] << '\n';
    return os.str();
}

std::string EvalReport::csv_header() { return "normal_mae_deg,light_dir_mae_deg,e_int,mean_shadow_iou"; }

std::string EvalReport::csv_row() const {
    std::ostringstream os;
    os.precision(6);
    auto field = [&os](const std::optional<double>& v) {
        if (v) os << *v;
        os << ',';
    };
    field(normal_mae_deg);
    field(light_dir_mae_deg);
    field(e_int);
    if (!shadow_iou_per_image.empty()) {
        double acc = 0;
        for (double v : shadow_iou_per_image) acc += v;
        os << acc / static_cast<double>(shadow_iou_per_image.size());
    }
    return os.str();
}

} // namespace psir
