// Python bindings over the core operations: positional encoding, normal
// fitting, soft shadows, the oracle renderer, the solver, and the metrics.

#include "psir/dataset.hpp"
#include "psir/fields.hpp"
#include "psir/geometry.hpp"
#include "psir/metrics.hpp"
#include "psir/shadow.hpp"
#include "psir/synthetic.hpp"
#include "psir/training.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace psir;

namespace {

Tensor tensor_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    std::vector<std::int64_t> shape(arr.ndim());
    for (py::ssize_t d = 0; d < arr.ndim(); ++d) shape[static_cast<std::size_t>(d)] = arr.shape(d);
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return Tensor::from(std::move(data), std::move(shape));
}

py::array_t<double> array_from(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> arr(shape);
    std::copy(t.data(), t.data() + t.size(), arr.mutable_data());
    return arr;
}

DepthField field_from(const py::array_t<double>& depth, const py::array_t<double>& mask,
                      double pitch) {
    Tensor d = tensor_from(depth);
    Tensor m = tensor_from(mask);
    if (d.rank() != 2 || !d.same_shape(m))
        throw std::invalid_argument("depth and mask must be matching 2-d arrays");
    DepthField f;
    f.height = static_cast<int>(d.dim(0));
    f.width = static_cast<int>(d.dim(1));
    f.depth = std::move(d);
    f.mask = std::move(m);
    f.pitch = pitch;
    return f;
}

} // namespace

PYBIND11_MODULE(_psir, m) {
    m.doc() = "uncalibrated photometric stereo engine";

    m.def(
        "encode",
        [](double u, double v, int octaves) {
            PositionalEncoder enc{octaves};
            return enc.encode(u, v);
        },
        py::arg("u"), py::arg("v"), py::arg("octaves") = 10,
        "sinusoidal positional code of an image-plane point in [-1,1]^2");

    m.def(
        "fit_normals",
        [](py::array_t<double> depth, py::array_t<double> mask, double pitch) {
            DepthField f = field_from(depth, mask, pitch);
            Tensor out({f.height, f.width, 3});
            for (int y = 0; y < f.height; ++y)
                for (int x = 0; x < f.width; ++x) {
                    if (!f.masked(x, y)) continue;
                    Vec3 n = fit_normal(f, x, y);
                    const std::int64_t i = (static_cast<std::int64_t>(y) * f.width + x) * 3;
                    out[i] = n.x;
                    out[i + 1] = n.y;
                    out[i + 2] = n.z;
                }
            return array_from(out);
        },
        py::arg("depth"), py::arg("mask"), py::arg("pitch") = 1.0,
        "weighted-interpolation surface normals of a masked depth grid");

    m.def(
        "soft_shadow_map",
        [](py::array_t<double> depth, py::array_t<double> mask, std::vector<double> light,
           double alpha, double beta, int samples, double pitch) {
            if (light.size() != 3) throw std::invalid_argument("light must have 3 components");
            DepthField f = field_from(depth, mask, pitch);
            const Vec3 l{light[0], light[1], light[2]};
            Tensor out({f.height, f.width});
            for (int y = 0; y < f.height; ++y)
                for (int x = 0; x < f.width; ++x)
                    out.at(y, x) = soft_shadow(f, x, y, l, alpha, beta, samples);
            return array_from(out);
        },
        py::arg("depth"), py::arg("mask"), py::arg("light"), py::arg("alpha") = 400.0,
        py::arg("beta") = 3.0, py::arg("samples") = 64, py::arg("pitch") = 1.0,
        "differentiable-path soft cast shadow map for one light");

    m.def(
        "render_scene",
        [](const std::string& scene_json) {
            AnalyticScene scene = scene_from_json(scene_json);
            GroundTruth gt = render_ground_truth(scene);
            py::dict out;
            py::list images, shadows;
            for (const Tensor& img : gt.observations.images) images.append(array_from(img));
            for (const Tensor& s : gt.hard_shadows) shadows.append(array_from(s));
            out["images"] = images;
            out["hard_shadows"] = shadows;
            out["mask"] = array_from(gt.observations.mask);
            out["normals"] = array_from(gt.normals);
            out["depth"] = array_from(gt.depth);
            out["lights"] = array_from(scene.light_dirs);
            out["intensities"] = array_from(scene.light_intensities);
            return out;
        },
        py::arg("scene_json"), "oracle-render a scene description file");

    m.def(
        "solve",
        [](const std::string& dataset_dir, const std::string& config_json) {
            RunConfig config;
            if (!config_json.empty()) config = config_from_json_string(config_json);
            ObservationSet obs = load_dataset(dataset_dir, config);
            SolveResult r = solve(obs, config);
            py::dict out;
            out["normals"] = array_from(r.normals);
            out["depth"] = array_from(r.depth);
            out["lights"] = array_from(r.lights);
            out["intensities"] = array_from(r.intensities);
            py::list shadows;
            for (const Tensor& s : r.shadow_maps) shadows.append(array_from(s));
            out["shadow_maps"] = shadows;
            out["rho_d"] = array_from(r.rho_d);
            py::list history;
            for (const HistoryRow& h : r.history) {
                py::dict row;
                row["epoch"] = h.epoch;
                row["total"] = h.total;
                row["l_ir"] = h.l_ir;
                row["lr"] = h.lr;
                history.append(row);
            }
            out["history"] = history;
            return out;
        },
        py::arg("dataset_dir"), py::arg("config_json") = std::string(),
        "run the full inverse-rendering solve on a dataset directory");

    m.def(
        "mae_degrees",
        [](py::array_t<double> est, py::array_t<double> gt) {
            return mae_degrees(tensor_from(est), tensor_from(gt));
        },
        py::arg("est"), py::arg("gt"), "mean angular error in degrees between [...,3] stacks");

    m.def(
        "e_int",
        [](py::array_t<double> est, py::array_t<double> gt) {
            return e_int(tensor_from(est), tensor_from(gt));
        },
        py::arg("est"), py::arg("gt"), "scale-invariant intensity error");

    m.def(
        "shadow_iou",
        [](py::array_t<double> soft, py::array_t<double> hard, py::array_t<double> mask,
           double threshold) {
            return shadow_iou(tensor_from(soft), tensor_from(hard), tensor_from(mask), threshold);
        },
        py::arg("soft"), py::arg("hard"), py::arg("mask"), py::arg("threshold") = 0.5);

    m.def(
        "gbr_transform",
        [](py::array_t<double> normals, py::array_t<double> lights, double mu, double nu,
           double lambda) {
            GbrResult g = gbr_transform(tensor_from(normals), tensor_from(lights), mu, nu, lambda);
            py::dict out;
            out["normals"] = array_from(g.normals);
            out["albedo_scale"] = array_from(g.albedo_scale);
            out["lights"] = array_from(g.lights);
            out["intensity_scale"] = array_from(g.intensity_scale);
            return out;
        },
        py::arg("normals"), py::arg("lights"), py::arg("mu"), py::arg("nu"), py::arg("lambda_"),
        "generalized bas-relief transform with norm-absorbing compensation");

    m.def(
        "render_dataset",
        [](const std::string& scene_json, const std::string& out_dir) {
            AnalyticScene scene = scene_from_json(scene_json);
            save_dataset(out_dir, render_ground_truth(scene));
        },
        py::arg("scene_json"), py::arg("out_dir"),
        "oracle-render a scene and write it as a dataset directory");

    m.def("default_config_json", [] { return config_to_json_string(RunConfig{}); });
    m.def("default_scene_json", [](const std::string& path) {
        scene_to_json(default_desk_scene(), path);
    });
}
