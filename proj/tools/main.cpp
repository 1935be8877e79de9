// Command-line front end: synthetic rendering, solving, evaluation, and
// BRDF-sphere export.

#include "psir/dataset.hpp"
#include "psir/image_io.hpp"
#include "psir/metrics.hpp"
#include "psir/reflectance.hpp"
#include "psir/synthetic.hpp"
#include "psir/training.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace psir;

namespace {

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write '" + path + "'");
    os << "epoch,total,l_ir,l_si,l_rd,l_w,l_n,lr\n";
    os.precision(12);
    for (const HistoryRow& r : history)
        os << r.epoch << ',' << r.total << ',' << r.l_ir << ',' << r.l_si << ',' << r.l_rd << ','
           << r.l_w << ',' << r.l_n << ',' << r.lr << '\n';
}

void write_lights(const std::string& dir, const Tensor& dirs, const Tensor& intensities) {
    std::ofstream ld(dir + "/lights_est.txt");
    ld.precision(12);
    for (std::int64_t j = 0; j < dirs.dim(0); ++j)
        ld << dirs.at(j, 0) << ' ' << dirs.at(j, 1) << ' ' << dirs.at(j, 2) << '\n';
    std::ofstream li(dir + "/intensities_est.txt");
    li.precision(12);
    for (std::int64_t j = 0; j < intensities.dim(0); ++j) {
        for (std::int64_t c = 0; c < intensities.dim(1); ++c)
            li << (c ? " " : "") << intensities.at(j, c);
        li << '\n';
    }
}

Tensor read_rows_tensor(const std::string& path, int cols_expected) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<double> data;
    std::string line;
    std::int64_t rows = 0;
    while (std::getline(in, line)) {
        std::istringstream is(line);
        double v;
        int cols = 0;
        while (is >> v) {
            data.push_back(v);
            ++cols;
        }
        if (cols == 0) continue;
        if (cols_expected > 0 && cols != cols_expected)
            throw std::runtime_error("'" + path + "': expected " +
                                     std::to_string(cols_expected) + " columns");
        ++rows;
    }
    return Tensor::from(std::move(data), {rows, static_cast<std::int64_t>(data.size()) / std::max<std::int64_t>(rows, 1)});
}

int cmd_render(const std::string& scene_path, const std::string& out_dir) {
    AnalyticScene scene = scene_from_json(scene_path);
    GroundTruth gt = render_ground_truth(scene);
    save_dataset(out_dir, gt);
    scene_to_json(scene, (fs::path(out_dir) / "scene.json").string());
    std::cout << "rendered " << gt.observations.light_count() << " images at "
              << scene.resolution << "x" << scene.resolution << " into " << out_dir << "\n";
    return 0;
}

int cmd_solve(const std::string& dataset_dir, const std::string& config_path,
              const std::string& out_dir, int epochs, std::uint64_t seed_override) {
    RunConfig config;
    if (!config_path.empty()) config = config_from_json(config_path);
    if (epochs >= 0) config.epochs_override = epochs;
    if (seed_override) config.seed = seed_override;
    fs::create_directories(out_dir);
    config.checkpoint_dir = out_dir;

    ObservationSet obs = load_dataset(dataset_dir, config);
    SolveResult result = solve(obs, config);

    write_png(out_dir + "/normal_est.png", encode_normal_map(result.normals), 16);
    write_pfm(out_dir + "/depth_est.pfm", result.depth);
    for (std::size_t j = 0; j < result.shadow_maps.size(); ++j) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "/shadow_%02zu.png", j);
        write_png(out_dir + buf, result.shadow_maps[j], 8);
    }
    write_lights(out_dir, result.lights, result.intensities);
    write_history_csv(out_dir + "/loss_history.csv", result.history);
    config_to_json(config, out_dir + "/config_used.json");
    {
        Checkpoint ckpt;
        ckpt.epoch = config.total_epochs();
        ckpt.params = result.params;
        save_checkpoint(ckpt, out_dir + "/checkpoint_final.bin");
    }
    std::cout << "solved " << dataset_dir << " (" << result.history.size() << " epochs) -> "
              << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& out_dir, const std::string& dataset_dir,
             const std::string& report_dir_arg) {
    const std::string report_dir = report_dir_arg.empty() ? out_dir : report_dir_arg;
    fs::create_directories(report_dir);
    ObservationSet obs = load_dataset(dataset_dir);
    EvalReport report;

    Tensor est_normals;
    const bool have_est_normals = fs::exists(out_dir + "/normal_est.png");
    if (have_est_normals)
        est_normals = decode_normal_map(read_png(out_dir + "/normal_est.png"), &obs.mask);

    if (have_est_normals && obs.gt_normals) {
        Tensor est_rows = masked_rows(est_normals, obs.mask);
        Tensor gt_rows = masked_rows(*obs.gt_normals, obs.mask);
        report.normal_mae_deg = mae_degrees(est_rows, gt_rows);
        // per-pixel angular error heatmap
        const auto errs = angle_errors_deg(est_rows, gt_rows);
        Tensor err_map({obs.height, obs.width});
        std::size_t k = 0;
        for (std::int64_t i = 0; i < obs.mask.size(); ++i)
            if (obs.mask[i] != 0.0) err_map[i] = errs[k++];
        write_png(report_dir + "/error_map.png", error_heatmap(err_map, obs.mask), 8);
    }

    if (fs::exists(out_dir + "/lights_est.txt")) {
        Tensor est_lights = read_rows_tensor(out_dir + "/lights_est.txt", 3);
        if (obs.gt_lights) {
            if (est_lights.dim(0) != obs.gt_lights->dim(0))
                throw std::runtime_error("eval: estimated and ground-truth light counts differ");
            report.light_dir_mae_deg = mae_degrees(est_lights, *obs.gt_lights);
            report.per_light_angle_deg = angle_errors_deg(est_lights, *obs.gt_lights);
        }
        write_png(report_dir + "/lights.png",
                  light_sphere_plot(est_lights, obs.gt_lights ? &*obs.gt_lights : nullptr), 8);
    }
    if (fs::exists(out_dir + "/intensities_est.txt") && obs.gt_intensities) {
        Tensor est = read_rows_tensor(out_dir + "/intensities_est.txt", 0);
        if (est.size() == obs.gt_intensities->size())
            report.e_int = e_int(est.reshaped({est.size()}),
                                 obs.gt_intensities->reshaped({est.size()}));
    }
    for (std::size_t j = 0; j < obs.gt_shadows.size(); ++j) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "/shadow_%02zu.png", j);
        if (!fs::exists(out_dir + buf)) break;
        Tensor soft = read_png(out_dir + buf);
        report.shadow_iou_per_image.push_back(
            shadow_iou(soft.reshaped({obs.height, obs.width}), obs.gt_shadows[j], obs.mask));
    }

    std::ofstream txt(report_dir + "/report.txt");
    txt << report.to_text();
    std::ofstream csv(report_dir + "/report_row.csv");
    csv << EvalReport::csv_header() << '\n' << report.csv_row() << '\n';
    std::cout << report.to_text();
    return 0;
}

int cmd_brdf(const std::string& out_dir, int px, int py, const std::string& out_png, int res) {
    Checkpoint ckpt = load_checkpoint(out_dir + "/checkpoint_final.bin");
    RunConfig config = config_from_json(out_dir + "/config_used.json");
    Tensor rho_d_map;  // re-evaluate the material at the pixel from the stored weights
    // the stored rho_d / asg maps are not in the checkpoint; rebuild from MLP
    PositionalEncoder encoder{config.encoding_octaves};
    Tensor mask = read_png(out_dir + "/normal_est.png");  // defines the grid size
    const int width = static_cast<int>(mask.dim(1)), height = static_cast<int>(mask.dim(0));
    if (px < 0 || px >= width || py < 0 || py >= height)
        throw std::runtime_error("brdf-sphere: pixel out of range");

    ad::Tape tape;
    ParamStore store = ckpt.params;
    LeafSet leaves = make_leaves(tape, store);
    Tensor codes = encoder.encode_pixels({px}, {py}, width, height);
    const Tensor rx = LearnableParams::widths(store, "asg.log_rx");
    const int ng = static_cast<int>(rx.size());
    // material output layout: [rho_d_c..., then per basis per channel]
    const Tensor& w0 = store.at("material_mlp.w0");
    (void)w0;
    Mlp material{"material_mlp", encoder.code_length(), config.material_hidden, 0};
    // infer the channel count from the output layer width
    int out_width = 0;
    for (std::size_t i = 0; i < store.count(); ++i)
        if (store.names()[i].rfind("material_mlp.b", 0) == 0)
            out_width = static_cast<int>(store.value(i).size());
    const int channels = out_width / (1 + ng);
    material.output = out_width;
    ad::Var y = material.forward(leaves, ad::Var::constant(codes));

    std::vector<double> rho_d(static_cast<std::size_t>(channels));
    std::vector<std::vector<double>> weights(static_cast<std::size_t>(channels));
    auto softplus = [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
    for (int c = 0; c < channels; ++c) {
        rho_d[static_cast<std::size_t>(c)] = softplus(y.value().at(0, c));
        for (int k = 0; k < ng; ++k)
            weights[static_cast<std::size_t>(c)].push_back(softplus(
                y.value().at(0, channels + static_cast<std::int64_t>(k) * channels + c) -
                config.material_c_shift));
    }
    AsgBasisSet bases;
    bases.rx = rx;
    bases.ry = config.isotropic_tie ? rx : LearnableParams::widths(store, "asg.log_ry");
    bases.active = ng;
    Tensor img = brdf_sphere_image(rho_d, weights, bases, res);
    // normalize for display
    double peak = 0;
    for (std::int64_t i = 0; i < img.size(); ++i) peak = std::max(peak, img[i]);
    if (peak > 0)
        for (std::int64_t i = 0; i < img.size(); ++i) img[i] /= peak;
    write_png(out_png, img, 8);
    std::cout << "wrote " << out_png << " (peak rho " << peak << ")\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncalibrated photometric stereo by differentiable inverse rendering"};
    app.require_subcommand(1);

    std::string scene_path, out_dir, dataset_dir, config_path, report_dir, out_png;
    int epochs = -1, px = 0, py = 0, res = 128;
    std::uint64_t seed = 0;

    auto* render = app.add_subcommand("render", "render a synthetic scene with ground truth");
    render->add_option("scene", scene_path, "scene description JSON")->required();
    render->add_option("out", out_dir, "output dataset directory")->required();

    auto* solve_cmd = app.add_subcommand("solve", "recover shape, reflectance, shadows, lights");
    solve_cmd->add_option("dataset", dataset_dir, "dataset directory")->required();
    solve_cmd->add_option("--config", config_path, "run configuration JSON");
    solve_cmd->add_option("--out", out_dir, "output directory")->required();
    solve_cmd->add_option("--epochs", epochs, "override the total epoch count");
    solve_cmd->add_option("--seed", seed, "override the RNG seed");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate solve output against ground truth");
    eval_cmd->add_option("out", out_dir, "solve output directory")->required();
    eval_cmd->add_option("dataset", dataset_dir, "dataset directory with ground truth")->required();
    eval_cmd->add_option("--report", report_dir, "report directory (defaults to out)");

    auto* brdf = app.add_subcommand("brdf-sphere", "export a BRDF sphere for one pixel");
    brdf->add_option("out", out_dir, "solve output directory")->required();
    brdf->add_option("--pixel", px, "pixel x")->required();
    brdf->add_option("--pixel-y", py, "pixel y")->required();
    brdf->add_option("--png", out_png, "output PNG path")->required();
    brdf->add_option("--res", res, "sphere image resolution");

    auto* scene_tpl = app.add_subcommand("scene-template", "write the default desk scene JSON");
    std::string tpl_path;
    scene_tpl->add_option("path", tpl_path, "output path")->required();

    auto* config_tpl = app.add_subcommand("config-template", "write the default run config JSON");
    config_tpl->add_option("path", tpl_path, "output path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (render->parsed()) return cmd_render(scene_path, out_dir);
        if (solve_cmd->parsed()) return cmd_solve(dataset_dir, config_path, out_dir, epochs, seed);
        if (eval_cmd->parsed()) return cmd_eval(out_dir, dataset_dir, report_dir);
        if (brdf->parsed()) return cmd_brdf(out_dir, px, py, out_png, res);
        if (scene_tpl->parsed()) {
            scene_to_json(default_desk_scene(), tpl_path);
            return 0;
        }
        if (config_tpl->parsed()) {
            config_to_json(RunConfig{}, tpl_path);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
