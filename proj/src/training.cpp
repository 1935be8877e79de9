#include "psir/training.hpp"

#include "psir/reflectance.hpp"
#include "psir/shadow.hpp"
#include "psir/vec3.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace psir {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

// ---- loss terms -------------------------------------------------------------------

ad::Var loss_ir(const std::vector<ad::Var>& rendered, const std::vector<Tensor>& observed,
                const Tensor* weights) {
    if (rendered.empty() || rendered.size() != observed.size())
        throw std::invalid_argument("loss_ir: channel count mismatch");
    if (observed[0].size() == 0) throw std::invalid_argument("loss_ir: empty mask");
    double denom = 0;
    if (weights) {
        for (std::int64_t i = 0; i < weights->size(); ++i) denom += (*weights)[i];
        if (denom == 0) throw std::invalid_argument("loss_ir: all entries filtered out");
    } else {
        denom = static_cast<double>(observed[0].size());
    }
    denom *= static_cast<double>(rendered.size());

    ad::Var acc;
    for (std::size_t c = 0; c < rendered.size(); ++c) {
        if (!rendered[c].value().same_shape(observed[c]))
            throw std::invalid_argument("loss_ir: rendered " + rendered[c].value().shape_str() +
                                        " vs observed " + observed[c].shape_str());
        ad::Var diff = ad::abs(ad::sub(rendered[c], ad::Var::constant(observed[c])));
        if (weights) diff = ad::mul(diff, ad::Var::constant(*weights));
        ad::Var total = ad::sum(diff);
        acc = c == 0 ? total : ad::add(acc, total);
    }
    return ad::div(acc, ad::Var::constant(denom));
}

SmoothnessPlan make_smoothness_plan(const Tensor& mask, const PixelSet& pixels) {
    const std::int64_t n = pixels.count();
    auto up = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n));
    auto um = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n));
    auto vp = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n));
    auto vm = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n));
    auto masked = [&](int x, int y) {
        return x >= 0 && x < pixels.width && y >= 0 && y < pixels.height && mask.at(y, x) != 0.0;
    };
    for (std::int64_t i = 0; i < n; ++i) {
        const int x = pixels.xs[static_cast<std::size_t>(i)];
        const int y = pixels.ys[static_cast<std::size_t>(i)];
        // forward difference, one-sided on the right/bottom boundary
        if (masked(x + 1, y)) {
            (*up)[i] = pixels.index_of(x + 1, y);
            (*um)[i] = i;
        } else if (masked(x - 1, y)) {
            (*up)[i] = i;
            (*um)[i] = pixels.index_of(x - 1, y);
        } else {
            (*up)[i] = (*um)[i] = i;
        }
        if (masked(x, y + 1)) {
            (*vp)[i] = pixels.index_of(x, y + 1);
            (*vm)[i] = i;
        } else if (masked(x, y - 1)) {
            (*vp)[i] = i;
            (*vm)[i] = pixels.index_of(x, y - 1);
        } else {
            (*vp)[i] = (*vm)[i] = i;
        }
    }
    SmoothnessPlan plan;
    plan.u_plus = up;
    plan.u_minus = um;
    plan.v_plus = vp;
    plan.v_minus = vm;
    return plan;
}

ad::Var smoothness_term(const ad::Var& map, const SmoothnessPlan& plan) {
    using namespace ad;
    Var du = sub(gather(map, plan.u_plus), gather(map, plan.u_minus));
    Var dv = sub(gather(map, plan.v_plus), gather(map, plan.v_minus));
    return mean(ad::abs(add(du, dv)));
}

ad::Var loss_silhouette(const ad::Var& normals_matrix,
                        const std::shared_ptr<const std::vector<std::int64_t>>& sil_rows,
                        const Tensor& sil_targets) {
    using namespace ad;
    const std::int64_t s = static_cast<std::int64_t>(sil_rows->size());
    if (s == 0) return Var::constant(0.0);
    auto flat = std::make_shared<std::vector<std::int64_t>>();
    flat->reserve(static_cast<std::size_t>(3 * s));
    for (std::int64_t r : *sil_rows)
        for (std::int64_t c = 0; c < 3; ++c) flat->push_back(3 * r + c);
    Var rows = reshape(gather(normals_matrix, flat), {s, 3});
    Var ones = Var::constant(Tensor::full({3, 1}, 1.0));
    Var cos_sim = matmul(mul(rows, Var::constant(sil_targets)), ones);  // [S,1]
    return mean(sub(Var::constant(1.0), cos_sim));
}

// ---- schedule helpers ---------------------------------------------------------------

double cosine_lr(int epoch, int total, double lr_max, double lr_min) {
    if (total <= 0) return lr_max;
    const double t = static_cast<double>(epoch) / static_cast<double>(total);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(kPi * t));
}

int stage_of(int epoch, const RunConfig& config) {
    if (epoch < config.stage_epochs[0]) return 1;
    if (epoch < config.stage_epochs[0] + config.stage_epochs[1]) return 2;
    return 3;
}

int active_bases(int epoch, const RunConfig& config) {
    const int ng = config.asg_bases;
    if (config.anneal_epochs <= 0 || epoch >= config.anneal_epochs) return ng;
    const int a = 1 + (ng - 1) * epoch / config.anneal_epochs;
    return std::max(1, std::min(ng, a));
}

// ---- solve ----------------------------------------------------------------------------

namespace {

struct SolveSetup {
    PixelSet pixels;
    Tensor codes;  // [P, 4L]
    NeighborTable ntable;
    SmoothnessPlan splan;
    std::shared_ptr<const std::vector<std::int64_t>> cell_map;
    std::shared_ptr<const std::vector<std::int64_t>> sil_rows;
    Tensor sil_targets;              // [S,3]
    std::vector<Tensor> observed;    // per channel [P,F]
    Tensor weights;                  // [P,F]; empty when no filter
    Mlp depth_mlp, material_mlp;
    int channels = 1;
    int light_count = 0;
};

struct EpochGraph {
    ad::Var total, l_ir, l_si, l_rd, l_w, l_n;  // l_* already weighted
    ad::Var w_pix, grid;
    NormalGraph normals;
    std::vector<ad::Var> shadows;            // per light [P]
    std::vector<ad::Var> rho_d_cols;         // per channel [P]
    std::vector<std::vector<ad::Var>> c_cols;  // [channel][basis]
    LightGraph lights;
};

EpochGraph build_epoch(ad::Tape& tape, const ParamStore& store, const SolveSetup& setup,
                       const RunConfig& config, int epoch,
                       const std::vector<Tensor>* frozen_shadows, LeafSet* leaves_out) {
    using namespace ad;
    LeafSet leaves = make_leaves(tape, store);
    if (leaves_out) *leaves_out = leaves;

    EpochGraph g;
    const std::int64_t p = setup.pixels.count();
    const int f = setup.light_count;
    const int channels = setup.channels;
    const int ng = config.asg_bases;

    Var codes = Var::constant(setup.codes);
    Var depth_raw = setup.depth_mlp.forward(leaves, codes);  // [P,1]
    g.w_pix = mul(take_col(depth_raw, 0), Var::constant(config.depth_scale));
    g.grid = grid_fill_graph(g.w_pix, setup.cell_map, setup.pixels.width, setup.pixels.height);
    g.normals = fit_normals_graph(g.w_pix, setup.ntable, config.pitch);
    g.lights = lights_graph(leaves);

    Var alpha = leaves["shadow.alpha"];
    Var beta = leaves["shadow.beta"];
    g.shadows.reserve(static_cast<std::size_t>(f));
    for (int j = 0; j < f; ++j) {
        if (frozen_shadows) {
            g.shadows.push_back(Var::constant((*frozen_shadows)[static_cast<std::size_t>(j)]));
            continue;
        }
        Var row = gather(g.lights.unit, std::vector<std::int64_t>{3 * j, 3 * j + 1, 3 * j + 2});
        g.shadows.push_back(soft_shadow_graph(g.grid, g.w_pix, row, alpha, beta, setup.pixels,
                                              config.shadow_samples, config.pitch));
    }
    Var shadow_mat = stack_cols(g.shadows);  // [P,F]

    Var mat_out = setup.material_mlp.forward(leaves, codes);  // [P, C + NG*C]
    g.rho_d_cols.resize(static_cast<std::size_t>(channels));
    g.c_cols.assign(static_cast<std::size_t>(channels), {});
    for (int c = 0; c < channels; ++c) {
        g.rho_d_cols[static_cast<std::size_t>(c)] = softplus(take_col(mat_out, c));
        for (int k = 0; k < ng; ++k)
            g.c_cols[static_cast<std::size_t>(c)].push_back(softplus(sub(
                take_col(mat_out, channels + static_cast<std::int64_t>(k) * channels + c),
                Var::constant(config.material_c_shift))));
    }

    FrameGraph frame = tangent_frames_graph(g.normals.nx, g.normals.ny, g.normals.nz);
    Var half = half_vectors_graph(g.lights.unit);
    auto lobes = asg_lobes_graph(frame, half, ad::exp(leaves["asg.log_rx"]),
                                 ad::exp(leaves["asg.log_ry"]), active_bases(epoch, config),
                                 config.isotropic_tie);

    Var shading = max_const(matmul(g.normals.matrix, transpose(g.lights.unit)), 0.0);  // [P,F]

    std::vector<Var> rendered;
    rendered.reserve(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) {
        std::vector<Var> weights_c;
        for (int k = 0; k < static_cast<int>(lobes.size()); ++k)
            weights_c.push_back(g.c_cols[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)]);
        Var rho_s = asg_weighted_sum(lobes, weights_c);  // [P,F]
        Var rho = add(rho_s, reshape(g.rho_d_cols[static_cast<std::size_t>(c)], {p, 1}));
        Var e_row = reshape(take_col(g.lights.intensity, c), {1, f});
        rendered.push_back(mul(mul(e_row, shadow_mat), mul(rho, shading)));
    }

    g.l_ir = loss_ir(rendered, setup.observed, setup.weights.empty() ? nullptr : &setup.weights);

    const int stage = stage_of(epoch, config);
    const bool use_si = !setup.sil_rows->empty() &&
                        !(stage == 3 && config.drop_silhouette_stage3);
    Var zero = Var::constant(0.0);
    g.l_si = use_si ? mul(Var::constant(config.lambda_si),
                          loss_silhouette(g.normals.matrix, setup.sil_rows, setup.sil_targets))
                    : zero;
    if (stage == 1) {
        Var rd_acc;
        for (int c = 0; c < channels; ++c) {
            Var t = smoothness_term(g.rho_d_cols[static_cast<std::size_t>(c)], setup.splan);
            rd_acc = c == 0 ? t : add(rd_acc, t);
        }
        g.l_rd = mul(Var::constant(config.lambda / channels), rd_acc);
        g.l_w = mul(Var::constant(config.lambda), smoothness_term(g.w_pix, setup.splan));
    } else {
        g.l_rd = zero;
        g.l_w = zero;
    }
    if (stage == 1 || stage == 2) {
        Var n_acc = add(add(smoothness_term(g.normals.nx, setup.splan),
                            smoothness_term(g.normals.ny, setup.splan)),
                        smoothness_term(g.normals.nz, setup.splan));
        // stage 1 weighs normal smoothness by lambda_n; stage 2 keeps the
        // term with weight lambda per the staged loss definition
        const double wn = (stage == 1 ? config.lambda_n : config.lambda) / 3.0;
        g.l_n = mul(Var::constant(wn), n_acc);
    } else {
        g.l_n = zero;
    }

    g.total = add(add(add(add(g.l_ir, g.l_si), g.l_rd), g.l_w), g.l_n);
    return g;
}

Tensor scatter_map(const Tensor& values, const PixelSet& pixels, double fill, int cols = 1) {
    Tensor out = cols == 1 ? Tensor({pixels.height, pixels.width})
                           : Tensor({pixels.height, pixels.width, cols});
    out.fill(fill);
    for (std::int64_t i = 0; i < pixels.count(); ++i) {
        const std::int64_t cell = pixels.flat[static_cast<std::size_t>(i)];
        for (int c = 0; c < cols; ++c) out[cell * cols + c] = values[i * cols + c];
    }
    return out;
}

void check_finite(double v, const char* term, int epoch) {
    if (std::isnan(v) || std::isinf(v))
        throw std::runtime_error("solve: NaN in " + std::string(term) + " at epoch " +
                                 std::to_string(epoch));
}

} // namespace

SolveResult solve(const ObservationSet& obs, const RunConfig& config) {
    if (obs.light_count() < 3)
        throw std::invalid_argument("solve: need at least 3 images, got " +
                                    std::to_string(obs.light_count()));
    if (obs.mask.size() == 0) throw std::invalid_argument("solve: empty mask");

    SolveSetup setup;
    setup.pixels = make_pixel_set(obs.mask);
    if (setup.pixels.count() == 0) throw std::invalid_argument("solve: empty mask");
    setup.channels = obs.channels;
    setup.light_count = obs.light_count();

    PositionalEncoder encoder{config.encoding_octaves};
    setup.codes = encoder.encode_pixels(setup.pixels.xs, setup.pixels.ys, setup.pixels.width,
                                        setup.pixels.height);
    setup.ntable = make_neighbor_table(obs.mask, setup.pixels);
    setup.splan = make_smoothness_plan(obs.mask, setup.pixels);
    setup.cell_map = nearest_masked_map(obs.mask, setup.pixels);

    // silhouette targets
    {
        auto sil = silhouette_normals(obs.mask);
        auto rows = std::make_shared<std::vector<std::int64_t>>();
        std::vector<double> targets;
        for (const auto& s : sil) {
            const std::int64_t row = setup.pixels.index_of(s.x, s.y);
            if (row < 0) continue;
            rows->push_back(row);
            if (config.silhouette_targets == "flat") {
                targets.insert(targets.end(), {0.0, 0.0, 1.0});
            } else {
                targets.insert(targets.end(), {s.normal.x, s.normal.y, s.normal.z});
            }
        }
        setup.sil_rows = rows;
        setup.sil_targets =
            Tensor::from(std::move(targets), {static_cast<std::int64_t>(rows->size()), 3});
    }

    // observation matrices [P,F] per channel
    const std::int64_t p = setup.pixels.count();
    const int f = setup.light_count;
    setup.observed.assign(static_cast<std::size_t>(setup.channels), Tensor({p, f}));
    for (int j = 0; j < f; ++j) {
        const Tensor& img = obs.images[static_cast<std::size_t>(j)];
        if (img.rank() != 3 || img.dim(0) != setup.pixels.height ||
            img.dim(1) != setup.pixels.width || img.dim(2) != setup.channels)
            throw std::invalid_argument("solve: image " + std::to_string(j) + " shape " +
                                        img.shape_str() + " does not match the mask");
        for (std::int64_t i = 0; i < p; ++i) {
            const std::int64_t cell = setup.pixels.flat[static_cast<std::size_t>(i)];
            for (int c = 0; c < setup.channels; ++c)
                setup.observed[static_cast<std::size_t>(c)].at(i, j) =
                    img[cell * setup.channels + c];
        }
    }
    if (!obs.loss_masks.empty()) {
        setup.weights = Tensor({p, f});
        for (int j = 0; j < f; ++j)
            for (std::int64_t i = 0; i < p; ++i)
                setup.weights.at(i, j) =
                    obs.loss_masks[static_cast<std::size_t>(j)]
                                  [setup.pixels.flat[static_cast<std::size_t>(i)]];
    }

    // parameters
    std::mt19937_64 rng(config.seed);
    const int code_len = encoder.code_length();
    setup.depth_mlp = Mlp{"depth_mlp", code_len, config.depth_hidden, 1};
    setup.material_mlp = Mlp{"material_mlp", code_len, config.material_hidden,
                             setup.channels + config.asg_bases * setup.channels};

    SolveResult result;
    ParamStore& store = result.params;
    setup.depth_mlp.register_params(store, rng);
    setup.material_mlp.register_params(store, rng);

    LightInitMode mode;
    if (config.light_init == "gt_perturbed") mode = LightInitMode::GtPerturbed;
    else if (config.light_init == "hemisphere") mode = LightInitMode::UniformHemisphere;
    else if (config.light_init == "file") mode = LightInitMode::FromFile;
    else throw std::invalid_argument("solve: unknown light_init '" + config.light_init + "'");
    const Tensor* gt_dirs = obs.gt_lights ? &*obs.gt_lights : nullptr;
    Tensor light_dirs = init_light_directions(mode, f, rng, gt_dirs, config.light_noise_deg,
                                              config.light_init_file);

    {
        // degenerate lighting: all initial directions identical
        double max_angle = 0;
        for (std::int64_t j = 1; j < f; ++j)
            max_angle = std::max(
                max_angle, angle_deg(Vec3{light_dirs.at(0, 0), light_dirs.at(0, 1),
                                          light_dirs.at(0, 2)},
                                     Vec3{light_dirs.at(j, 0), light_dirs.at(j, 1),
                                          light_dirs.at(j, 2)}));
        if (max_angle < 1e-6)
            std::fprintf(stderr, "solve: degenerate lighting (all directions identical)\n");
    }

    LearnableParams learnable;
    learnable.light_count = f;
    learnable.channels = setup.channels;
    learnable.n_g = config.asg_bases;
    learnable.register_params(store, light_dirs);
    store.at("shadow.alpha") = Tensor::scalar(config.alpha_init);
    store.at("shadow.beta") = Tensor::scalar(config.beta_init);

    result.silhouette_count = static_cast<int>(setup.sil_rows->size());
    result.silhouette_missing = setup.sil_rows->empty();
    if (result.silhouette_missing)
        std::fprintf(stderr, "solve: no usable silhouette; silhouette loss disabled\n");

    int start_epoch = 0;
    std::vector<Tensor> frozen_shadows;
    if (!config.resume_from.empty()) {
        Checkpoint ckpt = load_checkpoint(config.resume_from);
        for (std::size_t i = 0; i < store.count(); ++i)
            store.value(i) = ckpt.params.at(store.names()[i]);
        store.adam() = ckpt.params.adam();
        std::istringstream is(ckpt.rng_state);
        is >> rng;
        start_epoch = ckpt.epoch;
        result.history = ckpt.history;
        frozen_shadows = ckpt.frozen_shadows;
    }

    const int total = config.total_epochs();
    const int schedule_total = config.stage_epochs[0] + config.stage_epochs[1] +
                               config.stage_epochs[2];

    if (config.shadow_frozen && frozen_shadows.empty() && start_epoch < total) {
        // ablation: shadow maps computed once from the initial state and held
        ad::Tape tape;
        EpochGraph g = build_epoch(tape, store, setup, config, start_epoch, nullptr, nullptr);
        for (const ad::Var& s : g.shadows) frozen_shadows.push_back(s.value());
    }

    std::vector<std::size_t> light_params;
    for (std::size_t i = 0; i < store.count(); ++i)
        if (store.names()[i] == "lights.dir" || store.names()[i] == "lights.log_e")
            light_params.push_back(i);

    for (int epoch = start_epoch; epoch < total; ++epoch) {
        ad::Tape tape;
        LeafSet leaves;
        EpochGraph g = build_epoch(tape, store, setup, config, epoch,
                                   config.shadow_frozen ? &frozen_shadows : nullptr, &leaves);
        HistoryRow row;
        row.epoch = epoch;
        row.l_ir = g.l_ir.item();
        row.l_si = g.l_si.item();
        row.l_rd = g.l_rd.item();
        row.l_w = g.l_w.item();
        row.l_n = g.l_n.item();
        row.total = g.total.item();
        row.lr = cosine_lr(epoch, schedule_total, config.lr_max, config.lr_min);
        check_finite(row.l_ir, "L_IR", epoch);
        check_finite(row.l_si, "L_Si", epoch);
        check_finite(row.l_rd, "L_Rd", epoch);
        check_finite(row.l_w, "L_W", epoch);
        check_finite(row.l_n, "L_N", epoch);

        double lr = row.lr;
        if (config.warmup_epochs > 0 && epoch < config.warmup_epochs)
            lr *= static_cast<double>(epoch + 1) / config.warmup_epochs;
        std::vector<double> lr_scales(store.count(), 1.0);
        const double light_scale =
            epoch < config.light_freeze_epochs ? 0.0 : config.light_lr_scale;
        for (std::size_t i : light_params) lr_scales[i] = light_scale;
        tape.backward(g.total);
        optimize_step(leaves, store, lr, lr_scales);
        LearnableParams::project(store);
        result.history.push_back(row);

        if (config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0) {
            Checkpoint ckpt;
            ckpt.epoch = epoch + 1;
            std::ostringstream os;
            os << rng;
            ckpt.rng_state = os.str();
            ckpt.params = store;
            ckpt.history = result.history;
            ckpt.frozen_shadows = frozen_shadows;
            save_checkpoint(ckpt, config.checkpoint_dir + "/checkpoint_" +
                                      std::to_string(epoch + 1) + ".bin");
        }
    }

    // final forward evaluation for the output maps
    ad::Tape tape;
    EpochGraph g = build_epoch(tape, store, setup, config, std::max(total - 1, 0),
                               config.shadow_frozen && !frozen_shadows.empty() ? &frozen_shadows
                                                                               : nullptr,
                               nullptr);
    const std::int64_t pc = setup.pixels.count();
    Tensor normal_rows({pc, 3});
    for (std::int64_t i = 0; i < pc; ++i) {
        normal_rows.at(i, 0) = g.normals.nx.value()[i];
        normal_rows.at(i, 1) = g.normals.ny.value()[i];
        normal_rows.at(i, 2) = g.normals.nz.value()[i];
    }
    result.normals = scatter_map(normal_rows, setup.pixels, 0.0, 3);
    result.depth = g.grid.value();
    result.lights = store.at("lights.dir");
    result.intensities = Tensor({f, setup.channels});
    for (std::int64_t j = 0; j < f; ++j)
        for (int c = 0; c < setup.channels; ++c)
            result.intensities.at(j, c) = g.lights.intensity.value().at(j, c);
    for (int j = 0; j < f; ++j)
        result.shadow_maps.push_back(
            scatter_map(g.shadows[static_cast<std::size_t>(j)].value(), setup.pixels, 1.0));
    Tensor rho_rows({pc, setup.channels});
    for (std::int64_t i = 0; i < pc; ++i)
        for (int c = 0; c < setup.channels; ++c)
            rho_rows.at(i, c) = g.rho_d_cols[static_cast<std::size_t>(c)].value()[i];
    result.rho_d = scatter_map(rho_rows, setup.pixels, 0.0, setup.channels);
    const int wcols = config.asg_bases * setup.channels;
    Tensor c_rows({pc, wcols});
    for (std::int64_t i = 0; i < pc; ++i)
        for (int k = 0; k < config.asg_bases; ++k)
            for (int c = 0; c < setup.channels; ++c)
                c_rows.at(i, static_cast<std::int64_t>(k) * setup.channels + c) =
                    g.c_cols[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)].value()[i];
    result.asg_weights = scatter_map(c_rows, setup.pixels, 0.0, wcols);
    return result;
}

// ---- checkpoints ------------------------------------------------------------------------

namespace {

void write_tensor(std::ostream& os, const Tensor& t) {
    const std::int32_t rank = t.rank();
    os.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
    for (int d = 0; d < rank; ++d) {
        const std::int64_t dim = t.dim(d);
        os.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    }
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.size())));
}

Tensor read_tensor(std::istream& is) {
    std::int32_t rank = 0;
    is.read(reinterpret_cast<char*>(&rank), sizeof(rank));
    std::vector<std::int64_t> shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) is.read(reinterpret_cast<char*>(&d), sizeof(d));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.size())));
    return t;
}

void write_string(std::ostream& os, const std::string& s) {
    const std::int64_t n = static_cast<std::int64_t>(s.size());
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(s.data(), n);
}

std::string read_string(std::istream& is) {
    std::int64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    std::string s(static_cast<std::size_t>(n), '\0');
    is.read(s.data(), n);
    return s;
}

constexpr char kCkptMagic[8] = {'P', 'S', 'I', 'R', 'C', 'K', 'P', '1'};

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    os.write(kCkptMagic, sizeof(kCkptMagic));
    const std::int64_t epoch = ckpt.epoch;
    os.write(reinterpret_cast<const char*>(&epoch), sizeof(epoch));
    write_string(os, ckpt.rng_state);
    const std::int64_t count = static_cast<std::int64_t>(ckpt.params.count());
    os.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (std::size_t i = 0; i < ckpt.params.count(); ++i) {
        write_string(os, ckpt.params.names()[i]);
        write_tensor(os, ckpt.params.value(i));
    }
    const auto& adam = ckpt.params.adam();
    const std::int64_t step = adam.step;
    os.write(reinterpret_cast<const char*>(&step), sizeof(step));
    const std::int64_t moments = static_cast<std::int64_t>(adam.m.size());
    os.write(reinterpret_cast<const char*>(&moments), sizeof(moments));
    for (const Tensor& m : adam.m) write_tensor(os, m);
    for (const Tensor& v : adam.v) write_tensor(os, v);
    const std::int64_t rows = static_cast<std::int64_t>(ckpt.history.size());
    os.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    for (const HistoryRow& r : ckpt.history)
        os.write(reinterpret_cast<const char*>(&r), sizeof(HistoryRow));
    const std::int64_t frozen = static_cast<std::int64_t>(ckpt.frozen_shadows.size());
    os.write(reinterpret_cast<const char*>(&frozen), sizeof(frozen));
    for (const Tensor& t : ckpt.frozen_shadows) write_tensor(os, t);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint '" + path + "'");
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::string(magic, 8) != std::string(kCkptMagic, 8))
        throw std::runtime_error("'" + path + "' is not a checkpoint file");
    Checkpoint ckpt;
    std::int64_t epoch = 0;
    is.read(reinterpret_cast<char*>(&epoch), sizeof(epoch));
    ckpt.epoch = static_cast<int>(epoch);
    ckpt.rng_state = read_string(is);
    std::int64_t count = 0;
    is.read(reinterpret_cast<char*>(&count), sizeof(count));
    for (std::int64_t i = 0; i < count; ++i) {
        std::string name = read_string(is);
        ckpt.params.add(std::move(name), read_tensor(is));
    }
    std::int64_t step = 0;
    is.read(reinterpret_cast<char*>(&step), sizeof(step));
    ckpt.params.adam().step = step;
    std::int64_t moments = 0;
    is.read(reinterpret_cast<char*>(&moments), sizeof(moments));
    for (std::int64_t i = 0; i < moments; ++i) ckpt.params.adam().m.push_back(read_tensor(is));
    for (std::int64_t i = 0; i < moments; ++i) ckpt.params.adam().v.push_back(read_tensor(is));
    std::int64_t rows = 0;
    is.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    ckpt.history.resize(static_cast<std::size_t>(rows));
    for (auto& r : ckpt.history) is.read(reinterpret_cast<char*>(&r), sizeof(HistoryRow));
    std::int64_t frozen = 0;
    is.read(reinterpret_cast<char*>(&frozen), sizeof(frozen));
    for (std::int64_t i = 0; i < frozen; ++i) ckpt.frozen_shadows.push_back(read_tensor(is));
    if (!is) throw std::runtime_error("checkpoint '" + path + "' is truncated");
    return ckpt;
}

} // namespace psir
