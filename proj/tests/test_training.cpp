#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "psir/dataset.hpp"
#include "psir/metrics.hpp"
#include "psir/synthetic.hpp"
#include "psir/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

using namespace psir;

namespace {

// small scene + config for fast solver tests
AnalyticScene tiny_scene(int res = 24, int ring = 6) {
    AnalyticScene s;
    s.shape = SceneShape::HemisphereOnPlane;
    s.resolution = res;
    s.radius_frac = 0.36;
    s.plane_depth = 10.0;
    s.object_mask = true;
    s.material.model = MaterialModel::Lambertian;
    s.material.rho_d = 0.8;
    default_lights(s, ring, 45.0, 2, 3);
    return s;
}

RunConfig tiny_config() {
    RunConfig c;
    c.shadow_samples = 12;
    c.asg_bases = 4;
    c.encoding_octaves = 4;
    c.depth_hidden = {24, 24};
    c.material_hidden = {24, 24};
    c.depth_scale = 4.0;
    c.stage_epochs[0] = 12;
    c.stage_epochs[1] = 6;
    c.stage_epochs[2] = 6;
    c.anneal_epochs = 12;
    c.seed = 9;
    return c;
}

} // namespace

TEST_CASE("loss_ir: identity, constant offset, and the double-loop oracle") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const std::int64_t p = 37, f = 5;
    Tensor obs({p, f});
    for (std::int64_t i = 0; i < obs.size(); ++i) obs[i] = uni(rng);

    ad::Var same = ad::Var::constant(obs);
    CHECK(loss_ir({same}, {obs}).item() == 0.0);

    Tensor shifted = obs;
    for (std::int64_t i = 0; i < shifted.size(); ++i) shifted[i] += 0.1;
    CHECK(loss_ir({ad::Var::constant(shifted)}, {obs}).item() ==
          doctest::Approx(0.1).epsilon(1e-12));

    Tensor rendered({p, f});
    for (std::int64_t i = 0; i < rendered.size(); ++i) rendered[i] = uni(rng);
    double naive = 0;
    for (std::int64_t i = 0; i < p; ++i)
        for (std::int64_t j = 0; j < f; ++j) naive += std::fabs(rendered.at(i, j) - obs.at(i, j));
    naive /= static_cast<double>(p * f);
    CHECK(std::fabs(loss_ir({ad::Var::constant(rendered)}, {obs}).item() - naive) < 1e-12);

    CHECK_THROWS_AS(loss_ir({ad::Var::constant(Tensor({0, 0}))}, {Tensor({0, 0})}),
                    std::invalid_argument);
}

TEST_CASE("smoothness: zero on constants, exact on a unit ramp, linear in the weight") {
    Tensor mask = Tensor::full({6, 6}, 1.0);
    PixelSet pixels = make_pixel_set(mask);
    SmoothnessPlan plan = make_smoothness_plan(mask, pixels);

    Tensor flat = Tensor::full({pixels.count()}, 3.3);
    CHECK(smoothness_term(ad::Var::constant(flat), plan).item() == 0.0);

    Tensor ramp({pixels.count()});
    for (std::int64_t i = 0; i < pixels.count(); ++i)
        ramp[i] = static_cast<double>(pixels.xs[static_cast<std::size_t>(i)]);  // W = u
    const double term = smoothness_term(ad::Var::constant(ramp), plan).item();
    CHECK(term == doctest::Approx(1.0).epsilon(1e-12));
    // lambda = 0.01 contributes exactly 0.01, and doubling it doubles the term
    CHECK(0.01 * term == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(0.02 * term == doctest::Approx(2 * 0.01 * term).epsilon(1e-12));
}

TEST_CASE("silhouette loss: aligned, orthogonal, hemisphere ring") {
    // rim normals approach the xy-plane as 1/R; the pixel-wide boundary band
    // needs a reasonably large disk for the sub-0.05 residual
    const int n = 87;
    Tensor mask = Tensor::zeros({n, n});
    const double c = (n - 1) / 2.0, radius = 40.0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            if (std::hypot(x - c, y - c) <= radius) mask.at(y, x) = 1;
    PixelSet pixels = make_pixel_set(mask);

    auto sil = silhouette_normals(mask);
    auto rows = std::make_shared<std::vector<std::int64_t>>();
    std::vector<double> targets;
    for (const auto& s : sil) {
        const std::int64_t r = pixels.index_of(s.x, s.y);
        if (r < 0) continue;
        rows->push_back(r);
        targets.insert(targets.end(), {s.normal.x, s.normal.y, s.normal.z});
    }
    Tensor target_t = Tensor::from(targets, {static_cast<std::int64_t>(rows->size()), 3});

    // estimated == fitted -> 0
    Tensor est({pixels.count(), 3});
    for (std::size_t k = 0; k < rows->size(); ++k) {
        est.at((*rows)[k], 0) = target_t.at(static_cast<std::int64_t>(k), 0);
        est.at((*rows)[k], 1) = target_t.at(static_cast<std::int64_t>(k), 1);
        est.at((*rows)[k], 2) = target_t.at(static_cast<std::int64_t>(k), 2);
    }
    CHECK(loss_silhouette(ad::Var::constant(est), rows, target_t).item() ==
          doctest::Approx(0.0).epsilon(1e-12));

    // orthogonal everywhere -> 1 (targets lie in the xy-plane, z is orthogonal)
    Tensor ortho({pixels.count(), 3});
    for (std::int64_t i = 0; i < pixels.count(); ++i) ortho.at(i, 2) = 1.0;
    CHECK(loss_silhouette(ad::Var::constant(ortho), rows, target_t).item() ==
          doctest::Approx(1.0).epsilon(1e-12));

    // analytic hemisphere normals approach the rim ring
    Tensor hemi({pixels.count(), 3});
    for (std::int64_t i = 0; i < pixels.count(); ++i) {
        const double dx = pixels.xs[static_cast<std::size_t>(i)] - c;
        const double dy = pixels.ys[static_cast<std::size_t>(i)] - c;
        const double R = radius + 0.5;
        const double nz = std::sqrt(std::max(R * R - dx * dx - dy * dy, 0.0)) / R;
        hemi.at(i, 0) = dx / R;
        hemi.at(i, 1) = dy / R;
        hemi.at(i, 2) = nz;
    }
    CHECK(loss_silhouette(ad::Var::constant(hemi), rows, target_t).item() < 0.05);
}

TEST_CASE("schedule helpers") {
    RunConfig c;
    CHECK(cosine_lr(0, 2000, 1e-3, 1e-4) == doctest::Approx(1e-3));
    CHECK(cosine_lr(2000, 2000, 1e-3, 1e-4) == doctest::Approx(1e-4));
    CHECK(cosine_lr(1000, 2000, 1e-3, 1e-4) == doctest::Approx(0.55e-3));

    CHECK(stage_of(0, c) == 1);
    CHECK(stage_of(499, c) == 1);
    CHECK(stage_of(500, c) == 2);
    CHECK(stage_of(1499, c) == 2);
    CHECK(stage_of(1500, c) == 3);
    CHECK(stage_of(1999, c) == 3);

    CHECK(active_bases(0, c) == 1);
    CHECK(active_bases(500, c) == 12);
    CHECK(active_bases(5000, c) == 12);
    int prev = 0;
    for (int e = 0; e <= 500; e += 25) {
        const int a = active_bases(e, c);
        CHECK(a >= prev);
        prev = a;
    }
}

TEST_CASE("solve: precondition failures") {
    GroundTruth gt = render_ground_truth(tiny_scene(16, 2));  // 4 lights total
    RunConfig config = tiny_config();

    ObservationSet two = gt.observations;
    two.images.resize(2);
    CHECK_THROWS_AS(solve(two, config), std::invalid_argument);

    ObservationSet nomask = gt.observations;
    nomask.mask.fill(0.0);
    CHECK_THROWS_AS(solve(nomask, config), std::invalid_argument);
}

TEST_CASE("solve: zero-epoch run returns the initialization unchanged") {
    GroundTruth gt = render_ground_truth(tiny_scene());
    RunConfig config = tiny_config();
    config.epochs_override = 0;
    SolveResult a = solve(gt.observations, config);
    SolveResult b = solve(gt.observations, config);
    CHECK(a.history.empty());
    for (std::size_t i = 0; i < a.params.count(); ++i)
        for (std::int64_t j = 0; j < a.params.value(i).size(); ++j)
            CHECK(a.params.value(i)[j] == b.params.value(i)[j]);
    // adam state untouched
    CHECK(a.params.adam().step == 0);
}

TEST_CASE("solve: identical seeds give bit-identical histories and maps") {
    GroundTruth gt = render_ground_truth(tiny_scene());
    RunConfig config = tiny_config();
    config.epochs_override = 10;
    SolveResult a = solve(gt.observations, config);
    SolveResult b = solve(gt.observations, config);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        CHECK(a.history[e].total == b.history[e].total);
        CHECK(a.history[e].l_ir == b.history[e].l_ir);
    }
    for (std::int64_t i = 0; i < a.normals.size(); ++i) CHECK(a.normals[i] == b.normals[i]);
    for (std::int64_t i = 0; i < a.depth.size(); ++i) CHECK(a.depth[i] == b.depth[i]);

    RunConfig other = config;
    other.seed = 77;
    SolveResult d = solve(gt.observations, other);
    bool differs = false;
    for (std::size_t e = 0; e < a.history.size() && !differs; ++e)
        differs = a.history[e].total != d.history[e].total;
    CHECK(differs);
}

TEST_CASE("solve: bookkeeping identity total = sum of logged components") {
    GroundTruth gt = render_ground_truth(tiny_scene());
    RunConfig config = tiny_config();
    SolveResult r = solve(gt.observations, config);
    REQUIRE(!r.history.empty());
    for (const HistoryRow& row : r.history) {
        const double sum = row.l_ir + row.l_si + row.l_rd + row.l_w + row.l_n;
        CHECK(row.total == sum);  // built by adding the same doubles in order
    }
    // all three stages visited
    CHECK(r.history.size() == 24);
}

TEST_CASE("solve: unit lights after every step and widths stay in range") {
    GroundTruth gt = render_ground_truth(tiny_scene());
    RunConfig config = tiny_config();
    config.epochs_override = 8;
    SolveResult r = solve(gt.observations, config);
    for (std::int64_t j = 0; j < r.lights.dim(0); ++j) {
        const double n = Vec3{r.lights.at(j, 0), r.lights.at(j, 1), r.lights.at(j, 2)}.norm();
        CHECK(std::fabs(n - 1.0) < 1e-12);
    }
    for (const char* name : {"asg.log_rx", "asg.log_ry"}) {
        const Tensor w = LearnableParams::widths(r.params, name);
        for (std::int64_t k = 0; k < w.size(); ++k) {
            CHECK(w[k] >= 1.0);
            CHECK(w[k] <= 1000.0);
        }
    }
    // intensities strictly positive by construction
    for (std::int64_t j = 0; j < r.intensities.size(); ++j) CHECK(r.intensities[j] > 0.0);
}

TEST_CASE("solve: checkpoint resume reproduces the uninterrupted run") {
    namespace fs = std::filesystem;
    GroundTruth gt = render_ground_truth(tiny_scene());
    RunConfig straight = tiny_config();
    straight.epochs_override = 14;
    SolveResult whole = solve(gt.observations, straight);

    fs::create_directories("/tmp/psir_ckpt_test");
    RunConfig first = straight;
    first.checkpoint_every = 7;
    first.checkpoint_dir = "/tmp/psir_ckpt_test";
    first.epochs_override = 7;
    solve(gt.observations, first);

    RunConfig second = straight;
    second.resume_from = "/tmp/psir_ckpt_test/checkpoint_7.bin";
    SolveResult resumed = solve(gt.observations, second);

    REQUIRE(resumed.history.size() == whole.history.size());
    for (std::size_t e = 0; e < whole.history.size(); ++e)
        CHECK(resumed.history[e].total == whole.history[e].total);
    for (std::size_t i = 0; i < whole.params.count(); ++i)
        for (std::int64_t j = 0; j < whole.params.value(i).size(); ++j)
            CHECK(resumed.params.value(i)[j] == whole.params.value(i)[j]);
    fs::remove_all("/tmp/psir_ckpt_test");
}

TEST_CASE("solve: a short run reduces the inverse-rendering loss") {
    GroundTruth gt = render_ground_truth(tiny_scene(28, 8));
    RunConfig config = tiny_config();
    config.stage_epochs[0] = 150;
    config.stage_epochs[1] = 0;
    config.stage_epochs[2] = 0;
    config.anneal_epochs = 50;
    config.depth_scale = 8.0;
    config.lr_max = 3e-3;
    SolveResult r = solve(gt.observations, config);
    CHECK(r.history.back().l_ir < 0.4 * r.history.front().l_ir);
}
