#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "psir/fields.hpp"
#include "psir/vec3.hpp"
#include "support/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <random>

using namespace psir;

TEST_CASE("positional encoding: zeros, half-period, length") {
    PositionalEncoder enc{2};
    auto code = enc.encode(0.0, 0.0);
    REQUIRE(code.size() == 8);
    const double expect[8] = {0, 1, 0, 1, 0, 1, 0, 1};
    for (int i = 0; i < 8; ++i) CHECK(code[static_cast<std::size_t>(i)] == doctest::Approx(expect[i]));

    PositionalEncoder one{1};
    auto c2 = one.encode(1.0, 0.0);  // [sin pi, cos pi, 0, 1]
    REQUIRE(c2.size() == 4);
    CHECK(c2[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c2[1] == doctest::Approx(-1.0));
    CHECK(c2[2] == 0.0);
    CHECK(c2[3] == 1.0);

    PositionalEncoder ten{10};
    CHECK(ten.code_length() == 40);
    CHECK(ten.encode(0.3, -0.7).size() == 40);
}

TEST_CASE("mlp: affine collapse, determinism, gradients") {
    std::mt19937_64 rng(3);
    Mlp mlp{"m", 6, {8, 8}, 2};
    ParamStore store;
    mlp.register_params(store, rng);

    // zero weights and biases collapse to zero output
    ParamStore zeroed = store;
    for (std::size_t i = 0; i < zeroed.count(); ++i) zeroed.value(i).fill(0.0);
    ad::Tape t0;
    LeafSet leaves0 = make_leaves(t0, zeroed);
    Tensor code({3, 6});
    std::uniform_real_distribution<double> uni(-1, 1);
    for (std::int64_t i = 0; i < code.size(); ++i) code[i] = uni(rng);
    ad::Var out0 = mlp.forward(leaves0, ad::Var::constant(code));
    for (std::int64_t i = 0; i < out0.value().size(); ++i) CHECK(out0.value()[i] == 0.0);

    // fixed seed, fixed code: bit-identical output across runs
    auto run = [&code](int seed_v) {
        std::mt19937_64 r(seed_v);
        Mlp m{"m", 6, {8, 8}, 2};
        ParamStore s;
        m.register_params(s, r);
        ad::Tape tape;
        LeafSet leaves = make_leaves(tape, s);
        return m.forward(leaves, ad::Var::constant(code)).value();
    };
    Tensor a = run(11), b = run(11);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    // gradient of the output w.r.t. any weight matches finite differences
    std::vector<Tensor> params;
    for (std::size_t i = 0; i < store.count(); ++i) params.push_back(store.value(i));
    auto builder = [&](ad::Tape&, std::vector<ad::Var>& v) {
        LeafSet set;
        set.store = &store;
        set.vars = v;
        return ad::mean(mlp.forward(set, ad::Var::constant(code)));
    };
    auto rep = test::check_gradients(builder, params);
    CHECK(rep.ok(1e-4));
}

TEST_CASE("material head arity and nonnegativity by construction") {
    // softplus output stays positive for random weights
    std::mt19937_64 rng(5);
    const int channels = 1, ng = 12;
    Mlp mlp{"mat", 4, {16}, channels + ng * channels};
    ParamStore store;
    mlp.register_params(store, rng);
    ad::Tape tape;
    LeafSet leaves = make_leaves(tape, store);
    Tensor code({5, 4});
    std::uniform_real_distribution<double> uni(-1, 1);
    for (std::int64_t i = 0; i < code.size(); ++i) code[i] = uni(rng);
    ad::Var raw = mlp.forward(leaves, ad::Var::constant(code));
    CHECK(raw.value().dim(1) == 13);  // channels + N_G with N_G = 12
    ad::Var rho = ad::softplus(ad::take_col(raw, 0));
    for (std::int64_t i = 0; i < rho.value().size(); ++i) CHECK(rho.value()[i] >= 0.0);
}

TEST_CASE("asg width initialization is log-uniform over [10, 300]") {
    Tensor r = initial_asg_widths(12);
    REQUIRE(r.size() == 12);
    CHECK(r[0] == doctest::Approx(10.0));
    CHECK(r[11] == doctest::Approx(300.0));
    // constant ratio between consecutive widths
    const double ratio = r[1] / r[0];
    for (int k = 1; k < 11; ++k) CHECK(r[k + 1] / r[k] == doctest::Approx(ratio).epsilon(1e-9));
    CHECK(kShadowAlphaInit == 400.0);
    CHECK(kShadowBetaInit == 3.0);
}

TEST_CASE("light initialization modes") {
    std::mt19937_64 rng(7);
    Tensor gt({4, 3});
    for (int j = 0; j < 4; ++j) {
        Vec3 l = Vec3{0.2 * j - 0.3, 0.1, 1.0}.normalized();
        gt.at(j, 0) = l.x;
        gt.at(j, 1) = l.y;
        gt.at(j, 2) = l.z;
    }
    Tensor noisy = init_light_directions(LightInitMode::GtPerturbed, 4, rng, &gt, 5.0);
    double mean_angle = 0;
    for (int j = 0; j < 4; ++j) {
        Vec3 a{noisy.at(j, 0), noisy.at(j, 1), noisy.at(j, 2)};
        Vec3 b{gt.at(j, 0), gt.at(j, 1), gt.at(j, 2)};
        CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-9));
        mean_angle += angle_deg(a, b);
    }
    CHECK(mean_angle / 4 < 15.0);  // sigma = 5 degrees
    CHECK(mean_angle > 0.0);

    Tensor hemi = init_light_directions(LightInitMode::UniformHemisphere, 16, rng);
    for (int j = 0; j < 16; ++j) {
        CHECK(hemi.at(j, 2) > 0.0);
        CHECK(Vec3{hemi.at(j, 0), hemi.at(j, 1), hemi.at(j, 2)}.norm() ==
              doctest::Approx(1.0).epsilon(1e-9));
    }

    // file mode round trip: "lx ly lz e" per line
    Tensor e({4, 1});
    for (int j = 0; j < 4; ++j) e[j] = 0.9 + 0.05 * j;
    write_light_init_file("/tmp/psir_lights.txt", gt, e);
    Tensor dirs = init_light_directions(LightInitMode::FromFile, 4, rng, nullptr, 0.0,
                                        "/tmp/psir_lights.txt");
    for (std::int64_t i = 0; i < gt.size(); ++i) CHECK(dirs[i] == doctest::Approx(gt[i]).epsilon(1e-9));
    std::remove("/tmp/psir_lights.txt");

    CHECK_THROWS_AS(init_light_directions(LightInitMode::GtPerturbed, 4, rng, nullptr),
                    std::invalid_argument);
}

TEST_CASE("lights graph keeps directions unit and intensities positive") {
    ParamStore store;
    LearnableParams lp;
    lp.light_count = 3;
    lp.channels = 1;
    lp.n_g = 4;
    Tensor dirs({3, 3});
    for (int j = 0; j < 3; ++j) {
        dirs.at(j, 0) = 0.5 * j;
        dirs.at(j, 1) = -0.2;
        dirs.at(j, 2) = 1.0;
    }
    lp.register_params(store, dirs);
    store.at("lights.log_e")[1] = -0.7;

    ad::Tape tape;
    LeafSet leaves = make_leaves(tape, store);
    LightGraph g = lights_graph(leaves);
    for (int j = 0; j < 3; ++j) {
        Vec3 l{g.unit.value().at(j, 0), g.unit.value().at(j, 1), g.unit.value().at(j, 2)};
        CHECK(l.norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(g.intensity.value()[1] == doctest::Approx(std::exp(-0.7)));
    for (std::int64_t i = 0; i < g.intensity.value().size(); ++i)
        CHECK(g.intensity.value()[i] > 0.0);

    // projection restores unit norm exactly after a parameter nudge
    store.at("lights.dir").at(0, 0) += 0.3;
    LearnableParams::project(store);
    Vec3 l0{store.at("lights.dir").at(0, 0), store.at("lights.dir").at(0, 1),
            store.at("lights.dir").at(0, 2)};
    CHECK(std::fabs(l0.norm() - 1.0) < 1e-12);
}
