// End-to-end exercise of the command-line surface: render -> solve -> eval
// -> brdf-sphere on a small synthetic dataset.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "psir/config.hpp"
#include "psir/dataset.hpp"
#include "psir/image_io.hpp"
#include "psir/synthetic.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace psir;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(PSIR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

struct Workspace {
    fs::path root{"/tmp/psir_cli_test"};
    Workspace() {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Workspace() { fs::remove_all(root); }
    std::string path(const char* p) const { return (root / p).string(); }
};

} // namespace

TEST_CASE("render / solve / eval / brdf-sphere round trip") {
    Workspace ws;

    // small scene file
    AnalyticScene scene = default_desk_scene();
    scene.resolution = 28;
    default_lights(scene, 6, 45.0, 2, 3);
    scene_to_json(scene, ws.path("scene.json"));

    REQUIRE(run("render " + ws.path("scene.json") + " " + ws.path("data")) == 0);
    CHECK(fs::exists(ws.path("data/filenames.txt")));
    CHECK(fs::exists(ws.path("data/mask.png")));
    CHECK(fs::exists(ws.path("data/normal_gt.pfm")));
    CHECK(fs::exists(ws.path("data/shadow_gt_07.png")));

    // fast config
    RunConfig config;
    config.encoding_octaves = 4;
    config.depth_hidden = {24, 24};
    config.material_hidden = {24, 24};
    config.asg_bases = 4;
    config.shadow_samples = 12;
    config.stage_epochs[0] = 30;
    config.stage_epochs[1] = 10;
    config.stage_epochs[2] = 10;
    config.anneal_epochs = 30;
    config.lr_max = 5e-3;
    config_to_json(config, ws.path("config.json"));

    REQUIRE(run("solve " + ws.path("data") + " --config " + ws.path("config.json") + " --out " +
                ws.path("out")) == 0);
    for (const char* f : {"normal_est.png", "depth_est.pfm", "shadow_00.png", "lights_est.txt",
                          "intensities_est.txt", "loss_history.csv", "checkpoint_final.bin",
                          "config_used.json"})
        CHECK(fs::exists(ws.path(("out/" + std::string(f)).c_str())));

    // loss history has one row per epoch plus a header
    std::ifstream csv(ws.path("out/loss_history.csv"));
    std::string line;
    int rows = -1;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 50);
    CHECK(line.find(',') != std::string::npos);

    REQUIRE(run("eval " + ws.path("out") + " " + ws.path("data")) == 0);
    CHECK(fs::exists(ws.path("out/report.txt")));
    CHECK(fs::exists(ws.path("out/report_row.csv")));
    CHECK(fs::exists(ws.path("out/error_map.png")));
    CHECK(fs::exists(ws.path("out/lights.png")));
    std::ifstream report(ws.path("out/report.txt"));
    std::stringstream text;
    text << report.rdbuf();
    CHECK(text.str().find("normal_mae_deg:") != std::string::npos);
    CHECK(text.str().find("light_dir_mae_deg:") != std::string::npos);

    REQUIRE(run("brdf-sphere " + ws.path("out") + " --pixel 14 --pixel-y 14 --png " +
                ws.path("brdf.png") + " --res 33") == 0);
    Tensor sphere = read_png(ws.path("brdf.png"));
    CHECK(sphere.dim(0) == 33);

    // zero-epoch solve writes the initialization verbatim
    REQUIRE(run("solve " + ws.path("data") + " --config " + ws.path("config.json") +
                " --out " + ws.path("out0") + " --epochs 0") == 0);
    std::ifstream csv0(ws.path("out0/loss_history.csv"));
    int rows0 = -1;
    while (std::getline(csv0, line))
        if (!line.empty()) ++rows0;
    CHECK(rows0 == 0);
    CHECK(fs::exists(ws.path("out0/normal_est.png")));
}

TEST_CASE("eval without ground-truth normals reports only available metrics") {
    Workspace ws;
    AnalyticScene scene = default_desk_scene();
    scene.resolution = 20;
    default_lights(scene, 4, 45.0, 0, 3);
    scene_to_json(scene, ws.path("scene.json"));
    REQUIRE(run("render " + ws.path("scene.json") + " " + ws.path("data")) == 0);
    fs::remove(ws.path("data/normal_gt.pfm"));

    RunConfig config;
    config.encoding_octaves = 3;
    config.depth_hidden = {16};
    config.material_hidden = {16};
    config.asg_bases = 2;
    config.shadow_samples = 8;
    config.stage_epochs[0] = 4;
    config.stage_epochs[1] = 2;
    config.stage_epochs[2] = 2;
    config_to_json(config, ws.path("config.json"));
    REQUIRE(run("solve " + ws.path("data") + " --config " + ws.path("config.json") + " --out " +
                ws.path("out")) == 0);
    REQUIRE(run("eval " + ws.path("out") + " " + ws.path("data")) == 0);
    std::ifstream report(ws.path("out/report.txt"));
    std::stringstream text;
    text << report.rdbuf();
    CHECK(text.str().find("normal_mae_deg:") == std::string::npos);
    CHECK(text.str().find("light_dir_mae_deg:") != std::string::npos);
}

TEST_CASE("cli failures exit nonzero") {
    Workspace ws;
    CHECK(run("render /no/such/scene.json " + ws.path("x")) != 0);
    CHECK(run("solve /no/such/dir --out " + ws.path("y")) != 0);
    CHECK(run("eval /no/such/out /no/such/data") != 0);
}
