#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace psir {

/// Every tunable of the engine. Parsed from a JSON config file; unknown keys
/// are rejected on load.
struct RunConfig {
    // sampling / bases / encoding
    int shadow_samples = 64;       // N_p
    int asg_bases = 12;            // N_G
    int encoding_octaves = 10;     // L

    // MLPs
    std::vector<int> depth_hidden{128, 128, 128, 128};
    std::vector<int> material_hidden{128, 128, 128, 128};
    double material_c_shift = 3.0;  // c_k = softplus(y_k - shift): small specular start
    double depth_scale = 10.0;      // DepthMLP output multiplier (depth units per unit output)

    // schedule / losses
    int stage_epochs[3] = {500, 1000, 500};
    double lambda = 0.01;
    double lambda_n = 0.02;
    double lambda_si = 0.01;
    double lr_max = 1e-3;
    double lr_min = 1e-4;
    int warmup_epochs = 0;      // linear lr ramp before the cosine decay
    double light_lr_scale = 1.0;  // learning-rate multiplier for the light parameters
    int light_freeze_epochs = 0;  // keep lights at their initialization this long
    int epochs_override = -1;  // >= 0 truncates the schedule (0 = return initialization)

    // shadow
    double alpha_init = 400.0;
    double beta_init = 3.0;
    bool shadow_frozen = false;  // ablation: freeze shadow maps after epoch 0

    // reflectance
    bool isotropic_tie = false;  // ablation: r^y = r^x
    int anneal_epochs = 500;     // active bases grow 1 -> N_G over this many epochs

    // lights
    std::string light_init = "gt_perturbed";  // gt_perturbed | hemisphere | file
    double light_noise_deg = 5.0;
    std::string light_init_file;

    // silhouette
    std::string silhouette_targets = "perpendicular";  // perpendicular | flat
    bool drop_silhouette_stage3 = false;

    // preprocessing
    bool percentile_filter = false;
    double percentile = 25.0;
    double gamma = 1.0;       // decode exponent applied to loaded images
    int resolution_cap = 0;   // 0 = off
    bool light_y_up = false;  // flip y of loaded light/normal ground truth (y-up datasets)

    std::uint64_t seed = 1;
    int checkpoint_every = 0;       // epochs between checkpoints; 0 = off
    std::string checkpoint_dir = ".";
    std::string resume_from;        // checkpoint path to resume
    double pitch = 1.0;

    int total_epochs() const {
        const int t = stage_epochs[0] + stage_epochs[1] + stage_epochs[2];
        return epochs_override >= 0 ? std::min(epochs_override, t) : t;
    }
};

RunConfig config_from_json(const std::string& path);
void config_to_json(const RunConfig& config, const std::string& path);
std::string config_to_json_string(const RunConfig& config);
RunConfig config_from_json_string(const std::string& text);

} // namespace psir
