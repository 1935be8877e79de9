#pragma once

#include "psir/autodiff.hpp"
#include "psir/config.hpp"
#include "psir/fields.hpp"
#include "psir/geometry.hpp"
#include "psir/observation.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace psir {

// ---- loss terms ----------------------------------------------------------------

/// l1 inverse-rendering error: mean |rendered - observed| over valid
/// (pixel, image, channel) entries. `weights` (optional, [P,F]) masks
/// entries out of the mean (percentile filter). Rejects an empty domain.
ad::Var loss_ir(const std::vector<ad::Var>& rendered, const std::vector<Tensor>& observed,
                const Tensor* weights = nullptr);

/// Forward-difference neighbor plan over the pixel set: d_u(m) =
/// m[right] - m[self], one-sided (backward difference) where the right
/// neighbor is missing, zero where both are.
struct SmoothnessPlan {
    std::shared_ptr<const std::vector<std::int64_t>> u_plus, u_minus;
    std::shared_ptr<const std::vector<std::int64_t>> v_plus, v_minus;
};
SmoothnessPlan make_smoothness_plan(const Tensor& mask, const PixelSet& pixels);

/// mean |d/du + d/dv| of a per-pixel map (any number of columns handled by
/// the caller, one call per column).
ad::Var smoothness_term(const ad::Var& map, const SmoothnessPlan& plan);

/// mean over silhouette pixels of (1 - cos(n_est, n_target)).
ad::Var loss_silhouette(const ad::Var& normals_matrix,
                        const std::shared_ptr<const std::vector<std::int64_t>>& sil_rows,
                        const Tensor& sil_targets);

// ---- solve ------------------------------------------------------------------------

struct HistoryRow {
    int epoch = 0;
    double total = 0, l_ir = 0, l_si = 0, l_rd = 0, l_w = 0, l_n = 0;
    double lr = 0;
};

struct SolveResult {
    Tensor normals;                   // [H,W,3], zero outside the mask
    Tensor depth;                     // [H,W], nearest-fill outside the mask
    Tensor lights;                    // [F,3] unit
    Tensor intensities;               // [F,C]
    std::vector<Tensor> shadow_maps;  // per image [H,W], 1 outside the mask
    Tensor rho_d;                     // [H,W,C]
    Tensor asg_weights;               // [H,W,N_G*C]
    std::vector<HistoryRow> history;
    ParamStore params;
    int silhouette_count = 0;
    bool silhouette_missing = false;  // flexible-strategy flag: no usable silhouette
};

/// Joint recovery of depth, normals, reflectance, shadows, and lights by
/// inverse rendering. Three stages per the schedule in `config`; Adam with
/// cosine-annealed learning rate; deterministic for a fixed seed.
SolveResult solve(const ObservationSet& obs, const RunConfig& config);

/// Schedule helpers (exposed for tests).
double cosine_lr(int epoch, int total, double lr_max, double lr_min);
int stage_of(int epoch, const RunConfig& config);       // 1, 2 or 3
int active_bases(int epoch, const RunConfig& config);   // annealing count

// ---- checkpoints --------------------------------------------------------------------

struct Checkpoint {
    int epoch = 0;
    std::string rng_state;
    ParamStore params;
    std::vector<HistoryRow> history;
    std::vector<Tensor> frozen_shadows;  // present only for shadow_frozen runs
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace psir
