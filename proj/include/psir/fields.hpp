#pragma once

#include "psir/autodiff.hpp"
#include "psir/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace psir {

/// NeRF-style sinusoidal encoding of image-plane coordinates. Each scalar
/// coordinate expands to (sin, cos) pairs at frequencies 2^0*pi .. 2^(L-1)*pi,
/// so a 2-vector encodes to length 4L.
struct PositionalEncoder {
    int octaves = 10;  // L

    int code_length() const { return 4 * octaves; }

    /// p = (u, v), both in [-1, 1].
    std::vector<double> encode(double u, double v) const;

    /// Codes for a pixel list, coordinates mapped to [-1,1] over the image.
    /// Returns [P, 4L].
    Tensor encode_pixels(const std::vector<int>& xs, const std::vector<int>& ys, int width,
                         int height) const;
};

/// Named parameter tensors plus their Adam state. Order is fixed at
/// registration time and defines the optimizer state layout.
class ParamStore {
public:
    void add(std::string name, Tensor value);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;

    std::size_t count() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    Tensor& value(std::size_t i) { return values_[i]; }
    const Tensor& value(std::size_t i) const { return values_[i]; }

    ad::AdamState& adam() { return adam_; }
    const ad::AdamState& adam() const { return adam_; }

private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    ad::AdamState adam_;
};

/// Per-epoch leaves over a ParamStore. Values are copied onto the tape,
/// updated in place by Adam, and written back by `commit`.
struct LeafSet {
    std::vector<ad::Var> vars;
    const ParamStore* store = nullptr;

    ad::Var operator[](const std::string& name) const;
};

LeafSet make_leaves(ad::Tape& tape, const ParamStore& store);
/// Adam update on all leaves followed by write-back into the store.
/// `lr_scale`, when nonempty, gives a per-parameter learning-rate multiplier.
void optimize_step(LeafSet& leaves, ParamStore& store, double lr,
                   const std::vector<double>& lr_scale = {},
                   std::pair<double, double> betas = {0.9, 0.999}, double eps = 1e-8);

/// Fully connected net with SiLU hidden activations and an affine output
/// layer. Weights live in a ParamStore under `<prefix>.w<i>` / `<prefix>.b<i>`.
struct Mlp {
    std::string prefix;
    int input = 0;
    std::vector<int> hidden;
    int output = 1;

    void register_params(ParamStore& store, std::mt19937_64& rng) const;
    /// codes: [P, input] -> [P, output]
    ad::Var forward(const LeafSet& leaves, const ad::Var& codes) const;
};

// ---- learnable engine parameters -------------------------------------------

/// Log-uniform ASG width initialization over [10, 300]:
/// r_k = 10^((log 300 - log 10)(k-1)/(N_G-1) + log 10).
Tensor initial_asg_widths(int n_g);

constexpr double kShadowAlphaInit = 400.0;
constexpr double kShadowBetaInit = 3.0;

enum class LightInitMode { GtPerturbed, UniformHemisphere, FromFile };

/// Directions for f lights. GtPerturbed rotates each ground-truth direction
/// by a Gaussian angle (sigma_deg) about a random orthogonal axis.
Tensor init_light_directions(LightInitMode mode, int count, std::mt19937_64& rng,
                             const Tensor* gt_dirs = nullptr, double sigma_deg = 5.0,
                             const std::string& file = {});

/// Reads "lx ly lz e" per line.
void read_light_init_file(const std::string& path, Tensor& dirs, Tensor& intensities);
void write_light_init_file(const std::string& path, const Tensor& dirs,
                           const Tensor& intensities);

/// Registers lights / ASG widths / shadow sharpness in the store.
struct LearnableParams {
    int light_count = 0;
    int channels = 1;
    int n_g = 12;

    void register_params(ParamStore& store, const Tensor& light_dirs) const;

    /// Renormalizes light directions and clamps widths to [1, 1000] in place.
    /// Called after every optimizer step.
    static void project(ParamStore& store);

    /// Widths in linear space from the log-space parameter
    /// ("asg.log_rx" / "asg.log_ry").
    static Tensor widths(const ParamStore& store, const char* which);
};

struct LightGraph {
    ad::Var unit;       // [F,3] row-normalized directions
    ad::Var intensity;  // [F,C], strictly positive (exponential parameterization)
};
LightGraph lights_graph(const LeafSet& leaves);

/// Row-normalize a rank-2 [n,3] Var.
ad::Var normalize_rows(const ad::Var& m);

} // namespace psir
