#include "psir/fields.hpp"

#include "psir/vec3.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace psir {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::vector<double> PositionalEncoder::encode(double u, double v) const {
    std::vector<double> code;
    code.reserve(static_cast<std::size_t>(code_length()));
    for (double p : {u, v}) {
        double freq = kPi;
        for (int k = 0; k < octaves; ++k) {
            code.push_back(std::sin(freq * p));
            code.push_back(std::cos(freq * p));
            freq *= 2.0;
        }
    }
    return code;
}

Tensor PositionalEncoder::encode_pixels(const std::vector<int>& xs, const std::vector<int>& ys,
                                        int width, int height) const {
    const std::int64_t n = static_cast<std::int64_t>(xs.size());
    Tensor out({n, code_length()});
    for (std::int64_t i = 0; i < n; ++i) {
        const double u = width > 1 ? 2.0 * xs[static_cast<std::size_t>(i)] / (width - 1) - 1.0 : 0.0;
        const double v = height > 1 ? 2.0 * ys[static_cast<std::size_t>(i)] / (height - 1) - 1.0 : 0.0;
        auto code = encode(u, v);
        for (int j = 0; j < code_length(); ++j) out.at(i, j) = code[static_cast<std::size_t>(j)];
    }
    return out;
}

// ---- ParamStore -------------------------------------------------------------

void ParamStore::add(std::string name, Tensor value) {
    if (has(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
}

Tensor& ParamStore::at(const std::string& name) {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return values_[i];
    throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
}

const Tensor& ParamStore::at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
}

bool ParamStore::has(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

ad::Var LeafSet::operator[](const std::string& name) const {
    const auto& names = store->names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return vars[i];
    throw std::invalid_argument("LeafSet: unknown parameter '" + name + "'");
}

LeafSet make_leaves(ad::Tape& tape, const ParamStore& store) {
    LeafSet set;
    set.store = &store;
    set.vars.reserve(store.count());
    for (std::size_t i = 0; i < store.count(); ++i)
        set.vars.push_back(tape.leaf(store.value(i), store.names()[i]));
    return set;
}

void optimize_step(LeafSet& leaves, ParamStore& store, double lr,
                   const std::vector<double>& lr_scale, std::pair<double, double> betas,
                   double eps) {
    ad::adam_step_scaled(leaves.vars, store.adam(), lr, lr_scale, betas, eps);
    for (std::size_t i = 0; i < store.count(); ++i) store.value(i) = leaves.vars[i].value();
}

// ---- Mlp ---------------------------------------------------------------------

void Mlp::register_params(ParamStore& store, std::mt19937_64& rng) const {
    std::vector<int> dims;
    dims.push_back(input);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(output);
    for (std::size_t layer = 0; layer + 1 < dims.size(); ++layer) {
        const int fan_in = dims[layer], fan_out = dims[layer + 1];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> uni(-bound, bound);
        Tensor w({fan_in, fan_out});
        for (std::int64_t i = 0; i < w.size(); ++i) w[i] = uni(rng);
        store.add(prefix + ".w" + std::to_string(layer), std::move(w));
        store.add(prefix + ".b" + std::to_string(layer), Tensor::zeros({fan_out}));
    }
}

ad::Var Mlp::forward(const LeafSet& leaves, const ad::Var& codes) const {
    if (codes.value().rank() != 2 || codes.value().dim(1) != input)
        throw std::invalid_argument("Mlp::forward: code length " +
                                    Tensor::shape_str(codes.value().shape()) +
                                    " does not match input width " + std::to_string(input));
    ad::Var h = codes;
    const std::size_t layers = hidden.size() + 1;
    for (std::size_t layer = 0; layer < layers; ++layer) {
        ad::Var w = leaves[prefix + ".w" + std::to_string(layer)];
        ad::Var b = leaves[prefix + ".b" + std::to_string(layer)];
        h = ad::add(ad::matmul(h, w), b);
        if (layer + 1 < layers) h = ad::mul(h, ad::sigmoid(h));  // SiLU
    }
    return h;
}

// ---- learnable engine parameters ----------------------------------------------

Tensor initial_asg_widths(int n_g) {
    Tensor r({n_g});
    const double lo = std::log10(10.0), hi = std::log10(300.0);
    for (int k = 0; k < n_g; ++k) {
        const double t = n_g > 1 ? static_cast<double>(k) / (n_g - 1) : 0.0;
        r[k] = std::pow(10.0, lo + (hi - lo) * t);
    }
    return r;
}

namespace {

Vec3 row3(const Tensor& t, std::int64_t r) { return {t.at(r, 0), t.at(r, 1), t.at(r, 2)}; }

Vec3 perturb_direction(const Vec3& l, double sigma_deg, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, sigma_deg * kPi / 180.0);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    // random axis orthogonal to l
    Vec3 r{uni(rng), uni(rng), uni(rng)};
    Vec3 axis = (r - l * r.dot(l));
    while (axis.norm() < 1e-6) {
        r = {uni(rng), uni(rng), uni(rng)};
        axis = (r - l * r.dot(l));
    }
    axis = axis.normalized();
    const double theta = gauss(rng);
    // Rodrigues rotation about axis
    const double c = std::cos(theta), s = std::sin(theta);
    return l * c + axis.cross(l) * s + axis * (axis.dot(l) * (1.0 - c));
}

} // namespace

Tensor init_light_directions(LightInitMode mode, int count, std::mt19937_64& rng,
                             const Tensor* gt_dirs, double sigma_deg, const std::string& file) {
    Tensor dirs({count, 3});
    switch (mode) {
    case LightInitMode::GtPerturbed: {
        if (!gt_dirs || gt_dirs->dim(0) != count)
            throw std::invalid_argument("light init: ground-truth directions unavailable");
        for (int j = 0; j < count; ++j) {
            Vec3 l = perturb_direction(row3(*gt_dirs, j).normalized(), sigma_deg, rng);
            dirs.at(j, 0) = l.x;
            dirs.at(j, 1) = l.y;
            dirs.at(j, 2) = l.z;
        }
        break;
    }
    case LightInitMode::UniformHemisphere: {
        std::uniform_real_distribution<double> uz(0.35, 0.95), uphi(0.0, 2.0 * kPi);
        for (int j = 0; j < count; ++j) {
            const double z = uz(rng), phi = uphi(rng), r = std::sqrt(1.0 - z * z);
            dirs.at(j, 0) = r * std::cos(phi);
            dirs.at(j, 1) = r * std::sin(phi);
            dirs.at(j, 2) = z;
        }
        break;
    }
    case LightInitMode::FromFile: {
        Tensor e;
        read_light_init_file(file, dirs, e);
        if (dirs.dim(0) != count)
            throw std::invalid_argument("light init file '" + file + "' has " +
                                        std::to_string(dirs.dim(0)) + " lights, expected " +
                                        std::to_string(count));
        break;
    }
    }
    return dirs;
}

void read_light_init_file(const std::string& path, Tensor& dirs, Tensor& intensities) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open light file '" + path + "'");
    std::vector<double> d, e;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream is(line);
        double lx, ly, lz, ei;
        if (!(is >> lx >> ly >> lz >> ei)) {
            if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
            throw std::runtime_error("light file '" + path + "': bad line '" + line + "'");
        }
        Vec3 l = Vec3{lx, ly, lz}.normalized();
        d.insert(d.end(), {l.x, l.y, l.z});
        e.push_back(ei);
    }
    const std::int64_t f = static_cast<std::int64_t>(e.size());
    dirs = Tensor::from(std::move(d), {f, 3});
    intensities = Tensor::from(std::move(e), {f, 1});
}

void write_light_init_file(const std::string& path, const Tensor& dirs,
                           const Tensor& intensities) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write light file '" + path + "'");
    out.precision(12);
    for (std::int64_t j = 0; j < dirs.dim(0); ++j) {
        double e = intensities.size() > j ? intensities[j * intensities.dim(1)] : 1.0;
        out << dirs.at(j, 0) << ' ' << dirs.at(j, 1) << ' ' << dirs.at(j, 2) << ' ' << e << '\n';
    }
}

void LearnableParams::register_params(ParamStore& store, const Tensor& light_dirs) const {
    store.add("lights.dir", light_dirs);
    store.add("lights.log_e", Tensor::zeros({light_count, channels}));  // e = exp(0) = 1
    // widths live in log space: they span three decades and the optimizer
    // must be able to traverse them within the schedule
    Tensor log_r = initial_asg_widths(n_g);
    for (std::int64_t k = 0; k < log_r.size(); ++k) log_r[k] = std::log(log_r[k]);
    store.add("asg.log_rx", log_r);
    store.add("asg.log_ry", log_r);
    store.add("shadow.alpha", Tensor::scalar(kShadowAlphaInit));
    store.add("shadow.beta", Tensor::scalar(kShadowBetaInit));
}

void LearnableParams::project(ParamStore& store) {
    Tensor& dirs = store.at("lights.dir");
    for (std::int64_t j = 0; j < dirs.dim(0); ++j) {
        Vec3 l = row3(dirs, j).normalized();
        dirs.at(j, 0) = l.x;
        dirs.at(j, 1) = l.y;
        dirs.at(j, 2) = l.z;
    }
    for (const char* name : {"asg.log_rx", "asg.log_ry"}) {
        Tensor& r = store.at(name);
        for (std::int64_t k = 0; k < r.size(); ++k)
            r[k] = std::clamp(r[k], 0.0, std::log(1000.0));  // r in [1, 1000]
    }
}

Tensor LearnableParams::widths(const ParamStore& store, const char* which) {
    Tensor r = store.at(which);
    for (std::int64_t k = 0; k < r.size(); ++k) r[k] = std::exp(r[k]);
    return r;
}

ad::Var normalize_rows(const ad::Var& m) {
    const std::int64_t cols = m.value().dim(1);
    ad::Var ones = ad::Var::constant(Tensor::full({cols, 1}, 1.0));
    ad::Var len = ad::sqrt(ad::matmul(ad::mul(m, m), ones));  // [n,1]
    return ad::div(m, len);
}

LightGraph lights_graph(const LeafSet& leaves) {
    LightGraph g;
    g.unit = normalize_rows(leaves["lights.dir"]);
    g.intensity = ad::exp(leaves["lights.log_e"]);
    return g;
}

} // namespace psir
