#include "psir/dataset.hpp"

#include "psir/image_io.hpp"
#include "psir/vec3.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace psir {

namespace {

std::vector<std::vector<double>> read_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream is(line);
        std::vector<double> row;
        double v;
        while (is >> v) row.push_back(v);
        if (!row.empty()) rows.push_back(std::move(row));
    }
    return rows;
}

Tensor to_hwc(Tensor img) {
    if (img.rank() == 2) return img.reshaped({img.dim(0), img.dim(1), 1});
    return img;
}

} // namespace

ObservationSet load_dataset(const std::string& dir, const RunConfig& config) {
    const fs::path root(dir);
    if (!fs::exists(root / "filenames.txt"))
        throw std::runtime_error("dataset '" + dir + "': missing filenames.txt");
    if (!fs::exists(root / "mask.png"))
        throw std::runtime_error("dataset '" + dir + "': missing mask.png");

    ObservationSet obs;
    {
        Tensor m = read_png((root / "mask.png").string());
        obs.height = static_cast<int>(m.dim(0));
        obs.width = static_cast<int>(m.dim(1));
        obs.mask = Tensor({obs.height, obs.width});
        bool any = false;
        for (std::int64_t i = 0; i < obs.mask.size(); ++i) {
            obs.mask[i] = m[i * m.dim(2)] > 0.5 ? 1.0 : 0.0;
            any = any || obs.mask[i] != 0.0;
        }
        if (!any) throw std::runtime_error("dataset '" + dir + "': mask is empty");
    }

    std::ifstream names((root / "filenames.txt").string());
    std::string name;
    while (std::getline(names, name)) {
        while (!name.empty() && (name.back() == '\r' || name.back() == ' ')) name.pop_back();
        if (name.empty()) continue;
        const fs::path file = root / name;
        Tensor img;
        if (file.extension() == ".pfm") img = to_hwc(read_pfm(file.string()));
        else img = read_png(file.string());
        if (img.dim(0) != obs.height || img.dim(1) != obs.width)
            throw std::runtime_error("dataset '" + dir + "': image '" + name + "' is " +
                                     img.shape_str() + " but the mask is " +
                                     obs.mask.shape_str());
        if (config.gamma != 1.0)
            for (std::int64_t i = 0; i < img.size(); ++i)
                img[i] = std::pow(std::max(img[i], 0.0), config.gamma);
        if (obs.images.empty()) obs.channels = static_cast<int>(img.dim(2));
        else if (img.dim(2) != obs.channels)
            throw std::runtime_error("dataset '" + dir + "': image '" + name +
                                     "' channel count differs from the stack");
        obs.images.push_back(std::move(img));
    }
    if (obs.images.empty()) throw std::runtime_error("dataset '" + dir + "': no images listed");

    const int f = obs.light_count();
    if (fs::exists(root / "light_directions.txt")) {
        auto rows = read_rows((root / "light_directions.txt").string());
        if (static_cast<int>(rows.size()) != f)
            throw std::runtime_error("dataset '" + dir + "': light_directions.txt has " +
                                     std::to_string(rows.size()) + " rows for " +
                                     std::to_string(f) + " images");
        Tensor dirs({f, 3});
        for (int j = 0; j < f; ++j) {
            if (rows[static_cast<std::size_t>(j)].size() != 3)
                throw std::runtime_error("dataset '" + dir +
                                         "': light_directions.txt row must have 3 entries");
            Vec3 l{rows[static_cast<std::size_t>(j)][0], rows[static_cast<std::size_t>(j)][1],
                   rows[static_cast<std::size_t>(j)][2]};
            if (config.light_y_up) l.y = -l.y;
            l = l.normalized();
            dirs.at(j, 0) = l.x;
            dirs.at(j, 1) = l.y;
            dirs.at(j, 2) = l.z;
        }
        obs.gt_lights = dirs;
    }
    if (fs::exists(root / "light_intensities.txt")) {
        auto rows = read_rows((root / "light_intensities.txt").string());
        if (static_cast<int>(rows.size()) != f)
            throw std::runtime_error("dataset '" + dir + "': light_intensities.txt has " +
                                     std::to_string(rows.size()) + " rows for " +
                                     std::to_string(f) + " images");
        Tensor ints({f, obs.channels});
        for (int j = 0; j < f; ++j) {
            const auto& row = rows[static_cast<std::size_t>(j)];
            if (row.size() != 1 && row.size() != 3)
                throw std::runtime_error("dataset '" + dir +
                                         "': light_intensities.txt rows must have 1 or 3 entries");
            for (int c = 0; c < obs.channels; ++c) {
                double v;
                if (row.size() == 1) v = row[0];
                else if (obs.channels == 3) v = row[static_cast<std::size_t>(c)];
                else v = (row[0] + row[1] + row[2]) / 3.0;
                ints.at(j, c) = v;
            }
        }
        obs.gt_intensities = ints;
    }
    if (fs::exists(root / "normal_gt.pfm")) {
        Tensor n = read_pfm((root / "normal_gt.pfm").string());
        if (n.rank() != 3 || n.dim(0) != obs.height || n.dim(1) != obs.width)
            throw std::runtime_error("dataset '" + dir + "': normal_gt.pfm is " + n.shape_str());
        if (config.light_y_up)
            for (std::int64_t i = 0; i < n.size() / 3; ++i) n[3 * i + 1] = -n[3 * i + 1];
        obs.gt_normals = n;
    }
    if (fs::exists(root / "depth_gt.pfm")) obs.gt_depth = read_pfm((root / "depth_gt.pfm").string());
    for (int j = 0;; ++j) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "shadow_gt_%02d.png", j);
        if (!fs::exists(root / buf)) break;
        Tensor s = read_png((root / buf).string());
        Tensor bin({obs.height, obs.width});
        for (std::int64_t i = 0; i < bin.size(); ++i) bin[i] = s[i * s.dim(2)] > 0.5 ? 1.0 : 0.0;
        obs.gt_shadows.push_back(std::move(bin));
    }

    if (config.resolution_cap > 0) downsample_to_cap(obs, config.resolution_cap);
    if (config.percentile_filter) percentile_filter(obs, config.percentile);
    return obs;
}

void save_dataset(const std::string& dir, const GroundTruth& gt) {
    fs::create_directories(dir);
    const fs::path root(dir);
    std::ofstream names((root / "filenames.txt").string());
    for (std::size_t j = 0; j < gt.observations.images.size(); ++j) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "img_%02zu.pfm", j);
        names << buf << '\n';
        const Tensor& img = gt.observations.images[j];
        write_pfm((root / buf).string(),
                  img.dim(2) == 1 ? img.reshaped({img.dim(0), img.dim(1)}) : img);
    }
    write_png((root / "mask.png").string(), gt.observations.mask, 8);
    if (gt.observations.gt_lights) {
        std::ofstream ld((root / "light_directions.txt").string());
        ld.precision(12);
        const Tensor& dirs = *gt.observations.gt_lights;
        for (std::int64_t j = 0; j < dirs.dim(0); ++j)
            ld << dirs.at(j, 0) << ' ' << dirs.at(j, 1) << ' ' << dirs.at(j, 2) << '\n';
    }
    if (gt.observations.gt_intensities) {
        std::ofstream li((root / "light_intensities.txt").string());
        li.precision(12);
        const Tensor& ints = *gt.observations.gt_intensities;
        for (std::int64_t j = 0; j < ints.dim(0); ++j) {
            for (std::int64_t c = 0; c < ints.dim(1); ++c) li << (c ? " " : "") << ints.at(j, c);
            li << '\n';
        }
    }
    write_pfm((root / "normal_gt.pfm").string(), gt.normals);
    write_pfm((root / "depth_gt.pfm").string(), gt.depth);
    for (std::size_t j = 0; j < gt.hard_shadows.size(); ++j) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "shadow_gt_%02zu.png", j);
        write_png((root / buf).string(), gt.hard_shadows[j], 8);
    }
}

void percentile_filter(ObservationSet& obs, double p) {
    if (p <= 0.0) return;
    if (p >= 100.0) throw std::invalid_argument("percentile_filter: p must be in (0,100)");
    obs.loss_masks.clear();
    for (const Tensor& img : obs.images) {
        std::vector<double> values;
        for (std::int64_t i = 0; i < obs.mask.size(); ++i) {
            if (obs.mask[i] == 0.0) continue;
            double acc = 0;
            for (int c = 0; c < obs.channels; ++c) acc += img[i * obs.channels + c];
            values.push_back(acc / obs.channels);
        }
        std::sort(values.begin(), values.end());
        // nearest-rank percentile
        const std::size_t rank = static_cast<std::size_t>(
            std::ceil(p / 100.0 * static_cast<double>(values.size())));
        const double threshold = values[std::max<std::size_t>(rank, 1) - 1];
        Tensor keep({obs.height, obs.width});
        for (std::int64_t i = 0; i < obs.mask.size(); ++i) {
            if (obs.mask[i] == 0.0) {
                keep[i] = 0.0;
                continue;
            }
            double acc = 0;
            for (int c = 0; c < obs.channels; ++c) acc += img[i * obs.channels + c];
            keep[i] = acc / obs.channels < threshold ? 0.0 : 1.0;
        }
        obs.loss_masks.push_back(std::move(keep));
    }
}

void downsample_to_cap(ObservationSet& obs, int cap) {
    const int largest = std::max(obs.width, obs.height);
    if (cap <= 0 || largest <= cap) return;
    const int k = (largest + cap - 1) / cap;
    const int nw = obs.width / k, nh = obs.height / k;
    if (nw == 0 || nh == 0) throw std::invalid_argument("downsample_to_cap: cap too small");

    auto box = [&](const Tensor& src, int channels) {
        Tensor dst(channels == 1 ? std::vector<std::int64_t>{nh, nw}
                                 : std::vector<std::int64_t>{nh, nw, channels});
        for (int y = 0; y < nh; ++y)
            for (int x = 0; x < nw; ++x)
                for (int c = 0; c < channels; ++c) {
                    double acc = 0;
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx)
                            acc += src[((static_cast<std::int64_t>(y) * k + dy) * obs.width +
                                        (x * k + dx)) *
                                           channels +
                                       c];
                    dst[(static_cast<std::int64_t>(y) * nw + x) * channels + c] = acc / (k * k);
                }
        return dst;
    };

    for (Tensor& img : obs.images) img = box(img, obs.channels);
    Tensor mask = box(obs.mask, 1);
    for (std::int64_t i = 0; i < mask.size(); ++i) mask[i] = mask[i] > 0.5 ? 1.0 : 0.0;
    obs.mask = mask;
    if (obs.gt_normals) {
        Tensor n = box(*obs.gt_normals, 3);
        for (std::int64_t i = 0; i < n.size() / 3; ++i) {
            Vec3 v{n[3 * i], n[3 * i + 1], n[3 * i + 2]};
            v = v.normalized();
            n[3 * i] = v.x;
            n[3 * i + 1] = v.y;
            n[3 * i + 2] = v.z;
        }
        obs.gt_normals = n;
    }
    if (obs.gt_depth) obs.gt_depth = box(*obs.gt_depth, 1);
    for (Tensor& s : obs.gt_shadows) {
        Tensor d = box(s, 1);
        for (std::int64_t i = 0; i < d.size(); ++i) d[i] = d[i] > 0.5 ? 1.0 : 0.0;
        s = d;
    }
    obs.loss_masks.clear();
    obs.width = nw;
    obs.height = nh;
}

// ---- run configuration --------------------------------------------------------------

namespace {

nlohmann::json config_json(const RunConfig& c) {
    nlohmann::json j;
    j["shadow_samples"] = c.shadow_samples;
    j["asg_bases"] = c.asg_bases;
    j["encoding_octaves"] = c.encoding_octaves;
    j["depth_hidden"] = c.depth_hidden;
    j["material_hidden"] = c.material_hidden;
    j["material_c_shift"] = c.material_c_shift;
    j["depth_scale"] = c.depth_scale;
    j["stage_epochs"] = {c.stage_epochs[0], c.stage_epochs[1], c.stage_epochs[2]};
    j["lambda"] = c.lambda;
    j["lambda_n"] = c.lambda_n;
    j["lambda_si"] = c.lambda_si;
    j["lr_max"] = c.lr_max;
    j["lr_min"] = c.lr_min;
    j["warmup_epochs"] = c.warmup_epochs;
    j["light_lr_scale"] = c.light_lr_scale;
    j["light_freeze_epochs"] = c.light_freeze_epochs;
    j["epochs_override"] = c.epochs_override;
    j["alpha_init"] = c.alpha_init;
    j["beta_init"] = c.beta_init;
    j["shadow_frozen"] = c.shadow_frozen;
    j["isotropic_tie"] = c.isotropic_tie;
    j["anneal_epochs"] = c.anneal_epochs;
    j["light_init"] = c.light_init;
    j["light_noise_deg"] = c.light_noise_deg;
    j["light_init_file"] = c.light_init_file;
    j["silhouette_targets"] = c.silhouette_targets;
    j["drop_silhouette_stage3"] = c.drop_silhouette_stage3;
    j["percentile_filter"] = c.percentile_filter;
    j["percentile"] = c.percentile;
    j["gamma"] = c.gamma;
    j["resolution_cap"] = c.resolution_cap;
    j["light_y_up"] = c.light_y_up;
    j["seed"] = c.seed;
    j["checkpoint_every"] = c.checkpoint_every;
    j["checkpoint_dir"] = c.checkpoint_dir;
    j["resume_from"] = c.resume_from;
    j["pitch"] = c.pitch;
    return j;
}

RunConfig config_from(const nlohmann::json& j) {
    RunConfig c;
    for (auto& [key, value] : j.items()) {
        if (key == "shadow_samples") c.shadow_samples = value.get<int>();
        else if (key == "asg_bases") c.asg_bases = value.get<int>();
        else if (key == "encoding_octaves") c.encoding_octaves = value.get<int>();
        else if (key == "depth_hidden") c.depth_hidden = value.get<std::vector<int>>();
        else if (key == "material_hidden") c.material_hidden = value.get<std::vector<int>>();
        else if (key == "material_c_shift") c.material_c_shift = value.get<double>();
        else if (key == "depth_scale") c.depth_scale = value.get<double>();
        else if (key == "stage_epochs") {
            auto v = value.get<std::vector<int>>();
            if (v.size() != 3)
                throw std::invalid_argument("config: stage_epochs must have 3 entries");
            c.stage_epochs[0] = v[0];
            c.stage_epochs[1] = v[1];
            c.stage_epochs[2] = v[2];
        } else if (key == "lambda") c.lambda = value.get<double>();
        else if (key == "lambda_n") c.lambda_n = value.get<double>();
        else if (key == "lambda_si") c.lambda_si = value.get<double>();
        else if (key == "lr_max") c.lr_max = value.get<double>();
        else if (key == "lr_min") c.lr_min = value.get<double>();
        else if (key == "warmup_epochs") c.warmup_epochs = value.get<int>();
        else if (key == "light_lr_scale") c.light_lr_scale = value.get<double>();
        else if (key == "light_freeze_epochs") c.light_freeze_epochs = value.get<int>();
        else if (key == "epochs_override") c.epochs_override = value.get<int>();
        else if (key == "alpha_init") c.alpha_init = value.get<double>();
        else if (key == "beta_init") c.beta_init = value.get<double>();
        else if (key == "shadow_frozen") c.shadow_frozen = value.get<bool>();
        else if (key == "isotropic_tie") c.isotropic_tie = value.get<bool>();
        else if (key == "anneal_epochs") c.anneal_epochs = value.get<int>();
        else if (key == "light_init") c.light_init = value.get<std::string>();
        else if (key == "light_noise_deg") c.light_noise_deg = value.get<double>();
        else if (key == "light_init_file") c.light_init_file = value.get<std::string>();
        else if (key == "silhouette_targets") c.silhouette_targets = value.get<std::string>();
        else if (key == "drop_silhouette_stage3") c.drop_silhouette_stage3 = value.get<bool>();
        else if (key == "percentile_filter") c.percentile_filter = value.get<bool>();
        else if (key == "percentile") c.percentile = value.get<double>();
        else if (key == "gamma") c.gamma = value.get<double>();
        else if (key == "resolution_cap") c.resolution_cap = value.get<int>();
        else if (key == "light_y_up") c.light_y_up = value.get<bool>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "checkpoint_every") c.checkpoint_every = value.get<int>();
        else if (key == "checkpoint_dir") c.checkpoint_dir = value.get<std::string>();
        else if (key == "resume_from") c.resume_from = value.get<std::string>();
        else if (key == "pitch") c.pitch = value.get<double>();
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    return c;
}

} // namespace

RunConfig config_from_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    nlohmann::json j;
    in >> j;
    return config_from(j);
}

void config_to_json(const RunConfig& config, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config '" + path + "'");
    out << config_json(config).dump(2) << '\n';
}

std::string config_to_json_string(const RunConfig& config) { return config_json(config).dump(2); }

RunConfig config_from_json_string(const std::string& text) {
    return config_from(nlohmann::json::parse(text));
}

} // namespace psir
