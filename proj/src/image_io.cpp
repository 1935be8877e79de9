#include "psir/image_io.hpp"

#include "psir/vec3.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

namespace psir {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::runtime_error("'" + path + "': " + what);
}

} // namespace

Tensor read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail(path, "cannot open");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) fail(path, "libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "not a readable PNG");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(path, "unsupported channel count " + std::to_string(channels));
    }

    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_byte> raster(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = raster.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor img({static_cast<std::int64_t>(h), static_cast<std::int64_t>(w), channels});
    const double scale = depth == 16 ? 65535.0 : 255.0;
    std::int64_t idx = 0;
    for (png_uint_32 y = 0; y < h; ++y) {
        const png_byte* row = raster.data() + y * rowbytes;
        for (png_uint_32 x = 0; x < w * static_cast<png_uint_32>(channels); ++x) {
            double v;
            if (depth == 16) {
                v = static_cast<double>((row[2 * x] << 8) | row[2 * x + 1]);  // network order
            } else {
                v = static_cast<double>(row[x]);
            }
            img[idx++] = v / scale;
        }
    }
    return img;
}

void write_png(const std::string& path, const Tensor& img, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16)
        throw std::invalid_argument("write_png: bit depth must be 8 or 16");
    if (img.rank() != 2 && img.rank() != 3)
        throw std::invalid_argument("write_png: image must be [H,W] or [H,W,C]");
    const std::int64_t h = img.dim(0), w = img.dim(1);
    const int channels = img.rank() == 2 ? 1 : static_cast<int>(img.dim(2));
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("write_png: channel count must be 1 or 3");

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail(path, "cannot open for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) fail(path, "libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(path, "PNG write failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const double scale = bit_depth == 16 ? 65535.0 : 255.0;
    const std::size_t rowbytes = static_cast<std::size_t>(w) * channels * (bit_depth / 8);
    std::vector<png_byte> row(rowbytes);
    for (std::int64_t y = 0; y < h; ++y) {
        std::size_t o = 0;
        for (std::int64_t x = 0; x < w * channels; ++x) {
            const double v = std::clamp(img[(y * w * channels) + x], 0.0, 1.0);
            const auto q = static_cast<unsigned>(std::lround(v * scale));
            if (bit_depth == 16) {
                row[o++] = static_cast<png_byte>(q >> 8);
                row[o++] = static_cast<png_byte>(q & 0xff);
            } else {
                row[o++] = static_cast<png_byte>(q);
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// ---- PFM ------------------------------------------------------------------------

Tensor read_pfm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(path, "cannot open");
    std::string magic;
    std::int64_t w = 0, h = 0;
    double scale = 0;
    is >> magic >> w >> h >> scale;
    if (magic != "Pf" && magic != "PF") fail(path, "not a PFM file");
    if (scale >= 0) fail(path, "big-endian PFM unsupported");
    is.get();  // single whitespace after the header
    const int channels = magic == "PF" ? 3 : 1;
    std::vector<float> data(static_cast<std::size_t>(w * h * channels));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!is) fail(path, "truncated PFM");
    Tensor img(channels == 1 ? std::vector<std::int64_t>{h, w}
                             : std::vector<std::int64_t>{h, w, channels});
    for (std::int64_t y = 0; y < h; ++y) {
        const std::int64_t src = (h - 1 - y) * w * channels;  // rows stored bottom-up
        for (std::int64_t x = 0; x < w * channels; ++x)
            img[y * w * channels + x] = data[static_cast<std::size_t>(src + x)];
    }
    return img;
}

void write_pfm(const std::string& path, const Tensor& img) {
    if (img.rank() != 2 && !(img.rank() == 3 && img.dim(2) == 3))
        throw std::invalid_argument("write_pfm: image must be [H,W] or [H,W,3]");
    const std::int64_t h = img.dim(0), w = img.dim(1);
    const int channels = img.rank() == 2 ? 1 : 3;
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(path, "cannot open for writing");
    os << (channels == 3 ? "PF" : "Pf") << '\n' << w << ' ' << h << '\n' << "-1.0" << '\n';
    std::vector<float> row(static_cast<std::size_t>(w * channels));
    for (std::int64_t y = h - 1; y >= 0; --y) {  // bottom-up
        for (std::int64_t x = 0; x < w * channels; ++x)
            row[static_cast<std::size_t>(x)] = static_cast<float>(img[y * w * channels + x]);
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
}

// ---- normal codec -------------------------------------------------------------------

Tensor encode_normal_map(const Tensor& normals) {
    if (normals.rank() != 3 || normals.dim(2) != 3)
        throw std::invalid_argument("encode_normal_map: [H,W,3] expected");
    Tensor out(normals.shape());
    for (std::int64_t i = 0; i < normals.size(); ++i)
        out[i] = std::clamp((normals[i] + 1.0) / 2.0, 0.0, 1.0);
    return out;
}

Tensor decode_normal_map(const Tensor& packed, const Tensor* mask) {
    if (packed.rank() != 3 || packed.dim(2) != 3)
        throw std::invalid_argument("decode_normal_map: [H,W,3] expected");
    Tensor out(packed.shape());
    for (std::int64_t i = 0; i < packed.size() / 3; ++i) {
        if (mask && (*mask)[i] == 0.0) continue;
        Vec3 n{2.0 * packed[3 * i] - 1.0, 2.0 * packed[3 * i + 1] - 1.0,
               2.0 * packed[3 * i + 2] - 1.0};
        n = n.normalized();
        out[3 * i] = n.x;
        out[3 * i + 1] = n.y;
        out[3 * i + 2] = n.z;
    }
    return out;
}

// ---- visualization ---------------------------------------------------------------------

namespace {

// compact jet-style ramp
void colormap(double t, double& r, double& g, double& b) {
    t = std::clamp(t, 0.0, 1.0);
    r = std::clamp(1.5 - std::fabs(4.0 * t - 3.0), 0.0, 1.0);
    g = std::clamp(1.5 - std::fabs(4.0 * t - 2.0), 0.0, 1.0);
    b = std::clamp(1.5 - std::fabs(4.0 * t - 1.0), 0.0, 1.0);
}

} // namespace

Tensor error_heatmap(const Tensor& errors_deg, const Tensor& mask, double max_deg) {
    if (!errors_deg.same_shape(mask))
        throw std::invalid_argument("error_heatmap: error map and mask differ");
    Tensor img({errors_deg.dim(0), errors_deg.dim(1), 3});
    for (std::int64_t i = 0; i < errors_deg.size(); ++i) {
        if (mask[i] == 0.0) continue;
        double r, g, b;
        colormap(errors_deg[i] / max_deg, r, g, b);
        img[3 * i] = r;
        img[3 * i + 1] = g;
        img[3 * i + 2] = b;
    }
    return img;
}

namespace {

void draw_dot(Tensor& img, double px, double py, int radius, double r, double g, double b) {
    const std::int64_t res = img.dim(0);
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dx * dx + dy * dy > radius * radius) continue;
            const std::int64_t x = static_cast<std::int64_t>(std::lround(px)) + dx;
            const std::int64_t y = static_cast<std::int64_t>(std::lround(py)) + dy;
            if (x < 0 || x >= res || y < 0 || y >= res) continue;
            img[(y * res + x) * 3] = r;
            img[(y * res + x) * 3 + 1] = g;
            img[(y * res + x) * 3 + 2] = b;
        }
}

} // namespace

Tensor light_sphere_plot(const Tensor& est_dirs, const Tensor* gt_dirs, int resolution) {
    Tensor img({resolution, resolution, 3});
    img.fill(1.0);
    const double c = (resolution - 1) / 2.0;
    // disk outline
    for (int a = 0; a < 720; ++a) {
        const double t = a * 3.14159265358979323846 / 360.0;
        draw_dot(img, c + c * std::cos(t), c + c * std::sin(t), 0, 0.6, 0.6, 0.6);
    }
    auto place = [&](const Tensor& dirs, int radius, double r, double g, double b) {
        for (std::int64_t j = 0; j < dirs.dim(0); ++j) {
            const double px = c + dirs.at(j, 0) * c;
            const double py = c + dirs.at(j, 1) * c;
            draw_dot(img, px, py, radius, r, g, b);
        }
    };
    if (gt_dirs) place(*gt_dirs, 4, 0.1, 0.7, 0.1);
    place(est_dirs, 2, 0.85, 0.1, 0.1);
    return img;
}

} // namespace psir
