#include "psir/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <stdexcept>

namespace psir {

namespace {
constexpr double kGammaEps = 1e-8;  // regularizer inside |d_k| before reciprocals
}

std::int64_t PixelSet::index_of(int x, int y) const {
    const std::int64_t key = static_cast<std::int64_t>(y) * width + x;
    auto it = std::lower_bound(flat.begin(), flat.end(), key);
    if (it == flat.end() || *it != key) return -1;
    return it - flat.begin();
}

PixelSet make_pixel_set(const Tensor& mask) {
    if (mask.rank() != 2) throw std::invalid_argument("make_pixel_set: mask must be rank-2");
    PixelSet set;
    set.height = static_cast<int>(mask.dim(0));
    set.width = static_cast<int>(mask.dim(1));
    for (int y = 0; y < set.height; ++y)
        for (int x = 0; x < set.width; ++x)
            if (mask.at(y, x) != 0.0) {
                set.xs.push_back(x);
                set.ys.push_back(y);
                set.flat.push_back(static_cast<std::int64_t>(y) * set.width + x);
            }
    return set;
}

double bilinear_depth(const DepthField& field, double x, double y) {
    const std::int64_t w = field.width, h = field.height;
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(x));
    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(y));
    const std::int64_t x1 = std::min(x0 + 1, w - 1);
    const std::int64_t y1 = std::min(y0 + 1, h - 1);
    const double fx = x - static_cast<double>(x0);
    const double fy = y - static_cast<double>(y0);
    const double* d = field.depth.data();
    return (1 - fy) * ((1 - fx) * d[y0 * w + x0] + fx * d[y0 * w + x1]) +
           fy * ((1 - fx) * d[y1 * w + x0] + fx * d[y1 * w + x1]);
}

namespace {

// neighbor offsets in cyclic order: up, right, down, left (image v is down)
constexpr int kDx[4] = {0, 1, 0, -1};
constexpr int kDy[4] = {-1, 0, 1, 0};

// Depth difference D_k = w_k - w_i with the one-sided boundary rule.
// Returns the gather coefficient and source pixel for the vectorized path.
struct DiffRule {
    double coef;        // D_k = coef * (w[src] - w_i)
    int src_x, src_y;   // source pixel (equals self when coef == 0)
};

DiffRule diff_rule(const DepthField& field, int x, int y, int k) {
    const int nx = x + kDx[k], ny = y + kDy[k];
    if (field.masked(nx, ny)) return {1.0, nx, ny};
    const int ox = x + kDx[(k + 2) % 4], oy = y + kDy[(k + 2) % 4];
    if (field.masked(ox, oy)) return {-1.0, ox, oy};  // w_k := 2 w_i - w_opp
    return {0.0, x, y};
}

} // namespace

Vec3 fit_normal(const DepthField& field, int x, int y) {
    if (!field.masked(x, y)) throw std::invalid_argument("fit_normal: pixel is not masked");
    const double wi = field.at(x, y);
    double D[4];
    for (int k = 0; k < 4; ++k) {
        const DiffRule r = diff_rule(field, x, y, k);
        D[k] = r.coef * (field.at(r.src_x, r.src_y) - wi);
    }
    const double p = field.pitch;
    // triangle normals, unnormalized: pairs (k, k+1) of (up,right,down,left)
    const Vec3 tri[4] = {
        {D[1], -D[0], p},
        {D[1], D[2], p},
        {-D[3], D[2], p},
        {-D[3], -D[0], p},
    };
    double gamma[4], gsum = 0;
    for (int k = 0; k < 4; ++k) {
        const double d = D[k] + D[(k + 1) % 4];
        gamma[k] = 1.0 / (std::fabs(d) + kGammaEps);
        gsum += gamma[k];
    }
    Vec3 n{0, 0, 0};
    for (int k = 0; k < 4; ++k) n = n + tri[k].normalized() * (gamma[k] / gsum);
    return n.normalized();
}

NeighborTable make_neighbor_table(const Tensor& mask, const PixelSet& pixels) {
    DepthField probe;
    probe.width = pixels.width;
    probe.height = pixels.height;
    probe.mask = mask;
    probe.depth = Tensor::zeros({pixels.height, pixels.width});

    const std::int64_t n = pixels.count();
    NeighborTable table;
    table.interior.assign(static_cast<std::size_t>(n), 1);
    for (int k = 0; k < 4; ++k) {
        auto idx = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n));
        table.coef[k] = Tensor({n});
        for (std::int64_t i = 0; i < n; ++i) {
            const int x = pixels.xs[static_cast<std::size_t>(i)];
            const int y = pixels.ys[static_cast<std::size_t>(i)];
            const DiffRule r = diff_rule(probe, x, y, k);
            const std::int64_t src = pixels.index_of(r.src_x, r.src_y);
            (*idx)[static_cast<std::size_t>(i)] = src;
            table.coef[k][i] = r.coef;
            if (r.coef != 1.0) table.interior[static_cast<std::size_t>(i)] = 0;
        }
        table.idx[k] = std::move(idx);
    }
    return table;
}

NormalGraph fit_normals_graph(const ad::Var& depth_pixels, const NeighborTable& table,
                              double pitch) {
    using namespace ad;
    std::array<Var, 4> D;
    for (int k = 0; k < 4; ++k) {
        Var nbr = gather(depth_pixels, table.idx[k]);
        D[k] = mul(Var::constant(table.coef[k]), sub(nbr, depth_pixels));
    }
    const Var negD0 = neg(D[0]);
    const Var negD3 = neg(D[3]);
    const std::array<Var, 4> tx = {D[1], D[1], negD3, negD3};
    const std::array<Var, 4> ty = {negD0, D[2], D[2], negD0};

    const Var p2 = Var::constant(pitch * pitch);
    std::array<Var, 4> inv_len, gamma;
    Var gsum;
    for (int k = 0; k < 4; ++k) {
        inv_len[k] = div(Var::constant(1.0),
                         ad::sqrt(add(add(mul(tx[k], tx[k]), mul(ty[k], ty[k])), p2)));
        const Var d = add(D[k], D[(k + 1) % 4]);
        gamma[k] = div(Var::constant(1.0), add(ad::abs(d), Var::constant(kGammaEps)));
        gsum = k == 0 ? gamma[k] : add(gsum, gamma[k]);
    }

    Var ax, ay, az;
    const Var pc = Var::constant(pitch);
    for (int k = 0; k < 4; ++k) {
        const Var wk = mul(div(gamma[k], gsum), inv_len[k]);
        ax = k == 0 ? mul(wk, tx[k]) : add(ax, mul(wk, tx[k]));
        ay = k == 0 ? mul(wk, ty[k]) : add(ay, mul(wk, ty[k]));
        az = k == 0 ? mul(wk, pc) : add(az, mul(wk, pc));
    }
    const Var len = ad::sqrt(add(add(mul(ax, ax), mul(ay, ay)), mul(az, az)));
    NormalGraph out;
    out.nx = div(ax, len);
    out.ny = div(ay, len);
    out.nz = div(az, len);
    out.matrix = stack_cols({out.nx, out.ny, out.nz});
    return out;
}

std::shared_ptr<const std::vector<std::int64_t>> nearest_masked_map(const Tensor& mask,
                                                                    const PixelSet& pixels) {
    if (mask.rank() != 2 || mask.dim(0) != pixels.height || mask.dim(1) != pixels.width)
        throw std::invalid_argument("nearest_masked_map: mask does not match pixel set");
    const int w = pixels.width, h = pixels.height;
    auto map = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(w) * h, -1);
    std::deque<std::int64_t> queue;
    for (std::int64_t i = 0; i < pixels.count(); ++i) {
        (*map)[static_cast<std::size_t>(pixels.flat[static_cast<std::size_t>(i)])] = i;
        queue.push_back(pixels.flat[static_cast<std::size_t>(i)]);
    }
    if (queue.empty()) throw std::invalid_argument("nearest_masked_map: empty mask");
    while (!queue.empty()) {
        const std::int64_t cell = queue.front();
        queue.pop_front();
        const int x = static_cast<int>(cell % w), y = static_cast<int>(cell / w);
        for (int k = 0; k < 4; ++k) {
            const int nx = x + kDx[k], ny = y + kDy[k];
            if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
            const std::int64_t ncell = static_cast<std::int64_t>(ny) * w + nx;
            if ((*map)[static_cast<std::size_t>(ncell)] >= 0) continue;
            (*map)[static_cast<std::size_t>(ncell)] = (*map)[static_cast<std::size_t>(cell)];
            queue.push_back(ncell);
        }
    }
    return map;
}

ad::Var grid_fill_graph(const ad::Var& depth_pixels,
                        const std::shared_ptr<const std::vector<std::int64_t>>& cell_map,
                        int width, int height) {
    return ad::reshape(ad::gather(depth_pixels, cell_map), {height, width});
}

// ---- silhouette ---------------------------------------------------------------

namespace {

bool mask_at(const Tensor& mask, int x, int y) {
    const int h = static_cast<int>(mask.dim(0)), w = static_cast<int>(mask.dim(1));
    return x >= 0 && x < w && y >= 0 && y < h && mask.at(y, x) != 0.0;
}

// Moore-neighbor boundary tracing from the component's topmost-leftmost
// pixel. Stops when the walk re-enters the start with the same backtrack
// state, yielding the closed outer chain.
std::vector<std::pair<int, int>> trace_boundary(const Tensor& mask, int sx, int sy) {
    // clockwise neighbor order starting west (image coordinates, y down)
    static const int mx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
    static const int my[8] = {0, -1, -1, -1, 0, 1, 1, 1};
    std::vector<std::pair<int, int>> chain;
    int bx = sx, by = sy;
    int back = 0;  // the start pixel was entered from the west, which is unmasked
    int fx = -1, fy = -1, fback = -1;  // state right after the first move
    const std::size_t limit = static_cast<std::size_t>(mask.size()) * 4 + 16;
    while (chain.size() < limit) {
        chain.emplace_back(bx, by);
        int found = -1, d = back;
        for (int step = 0; step < 8; ++step) {
            d = (d + 1) % 8;
            if (mask_at(mask, bx + mx[d], by + my[d])) {
                found = d;
                break;
            }
        }
        if (found < 0) return chain;  // isolated pixel
        bx += mx[found];
        by += my[found];
        back = (found + 4) % 8;
        if (fx < 0) {
            fx = bx;
            fy = by;
            fback = back;
        } else if (bx == fx && by == fy && back == fback) {
            break;  // walk state repeats: the outer boundary is closed
        }
    }
    while (chain.size() > 1 && chain.back() == chain.front()) chain.pop_back();
    return chain;
}

} // namespace

std::vector<SilhouettePoint> silhouette_normals(const Tensor& mask) {
    const int h = static_cast<int>(mask.dim(0)), w = static_cast<int>(mask.dim(1));
    std::vector<SilhouettePoint> out;
    std::vector<std::uint8_t> component(static_cast<std::size_t>(w) * h, 0);

    bool any_boundary = false;
    int skipped_components = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!mask_at(mask, x, y) || component[static_cast<std::size_t>(y) * w + x]) continue;
            // flood-fill the component so each is traced once
            std::deque<std::pair<int, int>> q{{x, y}};
            component[static_cast<std::size_t>(y) * w + x] = 1;
            int count = 0;
            while (!q.empty()) {
                auto [cx, cy] = q.front();
                q.pop_front();
                ++count;
                for (int k = 0; k < 4; ++k) {
                    const int nx = cx + kDx[k], ny = cy + kDy[k];
                    if (mask_at(mask, nx, ny) && !component[static_cast<std::size_t>(ny) * w + nx]) {
                        component[static_cast<std::size_t>(ny) * w + nx] = 1;
                        q.emplace_back(nx, ny);
                    }
                }
            }
            if (count == 1) {
                ++skipped_components;
                continue;
            }
            auto chain = trace_boundary(mask, x, y);
            if (chain.size() < 2) {
                ++skipped_components;
                continue;
            }
            any_boundary = true;
            const int len = static_cast<int>(chain.size());
            for (int t = 0; t < len; ++t) {
                // least-squares tangent through a 5-pixel window of the chain
                double mxs = 0, mys = 0;
                int pts[5][2];
                for (int o = -2; o <= 2; ++o) {
                    const int idx = ((t + o) % len + len) % len;
                    pts[o + 2][0] = chain[static_cast<std::size_t>(idx)].first;
                    pts[o + 2][1] = chain[static_cast<std::size_t>(idx)].second;
                    mxs += pts[o + 2][0];
                    mys += pts[o + 2][1];
                }
                mxs /= 5;
                mys /= 5;
                double sxx = 0, sxy = 0, syy = 0;
                for (auto& p : pts) {
                    const double dx = p[0] - mxs, dy = p[1] - mys;
                    sxx += dx * dx;
                    sxy += dx * dy;
                    syy += dy * dy;
                }
                const double theta = 0.5 * std::atan2(2 * sxy, sxx - syy);
                const double tx = std::cos(theta), ty = std::sin(theta);
                double nx = -ty, ny = tx;
                // orient outward: away from the local masked centroid
                const int px = chain[static_cast<std::size_t>(t)].first;
                const int py = chain[static_cast<std::size_t>(t)].second;
                double cx = 0, cy = 0;
                int cn = 0;
                for (int dy2 = -2; dy2 <= 2; ++dy2)
                    for (int dx2 = -2; dx2 <= 2; ++dx2)
                        if (mask_at(mask, px + dx2, py + dy2)) {
                            cx += px + dx2;
                            cy += py + dy2;
                            ++cn;
                        }
                cx /= cn;
                cy /= cn;
                double dot = nx * (px - cx) + ny * (py - cy);
                if (dot == 0.0) {
                    // fall back to probing one step along the candidate normal
                    dot = mask_at(mask, static_cast<int>(std::lround(px + 1.5 * nx)),
                                  static_cast<int>(std::lround(py + 1.5 * ny)))
                              ? -1.0
                              : 1.0;
                }
                if (dot < 0) {
                    nx = -nx;
                    ny = -ny;
                }
                const double norm = std::hypot(nx, ny);
                out.push_back({px, py, Vec3{nx / norm, ny / norm, 0.0}});
            }
        }
    }
    if (skipped_components)
        std::fprintf(stderr,
                     "silhouette_normals: skipped %d isolated single-pixel component(s)\n",
                     skipped_components);
    if (!any_boundary && out.empty()) return out;
    return out;
}

} // namespace psir
