#include "psir/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

namespace psir::ad {

namespace {

std::atomic<std::int64_t> g_border_clamps{0};

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                                " and " + b.shape_str());
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const std::string& detail) {
    throw std::invalid_argument(std::string(op) + ": shape " + a.shape_str() + " " + detail);
}

Tape* pick_tape(std::initializer_list<const Var*> vars) {
    for (const Var* v : vars)
        if (v->defined() && v->requires_grad()) return v->tape();
    return nullptr;
}

void ensure_adj(VarData& v) {
    if (v.adj.empty()) v.adj = Tensor::zeros(v.value.shape());
}

// Broadcast plan: per-output-dimension strides into each operand, stride 0
// where the operand's dimension is 1 (numpy trailing-alignment rules).
struct BcastPlan {
    std::vector<std::int64_t> out_shape;
    std::vector<std::int64_t> sa, sb;
    std::int64_t n = 1;
};

BcastPlan make_plan(const char* op, const Tensor& a, const Tensor& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    int ra = static_cast<int>(as.size()), rb = static_cast<int>(bs.size());
    int r = std::max(ra, rb);
    BcastPlan p;
    p.out_shape.resize(static_cast<std::size_t>(r));
    for (int d = 0; d < r; ++d) {
        std::int64_t da = d >= r - ra ? as[static_cast<std::size_t>(d - (r - ra))] : 1;
        std::int64_t db = d >= r - rb ? bs[static_cast<std::size_t>(d - (r - rb))] : 1;
        if (da != db && da != 1 && db != 1) shape_error(op, a, b);
        p.out_shape[static_cast<std::size_t>(d)] = std::max(da, db);
    }
    p.sa.assign(static_cast<std::size_t>(r), 0);
    p.sb.assign(static_cast<std::size_t>(r), 0);
    std::int64_t stride = 1;
    for (int d = ra - 1; d >= 0; --d) {
        if (as[static_cast<std::size_t>(d)] != 1) p.sa[static_cast<std::size_t>(d + (r - ra))] = stride;
        stride *= as[static_cast<std::size_t>(d)];
    }
    stride = 1;
    for (int d = rb - 1; d >= 0; --d) {
        if (bs[static_cast<std::size_t>(d)] != 1) p.sb[static_cast<std::size_t>(d + (r - rb))] = stride;
        stride *= bs[static_cast<std::size_t>(d)];
    }
    p.n = shape_numel(p.out_shape);
    return p;
}

// Visits every output element with flat offsets into both operands. Rank <= 2
// runs as two nested strided loops; higher ranks fall back to an odometer.
template <typename F>
void bcast_loop(const BcastPlan& p, F&& body) {
    const int r = static_cast<int>(p.out_shape.size());
    if (r == 0) {
        body(0, 0, 0);
        return;
    }
    if (r <= 2) {
        const std::int64_t rows = r == 2 ? p.out_shape[0] : 1;
        const std::int64_t cols = p.out_shape[static_cast<std::size_t>(r - 1)];
        const std::int64_t ra = r == 2 ? p.sa[0] : 0, rb = r == 2 ? p.sb[0] : 0;
        const std::int64_t ca = p.sa[static_cast<std::size_t>(r - 1)];
        const std::int64_t cb = p.sb[static_cast<std::size_t>(r - 1)];
        std::int64_t i = 0;
        for (std::int64_t y = 0; y < rows; ++y)
            for (std::int64_t x = 0; x < cols; ++x) body(i++, y * ra + x * ca, y * rb + x * cb);
        return;
    }
    std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
    std::int64_t ia = 0, ib = 0;
    for (std::int64_t i = 0; i < p.n; ++i) {
        body(i, ia, ib);
        for (int d = r - 1; d >= 0; --d) {
            auto ud = static_cast<std::size_t>(d);
            ++idx[ud];
            ia += p.sa[ud];
            ib += p.sb[ud];
            if (idx[ud] < p.out_shape[ud]) break;
            ia -= p.sa[ud] * p.out_shape[ud];
            ib -= p.sb[ud] * p.out_shape[ud];
            idx[ud] = 0;
        }
    }
}

bool same_layout(const BcastPlan& p, const Tensor& a, const Tensor& b) {
    return a.size() == p.n && b.size() == p.n && a.same_shape(b);
}

} // namespace

Var make_node(const char* op, Tape* tape, Tensor value, std::function<void(VarData&)> backward) {
    auto d = std::make_shared<VarData>();
    d->value = std::move(value);
    d->tape = tape;
    d->requires_grad = tape != nullptr;
    if (tape) {
        // grad materializes on the first backward fold; until then it reads
        // as all-zero through the accessor
        tape->nodes_.push_back(TapeNode{op, d, std::move(backward)});
    }
    return Var(d);
}

Var Var::constant(Tensor value) {
    auto d = std::make_shared<VarData>();
    d->value = std::move(value);
    return Var(std::move(d));
}

double Var::item() const {
    if (!d_ || d_->value.size() != 1)
        throw std::invalid_argument("Var::item: not a single-element value");
    return d_->value[0];
}

Var Tape::leaf(Tensor value, std::string name) {
    auto d = std::make_shared<VarData>();
    d->value = std::move(value);
    d->grad = Tensor::zeros(d->value.shape());
    d->requires_grad = true;
    d->tape = this;
    d->name = std::move(name);
    Var v(std::move(d));
    leaves_.push_back(v);
    return v;
}

void Tape::backward(const Var& root) {
    if (!root.defined() || root.value().size() != 1)
        throw std::invalid_argument("backward: root must be scalar-valued");
    if (!root.requires_grad()) return;  // constant root: nothing reachable
    if (root.tape() != this) throw std::invalid_argument("backward: root recorded on another tape");

    VarData& rd = *root.data();
    ensure_adj(rd);
    rd.adj[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->out->adj.empty()) continue;  // not reachable from root
        it->backward(*it->out);
    }
    auto fold = [](VarData& v) {
        if (v.adj.empty()) return;
        if (v.grad.empty()) {
            v.grad = std::move(v.adj);
        } else {
            for (std::int64_t i = 0; i < v.adj.size(); ++i) v.grad[i] += v.adj[i];
        }
        v.adj = Tensor();
    };
    for (auto& n : nodes_) fold(*n.out);
    for (auto& l : leaves_) fold(*l.data());
}

void Tape::clear() {
    nodes_.clear();
    leaves_.clear();
}

// ---- elementwise binary ----------------------------------------------------

namespace {

// fwd(a,b) -> value; da(g,a,b), db(g,a,b) -> adjoint contributions
template <typename Fwd, typename Da, typename Db>
Var binary_op(const char* op, const Var& a, const Var& b, Fwd fwd, Da da, Db db) {
    const BcastPlan plan = make_plan(op, a.value(), b.value());
    Tensor out(plan.out_shape);
    const double* pa = a.value().data();
    const double* pb = b.value().data();
    double* po = out.data();
    if (same_layout(plan, a.value(), b.value())) {
        for (std::int64_t i = 0; i < plan.n; ++i) po[i] = fwd(pa[i], pb[i]);
    } else if (b.value().size() == 1) {
        const double bv = pb[0];
        for (std::int64_t i = 0; i < plan.n; ++i) po[i] = fwd(pa[i], bv);
    } else if (a.value().size() == 1) {
        const double av = pa[0];
        for (std::int64_t i = 0; i < plan.n; ++i) po[i] = fwd(av, pb[i]);
    } else {
        bcast_loop(plan, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
            po[i] = fwd(pa[ia], pb[ib]);
        });
    }

    Tape* tape = pick_tape({&a, &b});
    if (!tape) return Var::constant(std::move(out));

    auto ad_ = a.data();
    auto bd_ = b.data();
    return make_node(op, tape, std::move(out), [plan, ad_, bd_, da, db](VarData& o) {
        const double* g = o.adj.data();
        const double* va = ad_->value.data();
        const double* vb = bd_->value.data();
        const bool wa = ad_->requires_grad;
        const bool wb = bd_->requires_grad;
        if (wa) ensure_adj(*ad_);
        if (wb) ensure_adj(*bd_);
        double* ga = wa ? ad_->adj.data() : nullptr;
        double* gb = wb ? bd_->adj.data() : nullptr;
        bcast_loop(plan, [&](std::int64_t i, std::int64_t ia, std::int64_t ib) {
            if (wa) ga[ia] += da(g[i], va[ia], vb[ib]);
            if (wb) gb[ib] += db(g[i], va[ia], vb[ib]);
        });
    });
}

} // namespace

Var add(const Var& a, const Var& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Var sub(const Var& a, const Var& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Var mul(const Var& a, const Var& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double g, double, double y) { return g * y; },
        [](double g, double x, double) { return g * x; });
}

Var div(const Var& a, const Var& b) {
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double g, double, double y) { return g / y; },
        [](double g, double x, double y) { return -g * x / (y * y); });
}

Var minimum(const Var& a, const Var& b) {
    return binary_op(
        "minimum", a, b, [](double x, double y) { return x <= y ? x : y; },
        [](double g, double x, double y) { return x <= y ? g : 0.0; },
        [](double g, double x, double y) { return x <= y ? 0.0 : g; });
}

// ---- elementwise unary -----------------------------------------------------

namespace {

template <typename Fwd, typename Dx>
Var unary_op(const char* op, const Var& a, Fwd fwd, Dx dx) {
    Tensor out(a.value().shape());
    const double* pa = a.value().data();
    double* po = out.data();
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);

    Tape* tape = pick_tape({&a});
    if (!tape) return Var::constant(std::move(out));
    auto ad_ = a.data();
    return make_node(op, tape, std::move(out), [ad_, dx, n](VarData& o) {
        if (!ad_->requires_grad) return;
        ensure_adj(*ad_);
        const double* g = o.adj.data();
        const double* x = ad_->value.data();
        const double* y = o.value.data();
        double* ga = ad_->adj.data();
        for (std::int64_t i = 0; i < n; ++i) ga[i] += dx(g[i], x[i], y[i]);
    });
}

double sigmoid_scalar(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

Var neg(const Var& a) {
    return unary_op(
        "neg", a, [](double x) { return -x; }, [](double g, double, double) { return -g; });
}

Var abs(const Var& a) {
    return unary_op(
        "abs", a, [](double x) { return std::fabs(x); },
        [](double g, double x, double) { return x > 0 ? g : (x < 0 ? -g : 0.0); });
}

Var exp(const Var& a) {
    return unary_op(
        "exp", a, [](double x) { return std::exp(x); },
        [](double g, double, double y) { return g * y; });
}

Var sqrt(const Var& a) {
    return unary_op(
        "sqrt", a, [](double x) { return std::sqrt(x); },
        [](double g, double, double y) { return 0.5 * g / y; });
}

Var sigmoid(const Var& a) {
    return unary_op(
        "sigmoid", a, [](double x) { return sigmoid_scalar(x); },
        [](double g, double, double y) { return g * y * (1.0 - y); });
}

Var softplus(const Var& a) {
    return unary_op(
        "softplus", a,
        [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](double g, double x, double) { return g * sigmoid_scalar(x); });
}

Var sin(const Var& a) {
    return unary_op(
        "sin", a, [](double x) { return std::sin(x); },
        [](double g, double x, double) { return g * std::cos(x); });
}

Var cos(const Var& a) {
    return unary_op(
        "cos", a, [](double x) { return std::cos(x); },
        [](double g, double x, double) { return -g * std::sin(x); });
}

Var pow(const Var& a, double exponent) {
    return unary_op(
        "pow", a, [exponent](double x) { return std::pow(x, exponent); },
        [exponent](double g, double x, double) { return g * exponent * std::pow(x, exponent - 1.0); });
}

Var max_const(const Var& a, double c) {
    return unary_op(
        "max_const", a, [c](double x) { return x > c ? x : c; },
        [c](double g, double x, double) { return x > c ? g : 0.0; });
}

// ---- linear algebra ---------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) shape_error("matmul", av, bv);
    const std::int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out({m, n});
    const double* pa = av.data();
    const double* pb = bv.data();
    double* po = out.data();
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = pa + i * k;
        double* orow = po + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const double x = arow[p];
            const double* brow = pb + p * n;
            for (std::int64_t j = 0; j < n; ++j) orow[j] += x * brow[j];
        }
    }

    Tape* tape = pick_tape({&a, &b});
    if (!tape) return Var::constant(std::move(out));
    auto ad_ = a.data();
    auto bd_ = b.data();
    return make_node("matmul", tape, std::move(out), [ad_, bd_, m, k, n](VarData& o) {
        const double* g = o.adj.data();
        if (ad_->requires_grad) {  // dA = G * B^T
            ensure_adj(*ad_);
            double* ga = ad_->adj.data();
            const double* pb = bd_->value.data();
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t j = 0; j < n; ++j) {
                    const double gv = g[i * n + j];
                    if (gv == 0.0) continue;
                    const double* brow = pb + j;
                    double* garow = ga + i * k;
                    for (std::int64_t p = 0; p < k; ++p) garow[p] += gv * brow[p * n];
                }
        }
        if (bd_->requires_grad) {  // dB = A^T * G
            ensure_adj(*bd_);
            double* gb = bd_->adj.data();
            const double* pa = ad_->value.data();
            for (std::int64_t i = 0; i < m; ++i) {
                const double* arow = pa + i * k;
                const double* grow = g + i * n;
                for (std::int64_t p = 0; p < k; ++p) {
                    const double x = arow[p];
                    if (x == 0.0) continue;
                    double* gbrow = gb + p * n;
                    for (std::int64_t j = 0; j < n; ++j) gbrow[j] += x * grow[j];
                }
            }
        }
    });
}

Var transpose(const Var& a) {
    const Tensor& av = a.value();
    if (av.rank() != 2) shape_error("transpose", av, "is not rank-2");
    const std::int64_t m = av.dim(0), n = av.dim(1);
    Tensor out({n, m});
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
    Tape* tape = pick_tape({&a});
    if (!tape) return Var::constant(std::move(out));
    auto ad_ = a.data();
    return make_node("transpose", tape, std::move(out), [ad_, m, n](VarData& o) {
        if (!ad_->requires_grad) return;
        ensure_adj(*ad_);
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) ad_->adj.at(i, j) += o.adj.at(j, i);
    });
}

// ---- reductions --------------------------------------------------------------

Var sum(const Var& a) {
    const std::int64_t n = a.value().size();
    double acc = 0.0;
    const double* pa = a.value().data();
    for (std::int64_t i = 0; i < n; ++i) acc += pa[i];
    Tape* tape = pick_tape({&a});
    if (!tape) return Var::constant(Tensor::scalar(acc));
    auto ad_ = a.data();
    return make_node("sum", tape, Tensor::scalar(acc), [ad_, n](VarData& o) {
        if (!ad_->requires_grad) return;
        ensure_adj(*ad_);
        const double g = o.adj[0];
        double* ga = ad_->adj.data();
        for (std::int64_t i = 0; i < n; ++i) ga[i] += g;
    });
}

Var mean(const Var& a) {
    const std::int64_t n = a.value().size();
    if (n == 0) throw std::invalid_argument("mean: empty input");
    double acc = 0.0;
    const double* pa = a.value().data();
    for (std::int64_t i = 0; i < n; ++i) acc += pa[i];
    acc /= static_cast<double>(n);
    Tape* tape = pick_tape({&a});
    if (!tape) return Var::constant(Tensor::scalar(acc));
    auto ad_ = a.data();
    return make_node("mean", tape, Tensor::scalar(acc), [ad_, n](VarData& o) {
        if (!ad_->requires_grad) return;
        ensure_adj(*ad_);
        const double g = o.adj[0] / static_cast<double>(n);
        double* ga = ad_->adj.data();
        for (std::int64_t i = 0; i < n; ++i) ga[i] += g;
    });
}

Var min_reduce(const Var& a) {
    const std::int64_t n = a.value().size();
    if (n == 0) throw std::invalid_argument("min_reduce: empty input");
    const double* pa = a.value().data();
    std::int64_t arg = 0;
    for (std::int64_t i = 1; i < n; ++i)
        if (pa[i] < pa[arg]) arg = i;  // strict: first minimum wins ties
    Tape* tape = pick_tape({&a});
    if (!tape) return Var::constant(Tensor::scalar(pa[arg]));
    auto ad_ = a.data();
    return make_node("min_reduce", tape, Tensor::scalar(pa[arg]), [ad_, arg](VarData& o) {
        if (!ad_->requires_grad) return;
        ensure_adj(*ad_);
        ad_->adj[arg] += o.adj[0];
    });
}

Var min_last(const Var& a) {
    const Tensor& av = a.value();
    if (av.rank() < 1) shape_error("min_last", av, "needs rank >= 1");
    const std::int64_t k = av.shape().back();
    if (k == 0) throw std::invalid_argument("min_last: empty reduction axis");
    const std::int64_t rows = av.size() / k;
    std::vector<std::int64_t> out_shape(av.shape().begin(), av.shape().end() - 1);
    Tensor out(out_shape);
    auto args = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(rows));
    const double* pa = av.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* row = pa + r * k;
        std::int64_t arg = 0;
        for (std::int64_t j = 1; j < k; ++j)
            if (row[j] < row[arg]) arg = j;
        (*args)[static_cast<std::size_t>(r)] = arg;
        out[r] = row[arg];
    }
    Tape* tape = pick_tape({&a});
    if (!tape) return Var::constant(std::move(out));
    auto ad_ = a.data();
    return make_node("min_last", tape, std::move(out), [ad_, args, rows, k](VarData& o) {
        if (!ad_->requires_grad) return;
        ensure_adj(*ad_);
        double* ga = ad_->adj.data();
        const double* g = o.adj.data();
        for (std::int64_t r = 0; r < rows; ++r) ga[r * k + (*args)[static_cast<std::size_t>(r)]] += g[r];
    });
}

// ---- shape ops ----------------------------------------------------------------

Var reshape(const Var& a, std::vector<std::int64_t> shape) {
    Tensor out = a.value().reshaped(shape);
    Tape* tape = pick_tape({&a});
    if (!tape) return Var::constant(std::move(out));
    auto ad_ = a.data();
    return make_node("reshape", tape, std::move(out), [ad_](VarData& o) {
        if (!ad_->requires_grad) return;
        ensure_adj(*ad_);
        double* ga = ad_->adj.data();
        const double* g = o.adj.data();
        for (std::int64_t i = 0; i < o.adj.size(); ++i) ga[i] += g[i];
    });
}

Var broadcast_to(const Var& a, const std::vector<std::int64_t>& shape) {
    Tensor probe(shape);  // validates shape
    const BcastPlan plan = make_plan("broadcast", a.value(), probe);
    if (plan.out_shape != shape) shape_error("broadcast", a.value(), "does not broadcast to " + Tensor::shape_str(shape));
    Tensor out(shape);
    const double* pa = a.value().data();
    double* po = out.data();
    bcast_loop(plan, [&](std::int64_t i, std::int64_t ia, std::int64_t) { po[i] = pa[ia]; });
    Tape* tape = pick_tape({&a});
    if (!tape) return Var::constant(std::move(out));
    auto ad_ = a.data();
    return make_node("broadcast", tape, std::move(out), [ad_, plan](VarData& o) {
        if (!ad_->requires_grad) return;
        ensure_adj(*ad_);
        double* ga = ad_->adj.data();
        const double* g = o.adj.data();
        bcast_loop(plan, [&](std::int64_t i, std::int64_t ia, std::int64_t) { ga[ia] += g[i]; });
    });
}

// ---- gather / scatter -----------------------------------------------------------

Var gather(const Var& a, std::shared_ptr<const std::vector<std::int64_t>> idx) {
    const Tensor& av = a.value();
    const std::int64_t n = static_cast<std::int64_t>(idx->size());
    for (auto i : *idx)
        if (i < 0 || i >= av.size())
            throw std::invalid_argument("gather: index " + std::to_string(i) + " out of range for " +
                                        av.shape_str());
    Tensor out({n});
    const double* pa = av.data();
    for (std::int64_t i = 0; i < n; ++i) out[i] = pa[(*idx)[static_cast<std::size_t>(i)]];
    Tape* tape = pick_tape({&a});
    if (!tape) return Var::constant(std::move(out));
    auto ad_ = a.data();
    return make_node("gather", tape, std::move(out), [ad_, idx, n](VarData& o) {
        if (!ad_->requires_grad) return;
        ensure_adj(*ad_);
        double* ga = ad_->adj.data();
        const double* g = o.adj.data();
        for (std::int64_t i = 0; i < n; ++i) ga[(*idx)[static_cast<std::size_t>(i)]] += g[i];
    });
}

Var gather(const Var& a, std::vector<std::int64_t> idx) {
    return gather(a, std::make_shared<const std::vector<std::int64_t>>(std::move(idx)));
}

Var scatter_add(const Var& a, std::shared_ptr<const std::vector<std::int64_t>> idx,
                std::int64_t out_size) {
    const Tensor& av = a.value();
    if (av.size() != static_cast<std::int64_t>(idx->size()))
        shape_error("scatter_add", av, "does not match index count " + std::to_string(idx->size()));
    for (auto i : *idx)
        if (i < 0 || i >= out_size)
            throw std::invalid_argument("scatter_add: index " + std::to_string(i) +
                                        " out of range for size " + std::to_string(out_size));
    Tensor out({out_size});
    const double* pa = av.data();
    for (std::size_t i = 0; i < idx->size(); ++i) out[(*idx)[i]] += pa[i];
    Tape* tape = pick_tape({&a});
    if (!tape) return Var::constant(std::move(out));
    auto ad_ = a.data();
    return make_node("scatter_add", tape, std::move(out), [ad_, idx](VarData& o) {
        if (!ad_->requires_grad) return;
        ensure_adj(*ad_);
        double* ga = ad_->adj.data();
        const double* g = o.adj.data();
        for (std::size_t i = 0; i < idx->size(); ++i) ga[i] += g[(*idx)[i]];
    });
}

// ---- bilinear sampling ------------------------------------------------------------

namespace {

struct BilinearCell {
    std::int64_t x0, x1, y0, y1;
    double fx, fy;
    bool clamped_x, clamped_y;
};

BilinearCell locate(double x, double y, std::int64_t w, std::int64_t h) {
    BilinearCell c{};
    c.clamped_x = x < 0.0 || x > static_cast<double>(w - 1);
    c.clamped_y = y < 0.0 || y > static_cast<double>(h - 1);
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    c.x0 = static_cast<std::int64_t>(std::floor(x));
    c.y0 = static_cast<std::int64_t>(std::floor(y));
    c.x1 = std::min(c.x0 + 1, w - 1);
    c.y1 = std::min(c.y0 + 1, h - 1);
    c.fx = x - static_cast<double>(c.x0);
    c.fy = y - static_cast<double>(c.y0);
    return c;
}

} // namespace

std::int64_t border_clamp_count() { return g_border_clamps.load(); }
void reset_border_clamp_count() { g_border_clamps.store(0); }

Var bilinear_gather(const Var& grid, const Var& xs, const Var& ys) {
    const Tensor& gv = grid.value();
    const Tensor& xv = xs.value();
    const Tensor& yv = ys.value();
    if (gv.rank() != 2) shape_error("bilinear_gather", gv, "grid is not rank-2");
    if (!xv.same_shape(yv)) shape_error("bilinear_gather", xv, yv);
    const std::int64_t h = gv.dim(0), w = gv.dim(1), n = xv.size();
    Tensor out(xv.shape());
    const double* pg = gv.data();
    const double* px = xv.data();
    const double* py = yv.data();
    double* po = out.data();
    std::int64_t clamps = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const BilinearCell c = locate(px[i], py[i], w, h);
        clamps += (c.clamped_x || c.clamped_y) ? 1 : 0;
        const double g00 = pg[c.y0 * w + c.x0], g01 = pg[c.y0 * w + c.x1];
        const double g10 = pg[c.y1 * w + c.x0], g11 = pg[c.y1 * w + c.x1];
        po[i] = (1.0 - c.fy) * ((1.0 - c.fx) * g00 + c.fx * g01) +
                c.fy * ((1.0 - c.fx) * g10 + c.fx * g11);
    }
    if (clamps) g_border_clamps.fetch_add(clamps);

    Tape* tape = pick_tape({&grid, &xs, &ys});
    if (!tape) return Var::constant(std::move(out));
    auto gd = grid.data();
    auto xd = xs.data();
    auto yd = ys.data();
    return make_node("bilinear_gather", tape, std::move(out), [gd, xd, yd, w, h, n](VarData& o) {
        const double* g = o.adj.data();
        const double* pg = gd->value.data();
        const double* px = xd->value.data();
        const double* py = yd->value.data();
        const bool wg = gd->requires_grad, wx = xd->requires_grad, wy = yd->requires_grad;
        if (wg) ensure_adj(*gd);
        if (wx) ensure_adj(*xd);
        if (wy) ensure_adj(*yd);
        double* ag = wg ? gd->adj.data() : nullptr;
        double* ax = wx ? xd->adj.data() : nullptr;
        double* ay = wy ? yd->adj.data() : nullptr;
        for (std::int64_t i = 0; i < n; ++i) {
            const double gi = g[i];
            if (gi == 0.0) continue;
            const BilinearCell c = locate(px[i], py[i], w, h);
            const double g00 = pg[c.y0 * w + c.x0], g01 = pg[c.y0 * w + c.x1];
            const double g10 = pg[c.y1 * w + c.x0], g11 = pg[c.y1 * w + c.x1];
            if (wg) {
                ag[c.y0 * w + c.x0] += gi * (1.0 - c.fy) * (1.0 - c.fx);
                ag[c.y0 * w + c.x1] += gi * (1.0 - c.fy) * c.fx;
                ag[c.y1 * w + c.x0] += gi * c.fy * (1.0 - c.fx);
                ag[c.y1 * w + c.x1] += gi * c.fy * c.fx;
            }
            // position gradients vanish where the query clamped to the border
            if (wx && !c.clamped_x)
                ax[i] += gi * ((1.0 - c.fy) * (g01 - g00) + c.fy * (g11 - g10));
            if (wy && !c.clamped_y)
                ay[i] += gi * ((1.0 - c.fx) * (g10 - g00) + c.fx * (g11 - g01));
        }
    });
}

Var outer_affine(const Var& base, const Var& extent,
                 std::shared_ptr<const std::vector<double>> fracs) {
    const Tensor& bv = base.value();
    const Tensor& ev = extent.value();
    if (bv.rank() != 1 || !bv.same_shape(ev)) shape_error("outer_affine", bv, ev);
    const std::int64_t n = bv.size();
    const std::int64_t m = static_cast<std::int64_t>(fracs->size());
    Tensor out({n, m});
    const double* pb = bv.data();
    const double* pe = ev.data();
    const double* pf = fracs->data();
    double* po = out.data();
    for (std::int64_t i = 0; i < n; ++i) {
        const double b = pb[i], e = pe[i];
        double* row = po + i * m;
        for (std::int64_t k = 0; k < m; ++k) row[k] = b + pf[k] * e;
    }
    Tape* tape = pick_tape({&base, &extent});
    if (!tape) return Var::constant(std::move(out));
    auto bd = base.data();
    auto ed = extent.data();
    return make_node("outer_affine", tape, std::move(out), [bd, ed, fracs, n, m](VarData& o) {
        const double* g = o.adj.data();
        const double* pf = fracs->data();
        const bool wb = bd->requires_grad, we = ed->requires_grad;
        if (wb) ensure_adj(*bd);
        if (we) ensure_adj(*ed);
        double* gb = wb ? bd->adj.data() : nullptr;
        double* ge = we ? ed->adj.data() : nullptr;
        for (std::int64_t i = 0; i < n; ++i) {
            const double* row = g + i * m;
            double sb = 0, se = 0;
            for (std::int64_t k = 0; k < m; ++k) {
                sb += row[k];
                se += row[k] * pf[k];
            }
            if (wb) gb[i] += sb;
            if (we) ge[i] += se;
        }
    });
}

// ---- column ops ---------------------------------------------------------------------

Var stack_cols(const std::vector<Var>& cols) {
    if (cols.empty()) throw std::invalid_argument("stack_cols: no columns");
    const std::int64_t n = cols[0].value().size();
    const std::int64_t m = static_cast<std::int64_t>(cols.size());
    for (const Var& c : cols)
        if (c.value().rank() != 1 || c.value().size() != n)
            shape_error("stack_cols", c.value(), "expected rank-1 of length " + std::to_string(n));
    Tensor out({n, m});
    for (std::int64_t j = 0; j < m; ++j) {
        const double* pc = cols[static_cast<std::size_t>(j)].value().data();
        for (std::int64_t i = 0; i < n; ++i) out.at(i, j) = pc[i];
    }
    Tape* tape = nullptr;
    for (const Var& c : cols)
        if (c.requires_grad()) {
            tape = c.tape();
            break;
        }
    if (!tape) return Var::constant(std::move(out));
    std::vector<std::shared_ptr<VarData>> datas;
    datas.reserve(cols.size());
    for (const Var& c : cols) datas.push_back(c.data());
    return make_node("stack_cols", tape, std::move(out), [datas, n, m](VarData& o) {
        const double* g = o.adj.data();
        for (std::int64_t j = 0; j < m; ++j) {
            auto& cd = *datas[static_cast<std::size_t>(j)];
            if (!cd.requires_grad) continue;
            ensure_adj(cd);
            double* gc = cd.adj.data();
            for (std::int64_t i = 0; i < n; ++i) gc[i] += g[i * m + j];
        }
    });
}

Var take_col(const Var& a, std::int64_t col) {
    const Tensor& av = a.value();
    if (av.rank() != 2 || col < 0 || col >= av.dim(1))
        shape_error("take_col", av, "has no column " + std::to_string(col));
    const std::int64_t n = av.dim(0), m = av.dim(1);
    Tensor out({n});
    for (std::int64_t i = 0; i < n; ++i) out[i] = av.at(i, col);
    Tape* tape = pick_tape({&a});
    if (!tape) return Var::constant(std::move(out));
    auto ad_ = a.data();
    return make_node("take_col", tape, std::move(out), [ad_, col, n, m](VarData& o) {
        if (!ad_->requires_grad) return;
        ensure_adj(*ad_);
        double* ga = ad_->adj.data();
        const double* g = o.adj.data();
        for (std::int64_t i = 0; i < n; ++i) ga[i * m + col] += g[i];
    });
}

// ---- Adam ------------------------------------------------------------------------------

void adam_step(std::vector<Var>& params, AdamState& state, double lr,
               std::pair<double, double> betas, double eps) {
    adam_step_scaled(params, state, lr, {}, betas, eps);
}

void adam_step_scaled(std::vector<Var>& params, AdamState& state, double lr,
                      const std::vector<double>& lr_scale, std::pair<double, double> betas,
                      double eps) {
    if (!lr_scale.empty() && lr_scale.size() != params.size())
        throw std::invalid_argument("adam_step: lr scale count does not match parameter count");
    if (state.m.empty() && state.v.empty()) {
        for (const Var& p : params) {
            state.m.push_back(Tensor::zeros(p.value().shape()));
            state.v.push_back(Tensor::zeros(p.value().shape()));
        }
    }
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw std::invalid_argument("adam_step: state buffer count does not match parameter count");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Var& p = params[i];
        if (!state.m[i].same_shape(p.value()) || !state.v[i].same_shape(p.value()))
            throw std::invalid_argument("adam_step: state shape mismatch for parameter '" +
                                        p.data()->name + "'");
        if (p.grad().has_nan())
            throw std::runtime_error("adam_step: NaN gradient in parameter '" + p.data()->name +
                                     "'; step aborted");
    }

    state.step += 1;
    const double b1 = betas.first, b2 = betas.second;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& value = params[i].data()->value;
        const Tensor& grad = params[i].grad();
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        const double step_lr = lr * (lr_scale.empty() ? 1.0 : lr_scale[i]);
        for (std::int64_t j = 0; j < value.size(); ++j) {
            const double g = grad[j];
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            value[j] -= step_lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
        }
    }
}

} // namespace psir::ad
