#pragma once

#include "psir/tensor.hpp"

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace psir::ad {

class Tape;

struct VarData {
    Tensor value;
    Tensor grad;  // persistent accumulator, always value-shaped for leaves/nodes
    Tensor adj;   // scratch adjoint used inside a single backward sweep
    bool requires_grad = false;
    Tape* tape = nullptr;
    std::string name;  // leaves only; used for optimizer diagnostics
};

/// Handle to a value in the computation graph. Copies are shallow; the
/// underlying storage is shared. Constants carry no tape and never
/// accumulate gradient.
class Var {
public:
    Var() = default;

    static Var constant(Tensor value);
    static Var constant(double value) { return constant(Tensor::scalar(value)); }

    bool defined() const { return static_cast<bool>(d_); }
    const Tensor& value() const { return d_->value; }
    const Tensor& grad() const { return d_->grad; }
    Tensor& mutable_value() { return d_->value; }
    bool requires_grad() const { return d_ && d_->requires_grad; }
    Tape* tape() const { return d_ ? d_->tape : nullptr; }
    const std::string& name() const { return d_->name; }

    const std::shared_ptr<VarData>& data() const { return d_; }

    /// Scalar convenience: value of a single-element Var.
    double item() const;

private:
    friend class Tape;
    friend Var make_node(const char* op, Tape* tape, Tensor value,
                         std::function<void(VarData&)> backward);
    explicit Var(std::shared_ptr<VarData> d) : d_(std::move(d)) {}
    std::shared_ptr<VarData> d_;
};

struct TapeNode {
    const char* op;
    std::shared_ptr<VarData> out;
    std::function<void(VarData&)> backward;  // reads out.adj, accumulates into input adj
};

/// Append-only record of primitive operations. Nodes are stored in the
/// order they were executed, so operands always precede their consumers
/// and one reverse sweep visits every node exactly once. The tape is
/// rebuilt from scratch for every loss evaluation (define-by-run).
class Tape {
public:
    /// Registers a differentiable leaf. `name` is reported by the optimizer
    /// on gradient failures.
    Var leaf(Tensor value, std::string name = {});

    /// Accumulates d(root)/d(var) into every reachable Var's grad. Running
    /// twice without re-recording adds the gradient twice. Throws if root is
    /// not scalar-valued.
    void backward(const Var& root);

    void clear();
    std::size_t node_count() const { return nodes_.size(); }
    const std::vector<Var>& leaves() const { return leaves_; }

private:
    friend Var make_node(const char* op, Tape* tape, Tensor value,
                         std::function<void(VarData&)> backward);
    std::vector<TapeNode> nodes_;
    std::vector<Var> leaves_;
};

// ---- primitive operations ------------------------------------------------
// Binary elementwise ops broadcast numpy-style on trailing dimensions.
// Every op validates shapes and reports the primitive plus offending shapes.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var minimum(const Var& a, const Var& b);  // ties take a's subgradient

Var neg(const Var& a);
Var abs(const Var& a);        // subgradient 0 at 0
Var exp(const Var& a);
Var sqrt(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var pow(const Var& a, double exponent);
Var max_const(const Var& a, double c);  // max(x,c); subgradient 0 at x == c

Var matmul(const Var& a, const Var& b);  // rank-2 only
Var transpose(const Var& a);             // rank-2 only

Var sum(const Var& a);         // full reduction to a scalar
Var mean(const Var& a);        // full reduction to a scalar
Var min_reduce(const Var& a);  // full min; ties route to the first minimum
Var min_last(const Var& a);    // min over the last axis; first-tie rule

Var reshape(const Var& a, std::vector<std::int64_t> shape);
Var broadcast_to(const Var& a, const std::vector<std::int64_t>& shape);

/// out[i] = a[flat idx[i]]; gradient scatter-adds back.
Var gather(const Var& a, std::shared_ptr<const std::vector<std::int64_t>> idx);
Var gather(const Var& a, std::vector<std::int64_t> idx);
/// out[idx[i]] += a[i] over a fresh zero tensor of `out_size` elements.
Var scatter_add(const Var& a, std::shared_ptr<const std::vector<std::int64_t>> idx,
                std::int64_t out_size);

/// Bilinear sample of a rank-2 grid at continuous (x=col, y=row) positions.
/// Out-of-range positions clamp to the border (and bump a debug counter).
/// Differentiable w.r.t. the grid and both coordinate arrays.
Var bilinear_gather(const Var& grid, const Var& xs, const Var& ys);

/// out[i,k] = base[i] + fracs[k] * extent[i] for rank-1 base/extent [n] and a
/// constant fraction vector [m]. One fused node for the ray-sample grids.
Var outer_affine(const Var& base, const Var& extent,
                 std::shared_ptr<const std::vector<double>> fracs);

Var stack_cols(const std::vector<Var>& cols);   // m rank-1 [n] -> [n,m]
Var take_col(const Var& a, std::int64_t col);   // [n,m] -> [n]

// convenience arithmetic
inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator+(const Var& a, double b) { return add(a, Var::constant(b)); }
inline Var operator-(const Var& a, double b) { return sub(a, Var::constant(b)); }
inline Var operator*(const Var& a, double b) { return mul(a, Var::constant(b)); }
inline Var operator/(const Var& a, double b) { return div(a, Var::constant(b)); }
inline Var operator+(double a, const Var& b) { return add(Var::constant(a), b); }
inline Var operator-(double a, const Var& b) { return sub(Var::constant(a), b); }
inline Var operator*(double a, const Var& b) { return mul(Var::constant(a), b); }
inline Var operator/(double a, const Var& b) { return div(Var::constant(a), b); }
inline Var operator-(const Var& a) { return neg(a); }

// ---- Adam ------------------------------------------------------------------

struct AdamState {
    std::int64_t step = 0;
    std::vector<Tensor> m;  // first moments, one per parameter
    std::vector<Tensor> v;  // second moments
};

/// Standard Adam update applied in place to the leaves' values using their
/// accumulated grads. Moment buffers are created on first use and must keep
/// matching shapes afterwards. A NaN in any gradient aborts the whole step
/// before any parameter is touched; the exception names the parameter.
void adam_step(std::vector<Var>& params, AdamState& state, double lr,
               std::pair<double, double> betas = {0.9, 0.999}, double eps = 1e-8);

/// Same update with a per-parameter learning-rate multiplier (parameter
/// groups). `lr_scale` must match the parameter count.
void adam_step_scaled(std::vector<Var>& params, AdamState& state, double lr,
                      const std::vector<double>& lr_scale,
                      std::pair<double, double> betas = {0.9, 0.999}, double eps = 1e-8);

// debug counter for border-clamped bilinear queries
std::int64_t border_clamp_count();
void reset_border_clamp_count();

} // namespace psir::ad
