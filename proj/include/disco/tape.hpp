#pragma once

#include <functional>
#include <vector>

#include "disco/matrix.hpp"

namespace disco {

// Negative entries above this tolerance are treated as rounding noise by
// sqrt_clamped; anything more negative is a numeric-domain error.
inline constexpr double kEpsClamp = 1e-12;

class Tape;

// Lightweight handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    int index = -1;
};

// Reverse-mode tape over Matrix values. Rebuilt per training step; nodes are
// appended in topological order by construction, so the backward pass is a
// single reverse sweep.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Matrix value);            // participates in gradients
    Var constant(Matrix value);        // gradient is exactly zero
    Var scalar_constant(double value); // 1x1 constant

    const Matrix& value(Var v) const;
    // Adjoint of v after backward(); zeros if v is constant or unreachable.
    Matrix gradient(Var v) const;
    bool needs_grad(Var v) const;
    std::size_t node_count() const { return nodes_.size(); }

    // root must be 1x1; seeds its adjoint with 1 and sweeps in reverse.
    void backward(Var root);

    // --- internal plumbing used by the op free functions ---
    using Backprop = std::function<void(Tape&, int self)>;
    Var emit(Matrix value, std::vector<int> parents, Backprop backprop);
    const Matrix& node_value(int i) const { return nodes_[i].value; }
    Matrix& adjoint(int i);
    bool node_needs_grad(int i) const { return nodes_[i].needs_grad; }
    void accumulate(int i, const Matrix& g);

private:
    struct Node {
        Matrix value;
        Matrix adj;  // empty until touched
        std::vector<int> parents;
        bool needs_grad = false;
        Backprop backprop;
    };
    std::vector<Node> nodes_;
};

// Primitive operations. All differentiable; constants stay constant.
Var matmul(Var a, Var b);
Var hadamard(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double c);
Var scalar_mul(Var s, Var m);  // s is 1x1, broadcast over m
Var row_sum(Var a);            // n x m -> n x 1
Var mean_all(Var a);           // -> 1x1
Var sqrt_clamped(Var a);       // entries < -kEpsClamp are a domain error
Var clamp_nonneg(Var a);       // max(x, 0), zero gradient on the clamped branch
Var div_safe(Var a, Var b);    // entrywise a/b with 0/0 := 0 (zero gradient there)
Var pairwise_dist(Var points); // n x d points -> n x n Euclidean distances
Var relu(Var a);
Var tanh_act(Var a);
Var softmax_rows(Var logits);
Var softmax_xent(Var logits, const std::vector<int>& labels);  // mean NLL, 1x1

// Max over entries of |analytic - central| / (|analytic| + |central| + 1e-12)
// for the scalar function f evaluated at `at`.
using ScalarFn = std::function<Var(Tape&, Var)>;
double finite_diff_check(const ScalarFn& f, const Matrix& at, double step);

}  // namespace disco
