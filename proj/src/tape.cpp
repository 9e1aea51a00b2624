#include "disco/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace disco {
namespace {

void require_same_tape(Var a, Var b, const char* op) {
    if (a.tape == nullptr || a.tape != b.tape) {
        throw ContractError(std::string(op) + ": operands live on different tapes");
    }
}

}  // namespace

Var Tape::leaf(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, {}, true, nullptr});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, {}, false, nullptr});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::scalar_constant(double value) { return constant(Matrix(1, 1, value)); }

const Matrix& Tape::value(Var v) const { return nodes_[v.index].value; }

Matrix Tape::gradient(Var v) const {
    const Node& n = nodes_[v.index];
    if (n.adj.empty()) return Matrix(n.value.rows(), n.value.cols());
    return n.adj;
}

bool Tape::needs_grad(Var v) const { return nodes_[v.index].needs_grad; }

Var Tape::emit(Matrix value, std::vector<int> parents, Backprop backprop) {
    bool needs = false;
    for (const int p : parents) needs = needs || nodes_[p].needs_grad;
    nodes_.push_back(Node{std::move(value), {}, std::move(parents), needs,
                          needs ? std::move(backprop) : nullptr});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::adjoint(int i) {
    Node& n = nodes_[i];
    if (n.adj.empty()) n.adj = Matrix(n.value.rows(), n.value.cols());
    return n.adj;
}

void Tape::accumulate(int i, const Matrix& g) {
    if (!nodes_[i].needs_grad) return;  // constants receive no gradient
    Matrix& a = adjoint(i);
    a = disco::add(a, g);
}

void Tape::backward(Var root) {
    if (root.tape != this) throw ContractError("backward: root from another tape");
    const Node& r = nodes_[root.index];
    if (r.value.rows() != 1 || r.value.cols() != 1) {
        throw ContractError("backward: root must be a scalar node");
    }
    if (!r.needs_grad) return;
    adjoint(root.index).at(0, 0) = 1.0;
    for (int i = root.index; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.adj.empty() || !n.backprop) continue;
        n.backprop(*this, i);
    }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
    require_same_tape(a, b, "matmul");
    Tape& t = *a.tape;
    Matrix out = matmul(t.value(a), t.value(b));
    const int ia = a.index, ib = b.index;
    return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.adjoint(self);
        if (t.node_needs_grad(ia)) t.accumulate(ia, matmul(g, transpose(t.node_value(ib))));
        if (t.node_needs_grad(ib)) t.accumulate(ib, matmul(transpose(t.node_value(ia)), g));
    });
}

Var hadamard(Var a, Var b) {
    require_same_tape(a, b, "hadamard");
    Tape& t = *a.tape;
    Matrix out = hadamard(t.value(a), t.value(b));
    const int ia = a.index, ib = b.index;
    return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.adjoint(self);
        if (t.node_needs_grad(ia)) t.accumulate(ia, hadamard(g, t.node_value(ib)));
        if (t.node_needs_grad(ib)) t.accumulate(ib, hadamard(g, t.node_value(ia)));
    });
}

Var add(Var a, Var b) {
    require_same_tape(a, b, "add");
    Tape& t = *a.tape;
    Matrix out = add(t.value(a), t.value(b));
    const int ia = a.index, ib = b.index;
    return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.adjoint(self);
        t.accumulate(ia, g);
        t.accumulate(ib, g);
    });
}

Var sub(Var a, Var b) {
    require_same_tape(a, b, "subtract");
    Tape& t = *a.tape;
    Matrix out = sub(t.value(a), t.value(b));
    const int ia = a.index, ib = b.index;
    return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.adjoint(self);
        t.accumulate(ia, g);
        t.accumulate(ib, scale(g, -1.0));
    });
}

Var scale(Var a, double c) {
    Tape& t = *a.tape;
    Matrix out = scale(t.value(a), c);
    const int ia = a.index;
    return t.emit(std::move(out), {ia}, [ia, c](Tape& t, int self) {
        t.accumulate(ia, scale(t.adjoint(self), c));
    });
}

Var scalar_mul(Var s, Var m) {
    require_same_tape(s, m, "scalar_mul");
    Tape& t = *s.tape;
    const Matrix& sv = t.value(s);
    if (sv.rows() != 1 || sv.cols() != 1) throw DimensionError("scalar_mul: s must be 1x1");
    Matrix out = scale(t.value(m), sv.at(0, 0));
    const int is = s.index, im = m.index;
    return t.emit(std::move(out), {is, im}, [is, im](Tape& t, int self) {
        const Matrix& g = t.adjoint(self);
        if (t.node_needs_grad(is)) {
            Matrix gs(1, 1, dot_all(g, t.node_value(im)));
            t.accumulate(is, gs);
        }
        if (t.node_needs_grad(im)) {
            t.accumulate(im, scale(g, t.node_value(is).at(0, 0)));
        }
    });
}

Var row_sum(Var a) {
    Tape& t = *a.tape;
    Matrix out = row_sum(t.value(a));
    const int ia = a.index;
    return t.emit(std::move(out), {ia}, [ia](Tape& t, int self) {
        const Matrix& g = t.adjoint(self);  // n x 1
        const Matrix& v = t.node_value(ia);
        Matrix ga(v.rows(), v.cols());
        for (std::size_t i = 0; i < v.rows(); ++i) {
            const double gi = g.at(i, 0);
            for (std::size_t j = 0; j < v.cols(); ++j) ga.at(i, j) = gi;
        }
        t.accumulate(ia, ga);
    });
}

Var mean_all(Var a) {
    Tape& t = *a.tape;
    Matrix out(1, 1, mean_all(t.value(a)));
    const int ia = a.index;
    return t.emit(std::move(out), {ia}, [ia](Tape& t, int self) {
        const double g = t.adjoint(self).at(0, 0);
        const Matrix& v = t.node_value(ia);
        t.accumulate(ia, Matrix(v.rows(), v.cols(), g / static_cast<double>(v.size())));
    });
}

Var sqrt_clamped(Var a) {
    Tape& t = *a.tape;
    const Matrix& v = t.value(a);
    Matrix out(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = v[i];
        if (x < -kEpsClamp) {
            throw NumericDomainError("sqrt of entry below -eps_clamp: " + std::to_string(x));
        }
        out[i] = x > 0.0 ? std::sqrt(x) : 0.0;
    }
    const int ia = a.index;
    return t.emit(std::move(out), {ia}, [ia](Tape& t, int self) {
        const Matrix& g = t.adjoint(self);
        const Matrix& y = t.node_value(self);
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] = y[i] > 0.0 ? g[i] * 0.5 / y[i] : 0.0;
        }
        t.accumulate(ia, ga);
    });
}

Var clamp_nonneg(Var a) {
    Tape& t = *a.tape;
    const Matrix& v = t.value(a);
    Matrix out(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
    const int ia = a.index;
    return t.emit(std::move(out), {ia}, [ia](Tape& t, int self) {
        const Matrix& g = t.adjoint(self);
        const Matrix& v = t.node_value(ia);
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = v[i] > 0.0 ? g[i] : 0.0;
        t.accumulate(ia, ga);
    });
}

Var div_safe(Var a, Var b) {
    require_same_tape(a, b, "divide-safe");
    Tape& t = *a.tape;
    const Matrix& va = t.value(a);
    const Matrix& vb = t.value(b);
    if (!va.same_shape(vb)) throw DimensionError("divide-safe: shape mismatch");
    Matrix out(va.rows(), va.cols());
    for (std::size_t i = 0; i < va.size(); ++i) {
        out[i] = vb[i] == 0.0 ? 0.0 : va[i] / vb[i];
    }
    const int ia = a.index, ib = b.index;
    return t.emit(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
        const Matrix& g = t.adjoint(self);
        const Matrix& va = t.node_value(ia);
        const Matrix& vb = t.node_value(ib);
        if (t.node_needs_grad(ia)) {
            Matrix ga(g.rows(), g.cols());
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] = vb[i] == 0.0 ? 0.0 : g[i] / vb[i];
            }
            t.accumulate(ia, ga);
        }
        if (t.node_needs_grad(ib)) {
            Matrix gb(g.rows(), g.cols());
            for (std::size_t i = 0; i < g.size(); ++i) {
                gb[i] = vb[i] == 0.0 ? 0.0 : -g[i] * va[i] / (vb[i] * vb[i]);
            }
            t.accumulate(ib, gb);
        }
    });
}

Var pairwise_dist(Var points) {
    Tape& t = *points.tape;
    const Matrix& p = t.value(points);
    if (!p.all_finite()) throw InputError("pairwise_dist: non-finite coordinate");
    const std::size_t n = p.rows();
    const std::size_t d = p.cols();
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = p.at(i, k) - p.at(j, k);
                s += diff * diff;
            }
            const double dist = std::sqrt(s);
            out.at(i, j) = dist;
            out.at(j, i) = dist;
        }
    }
    const int ip = points.index;
    return t.emit(std::move(out), {ip}, [ip](Tape& t, int self) {
        const Matrix& g = t.adjoint(self);
        const Matrix& dmat = t.node_value(self);
        const Matrix& p = t.node_value(ip);
        const std::size_t n = p.rows();
        const std::size_t d = p.cols();
        Matrix gp(n, d);
        // subgradient 0 at coincident points (dist == 0)
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double dist = dmat.at(i, j);
                if (dist <= 0.0) continue;
                const double w = (g.at(i, j) + g.at(j, i)) / dist;
                if (w == 0.0) continue;
                for (std::size_t k = 0; k < d; ++k) {
                    gp.at(i, k) += w * (p.at(i, k) - p.at(j, k));
                }
            }
        }
        t.accumulate(ip, gp);
    });
}

Var relu(Var a) {
    Tape& t = *a.tape;
    const Matrix& v = t.value(a);
    Matrix out(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
    const int ia = a.index;
    return t.emit(std::move(out), {ia}, [ia](Tape& t, int self) {
        const Matrix& g = t.adjoint(self);
        const Matrix& v = t.node_value(ia);
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = v[i] > 0.0 ? g[i] : 0.0;
        t.accumulate(ia, ga);
    });
}

Var tanh_act(Var a) {
    Tape& t = *a.tape;
    const Matrix& v = t.value(a);
    Matrix out(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
    const int ia = a.index;
    return t.emit(std::move(out), {ia}, [ia](Tape& t, int self) {
        const Matrix& g = t.adjoint(self);
        const Matrix& y = t.node_value(self);
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * (1.0 - y[i] * y[i]);
        t.accumulate(ia, ga);
    });
}

Var softmax_rows(Var logits) {
    Tape& t = *logits.tape;
    const Matrix& z = t.value(logits);
    Matrix out(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double m = z.at(i, 0);
        for (std::size_t j = 1; j < z.cols(); ++j) m = std::max(m, z.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) {
            out.at(i, j) = std::exp(z.at(i, j) - m);
            s += out.at(i, j);
        }
        for (std::size_t j = 0; j < z.cols(); ++j) out.at(i, j) /= s;
    }
    const int iz = logits.index;
    return t.emit(std::move(out), {iz}, [iz](Tape& t, int self) {
        const Matrix& g = t.adjoint(self);
        const Matrix& p = t.node_value(self);
        Matrix gz(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) dot += g.at(i, j) * p.at(i, j);
            for (std::size_t j = 0; j < g.cols(); ++j) {
                gz.at(i, j) = p.at(i, j) * (g.at(i, j) - dot);
            }
        }
        t.accumulate(iz, gz);
    });
}

Var softmax_xent(Var logits, const std::vector<int>& labels) {
    Tape& t = *logits.tape;
    const Matrix& z = t.value(logits);
    const std::size_t n = z.rows();
    const std::size_t k = z.cols();
    if (labels.size() != n) throw DimensionError("softmax_xent: label count mismatch");
    Matrix probs(n, k);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k) {
            throw InputError("softmax_xent: class index out of range");
        }
        double m = z.at(i, 0);
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, z.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            probs.at(i, j) = std::exp(z.at(i, j) - m);
            s += probs.at(i, j);
        }
        for (std::size_t j = 0; j < k; ++j) probs.at(i, j) /= s;
        loss += m + std::log(s) - z.at(i, static_cast<std::size_t>(y));
    }
    loss /= static_cast<double>(n);
    const int iz = logits.index;
    return t.emit(Matrix(1, 1, loss), {iz},
                  [iz, labels, probs = std::move(probs)](Tape& t, int self) {
                      const double g = t.adjoint(self).at(0, 0);
                      const std::size_t n = probs.rows();
                      Matrix gz = scale(probs, g / static_cast<double>(n));
                      for (std::size_t i = 0; i < n; ++i) {
                          gz.at(i, static_cast<std::size_t>(labels[i])) -=
                              g / static_cast<double>(n);
                      }
                      t.accumulate(iz, gz);
                  });
}

double finite_diff_check(const ScalarFn& f, const Matrix& at, double step) {
    if (!(step > 0.0)) throw ContractError("finite_diff_check: step must be positive");
    Matrix analytic;
    {
        Tape tape;
        Var x = tape.leaf(at);
        Var y = f(tape, x);
        if (tape.value(y).size() != 1) {
            throw ContractError("finite_diff_check: f must return a scalar");
        }
        tape.backward(y);
        analytic = tape.gradient(x);
    }
    auto eval = [&f](const Matrix& m) {
        Tape tape;
        Var x = tape.leaf(m);
        return tape.value(f(tape, x)).at(0, 0);
    };
    double worst = 0.0;
    Matrix probe = at;
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + step;
        const double fp = eval(probe);
        probe[i] = orig - step;
        const double fm = eval(probe);
        probe[i] = orig;
        const double central = (fp - fm) / (2.0 * step);
        const double rel =
            std::abs(analytic[i] - central) / (std::abs(analytic[i]) + std::abs(central) + 1e-12);
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace disco
