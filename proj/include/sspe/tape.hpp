#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "sspe/kernels.hpp"
#include "sspe/matrix.hpp"

namespace sspe {

// Recorded-operation tape for reverse-mode accumulation. Nodes are appended in
// forward order; backward() walks them in reverse. The tape is confined to one
// thread; values are plain fp64 matrices so forward results are bit-stable.
class Tape {
public:
    using Id = std::size_t;

    const Matrix& value(Id id) const { return nodes_[id].dv.value; }
    Matrix& grad(Id id) { return nodes_[id].dv.grad; }
    std::size_t size() const { return nodes_.size(); }

    void reset() { nodes_.clear(); }

    Id leaf(Matrix v) { return push(std::move(v), nullptr); }

    Id matmul(Id a, Id b) {
        Matrix v = sspe::matmul(value(a), value(b));
        return push(std::move(v), [a, b](Tape& t, Id self) {
            const Matrix& g = t.grad(self);
            t.grad(a) += sspe::matmul_nt(g, t.value(b));
            t.grad(b) += sspe::matmul_tn(t.value(a), g);
        });
    }

    // A * B^T
    Id matmul_nt(Id a, Id b) {
        Matrix v = sspe::matmul_nt(value(a), value(b));
        return push(std::move(v), [a, b](Tape& t, Id self) {
            const Matrix& g = t.grad(self);
            t.grad(a) += sspe::matmul(g, t.value(b));
            t.grad(b) += sspe::matmul_tn(g, t.value(a));
        });
    }

    Id add(Id a, Id b) {
        Matrix v = value(a) + value(b);
        return push(std::move(v), [a, b](Tape& t, Id self) {
            t.grad(a) += t.grad(self);
            t.grad(b) += t.grad(self);
        });
    }

    // Broadcast a 1xC row vector over every row of a.
    Id add_rowvec(Id a, Id v) {
        const Matrix& x = value(a);
        const Matrix& r = value(v);
        if (r.rows != 1 || r.cols != x.cols)
            throw std::invalid_argument("add_rowvec: vector shape " + r.shape_str() +
                                        " does not broadcast over " + x.shape_str());
        Matrix out = x;
        for (std::size_t i = 0; i < out.rows; ++i)
            for (std::size_t j = 0; j < out.cols; ++j) out(i, j) += r.data[j];
        return push(std::move(out), [a, v](Tape& t, Id self) {
            const Matrix& g = t.grad(self);
            t.grad(a) += g;
            Matrix& gv = t.grad(v);
            for (std::size_t i = 0; i < g.rows; ++i)
                for (std::size_t j = 0; j < g.cols; ++j) gv.data[j] += g(i, j);
        });
    }

    // Add a matrix that is not tracked by the tape (fixed tables, inputs).
    Id add_const(Id a, const Matrix& c) {
        Matrix v = value(a) + c;
        return push(std::move(v), [a](Tape& t, Id self) { t.grad(a) += t.grad(self); });
    }

    Id scale(Id a, double s) {
        Matrix v = sspe::scale(value(a), s);
        return push(std::move(v), [a, s](Tape& t, Id self) {
            t.grad(a) += sspe::scale(t.grad(self), s);
        });
    }

    Id row_softmax(Id a) {
        Matrix v = softmax_rows(value(a));
        return push(std::move(v), [a](Tape& t, Id self) {
            t.grad(a) += softmax_rows_backward(t.value(self), t.grad(self));
        });
    }

    Id layer_norm(Id x, Id gain, Id bias, double eps) {
        Matrix v = sspe::layer_norm(value(x), value(gain), value(bias), eps);
        return push(std::move(v), [x, gain, bias, eps](Tape& t, Id self) {
            LayerNormGrads g = layer_norm_backward(t.value(x), t.value(gain), eps, t.grad(self));
            t.grad(x) += g.dx;
            t.grad(gain) += g.dgain;
            t.grad(bias) += g.dbias;
        });
    }

    Id gelu(Id a) {
        Matrix v = sspe::gelu(value(a));
        return push(std::move(v), [a](Tape& t, Id self) {
            t.grad(a) += gelu_backward(t.value(a), t.grad(self));
        });
    }

    Id slice_cols(Id a, std::size_t c0, std::size_t n) {
        const Matrix& x = value(a);
        Matrix out(x.rows, n);
        for (std::size_t i = 0; i < x.rows; ++i)
            for (std::size_t j = 0; j < n; ++j) out(i, j) = x(i, c0 + j);
        return push(std::move(out), [a, c0, n](Tape& t, Id self) {
            const Matrix& g = t.grad(self);
            Matrix& ga = t.grad(a);
            for (std::size_t i = 0; i < g.rows; ++i)
                for (std::size_t j = 0; j < n; ++j) ga(i, c0 + j) += g(i, j);
        });
    }

    Id concat_cols(const std::vector<Id>& parts) {
        std::size_t total = 0;
        for (Id p : parts) total += value(p).cols;
        Matrix out(value(parts.front()).rows, total);
        std::size_t off = 0;
        for (Id p : parts) {
            const Matrix& x = value(p);
            for (std::size_t i = 0; i < x.rows; ++i)
                for (std::size_t j = 0; j < x.cols; ++j) out(i, off + j) = x(i, j);
            off += x.cols;
        }
        std::vector<Id> ps = parts;
        return push(std::move(out), [ps](Tape& t, Id self) {
            const Matrix& g = t.grad(self);
            std::size_t off = 0;
            for (Id p : ps) {
                Matrix& gp = t.grad(p);
                for (std::size_t i = 0; i < gp.rows; ++i)
                    for (std::size_t j = 0; j < gp.cols; ++j) gp(i, j) += g(i, off + j);
                off += gp.cols;
            }
        });
    }

    Id concat_rows(Id top, Id bottom) {
        const Matrix& a = value(top);
        const Matrix& b = value(bottom);
        Matrix out(a.rows + b.rows, a.cols);
        for (std::size_t i = 0; i < a.rows; ++i)
            for (std::size_t j = 0; j < a.cols; ++j) out(i, j) = a(i, j);
        for (std::size_t i = 0; i < b.rows; ++i)
            for (std::size_t j = 0; j < b.cols; ++j) out(a.rows + i, j) = b(i, j);
        return push(std::move(out), [top, bottom](Tape& t, Id self) {
            const Matrix& g = t.grad(self);
            Matrix& ga = t.grad(top);
            Matrix& gb = t.grad(bottom);
            for (std::size_t i = 0; i < ga.rows; ++i)
                for (std::size_t j = 0; j < ga.cols; ++j) ga(i, j) += g(i, j);
            for (std::size_t i = 0; i < gb.rows; ++i)
                for (std::size_t j = 0; j < gb.cols; ++j) gb(i, j) += g(ga.rows + i, j);
        });
    }

    Id select_row(Id a, std::size_t r) {
        const Matrix& x = value(a);
        Matrix out(1, x.cols);
        for (std::size_t j = 0; j < x.cols; ++j) out.data[j] = x(r, j);
        return push(std::move(out), [a, r](Tape& t, Id self) {
            const Matrix& g = t.grad(self);
            Matrix& ga = t.grad(a);
            for (std::size_t j = 0; j < g.cols; ++j) ga(r, j) += g.data[j];
        });
    }

    // Rows of a tracked table selected by index; index -1 yields a zero row
    // (used for "no PE" holes) and receives no gradient.
    Id gather_rows(Id table, std::vector<int> idx) {
        const Matrix& tb = value(table);
        Matrix out(idx.size(), tb.cols);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0) continue;
            const double* src = tb.row_ptr(static_cast<std::size_t>(idx[i]));
            double* dst = out.row_ptr(i);
            for (std::size_t j = 0; j < tb.cols; ++j) dst[j] = src[j];
        }
        return push(std::move(out), [table, idx = std::move(idx)](Tape& t, Id self) {
            const Matrix& g = t.grad(self);
            Matrix& gt = t.grad(table);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                if (idx[i] < 0) continue;
                double* dst = gt.row_ptr(static_cast<std::size_t>(idx[i]));
                const double* src = g.row_ptr(i);
                for (std::size_t j = 0; j < g.cols; ++j) dst[j] += src[j];
            }
        });
    }

    // T x T attention-logit bias from an offset table: entry (i,j) is the mean
    // of table row idx[i*T+j] over columns [c0, c0+n). Content-independent.
    Id offset_bias(Id table, std::vector<int> idx, std::size_t t_len, std::size_t c0,
                   std::size_t n) {
        const Matrix& tb = value(table);
        Matrix out(t_len, t_len);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < t_len; ++i)
            for (std::size_t j = 0; j < t_len; ++j) {
                const double* src = tb.row_ptr(static_cast<std::size_t>(idx[i * t_len + j]));
                double acc = 0.0;
                for (std::size_t k = 0; k < n; ++k) acc += src[c0 + k];
                out(i, j) = acc * inv_n;
            }
        return push(std::move(out),
                    [table, idx = std::move(idx), t_len, c0, n](Tape& t, Id self) {
                        const Matrix& g = t.grad(self);
                        Matrix& gt = t.grad(table);
                        const double inv_n = 1.0 / static_cast<double>(n);
                        for (std::size_t i = 0; i < t_len; ++i)
                            for (std::size_t j = 0; j < t_len; ++j) {
                                const double share = g(i, j) * inv_n;
                                double* dst =
                                    gt.row_ptr(static_cast<std::size_t>(idx[i * t_len + j]));
                                for (std::size_t k = 0; k < n; ++k) dst[c0 + k] += share;
                            }
                    });
    }

    // Scalar -sum_j w_j * log softmax(logits)_j, fused for stability.
    // Gradient w.r.t. logits is softmax(logits) - w (scaled by upstream).
    Id nll_from_logits(Id logits, const Matrix& weights) {
        const Matrix& z = value(logits);
        z.require_same_shape(weights, "nll_from_logits");
        Matrix p = softmax_rows(z);
        double loss = 0.0;
        double mx = z.data[0];
        for (double v : z.data) mx = std::max(mx, v);
        double lse = 0.0;
        for (double v : z.data) lse += std::exp(v - mx);
        lse = mx + std::log(lse);
        for (std::size_t j = 0; j < z.data.size(); ++j)
            loss += weights.data[j] * (lse - z.data[j]);
        Matrix out(1, 1);
        out.data[0] = loss;
        return push(std::move(out), [logits, p = std::move(p), weights](Tape& t, Id self) {
            const double g = t.grad(self).data[0];
            Matrix& gl = t.grad(logits);
            for (std::size_t j = 0; j < gl.data.size(); ++j)
                gl.data[j] += g * (p.data[j] - weights.data[j]);
        });
    }

    // Scalar c0 + sum_i coeff_i * node_i over 1x1 nodes.
    Id weighted_sum(const std::vector<Id>& ids, const std::vector<double>& coeffs) {
        Matrix out(1, 1);
        for (std::size_t i = 0; i < ids.size(); ++i) out.data[0] += coeffs[i] * value(ids[i]).data[0];
        std::vector<Id> is = ids;
        std::vector<double> cs = coeffs;
        return push(std::move(out), [is, cs](Tape& t, Id self) {
            const double g = t.grad(self).data[0];
            for (std::size_t i = 0; i < is.size(); ++i) t.grad(is[i]).data[0] += g * cs[i];
        });
    }

    // Seeds d(root)/d(root) = 1 and accumulates gradients into every node.
    void backward(Id root) {
        if (value(root).size() != 1)
            throw std::invalid_argument("backward: root must be scalar (1x1)");
        Matrix seed(1, 1);
        seed.data[0] = 1.0;
        backward_seeded(root, seed);
    }

    // Seeds an arbitrary output gradient and runs the reverse sweep.
    void backward_seeded(Id root, const Matrix& seed) {
        value(root).require_same_shape(seed, "backward_seeded");
        grad(root) = seed;
        for (std::size_t i = root + 1; i-- > 0;) {
            if (nodes_[i].backward) nodes_[i].backward(*this, i);
        }
    }

private:
    struct Node {
        DualValue dv;
        std::function<void(Tape&, Id)> backward;
    };

    Id push(Matrix v, std::function<void(Tape&, Id)> bw) {
        Node n;
        n.dv.grad = Matrix(v.rows, v.cols);
        n.dv.value = std::move(v);
        n.backward = std::move(bw);
        nodes_.push_back(std::move(n));
        return nodes_.size() - 1;
    }

    std::vector<Node> nodes_;
};

}  // namespace sspe
