#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sspe/matrix.hpp"

namespace sspe {

// Value plus gradient of the same shape; the unit every tape node carries.
struct DualValue {
    Matrix value;
    Matrix grad;
};

// Row-wise softmax, stabilized by row-max subtraction.
inline Matrix softmax_rows(const Matrix& m) {
    if (m.empty()) throw std::invalid_argument("softmax_rows: empty input");
    Matrix out(m.rows, m.cols);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* in = m.row_ptr(r);
        double* o = out.row_ptr(r);
        double mx = in[0];
        for (std::size_t c = 1; c < m.cols; ++c) mx = std::max(mx, in[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) {
            o[c] = std::exp(in[c] - mx);
            sum += o[c];
        }
        const double inv = 1.0 / sum;
        for (std::size_t c = 0; c < m.cols; ++c) o[c] *= inv;
    }
    return out;
}

// d(loss)/d(z) given p = softmax_rows(z) and g = d(loss)/d(p).
inline Matrix softmax_rows_backward(const Matrix& p, const Matrix& g) {
    Matrix out(p.rows, p.cols);
    for (std::size_t r = 0; r < p.rows; ++r) {
        const double* pr = p.row_ptr(r);
        const double* gr = g.row_ptr(r);
        double* o = out.row_ptr(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < p.cols; ++c) dot += pr[c] * gr[c];
        for (std::size_t c = 0; c < p.cols; ++c) o[c] = pr[c] * (gr[c] - dot);
    }
    return out;
}

// Per-row normalization followed by a per-column affine map.
inline Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
    if (gain.size() != x.cols || bias.size() != x.cols)
        throw std::invalid_argument("layer_norm: gain/bias length must equal cols");
    Matrix out(x.rows, x.cols);
    const double inv_n = 1.0 / static_cast<double>(x.cols);
    for (std::size_t r = 0; r < x.rows; ++r) {
        const double* in = x.row_ptr(r);
        double* o = out.row_ptr(r);
        double mean = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) mean += in[c];
        mean *= inv_n;
        double var = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) {
            const double d = in[c] - mean;
            var += d * d;
        }
        var *= inv_n;
        const double inv_sd = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < x.cols; ++c)
            o[c] = (in[c] - mean) * inv_sd * gain.data[c] + bias.data[c];
    }
    return out;
}

struct LayerNormGrads {
    Matrix dx;
    Matrix dgain;
    Matrix dbias;
};

inline LayerNormGrads layer_norm_backward(const Matrix& x, const Matrix& gain, double eps,
                                          const Matrix& g) {
    LayerNormGrads out{Matrix(x.rows, x.cols), Matrix(1, x.cols), Matrix(1, x.cols)};
    const double inv_n = 1.0 / static_cast<double>(x.cols);
    std::vector<double> xhat(x.cols), dxhat(x.cols);
    for (std::size_t r = 0; r < x.rows; ++r) {
        const double* in = x.row_ptr(r);
        const double* gr = g.row_ptr(r);
        double* dx = out.dx.row_ptr(r);
        double mean = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) mean += in[c];
        mean *= inv_n;
        double var = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) {
            const double d = in[c] - mean;
            var += d * d;
        }
        var *= inv_n;
        const double inv_sd = 1.0 / std::sqrt(var + eps);
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (std::size_t c = 0; c < x.cols; ++c) {
            xhat[c] = (in[c] - mean) * inv_sd;
            dxhat[c] = gr[c] * gain.data[c];
            mean_dxhat += dxhat[c];
            mean_dxhat_xhat += dxhat[c] * xhat[c];
            out.dgain.data[c] += gr[c] * xhat[c];
            out.dbias.data[c] += gr[c];
        }
        mean_dxhat *= inv_n;
        mean_dxhat_xhat *= inv_n;
        for (std::size_t c = 0; c < x.cols; ++c)
            dx[c] = inv_sd * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
    }
    return out;
}

// Exact Gaussian-CDF GELU: x * Phi(x).
inline double gelu_scalar(double x) {
    return x * 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
}

inline double gelu_deriv_scalar(double x) {
    const double phi_cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475244));
    const double phi_pdf = std::exp(-0.5 * x * x) * 0.3989422804014326779;
    return phi_cdf + x * phi_pdf;
}

inline Matrix gelu(const Matrix& x) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i) out.data[i] = gelu_scalar(x.data[i]);
    return out;
}

inline Matrix gelu_backward(const Matrix& x, const Matrix& g) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        out.data[i] = g.data[i] * gelu_deriv_scalar(x.data[i]);
    return out;
}

}  // namespace sspe
