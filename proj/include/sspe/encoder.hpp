#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sspe/matrix.hpp"
#include "sspe/pgm.hpp"
#include "sspe/plan.hpp"
#include "sspe/pos_embed.hpp"
#include "sspe/rng.hpp"
#include "sspe/tape.hpp"

namespace sspe {

constexpr double kLayerNormEps = 1e-5;

// An image decomposed into non-overlapping square patches, raster order.
// Token #k (1-based) covers grid cell ((k-1) / grid_cols, (k-1) % grid_cols);
// tokens row k-1 holds that patch flattened row-major.
struct TokenGrid {
    int grid_rows = 0;
    int grid_cols = 0;
    int patch_pixels = 0;
    Matrix tokens;

    int num_patches() const { return grid_rows * grid_cols; }
};

inline TokenGrid embed_patches(const Image& img, int patch_pixels) {
    if (patch_pixels <= 0 || img.height % patch_pixels != 0 || img.width % patch_pixels != 0)
        throw std::invalid_argument("embed_patches: image dimensions not divisible by patch size");
    TokenGrid g;
    g.grid_rows = img.height / patch_pixels;
    g.grid_cols = img.width / patch_pixels;
    g.patch_pixels = patch_pixels;
    const int pd = patch_pixels * patch_pixels;
    g.tokens = Matrix(static_cast<std::size_t>(g.num_patches()), static_cast<std::size_t>(pd));
    for (int k = 0; k < g.num_patches(); ++k) {
        const int r0 = (k / g.grid_cols) * patch_pixels;
        const int c0 = (k % g.grid_cols) * patch_pixels;
        double* dst = g.tokens.row_ptr(static_cast<std::size_t>(k));
        for (int pr = 0; pr < patch_pixels; ++pr)
            for (int pc = 0; pc < patch_pixels; ++pc)
                dst[pr * patch_pixels + pc] = img.at(r0 + pr, c0 + pc);
    }
    return g;
}

struct AttentionWeights {
    Matrix wq, bq, wk, bk, wv, bv, wo, bo;
};

struct EncoderBlock {
    Matrix ln1_gain, ln1_bias;
    AttentionWeights attn;
    Matrix ln2_gain, ln2_bias;
    Matrix mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// All learnable weights of the toy ViT. Matrices are visited (checkpointing,
// flattening, optimizer steps) strictly in declaration order.
struct EncoderParams {
    int patch_dim = 0;
    int d = 0;
    int heads = 0;
    int depth = 0;
    int mlp_hidden = 0;

    Matrix patch_w, patch_b;
    Matrix class_token;
    std::vector<EncoderBlock> blocks;
    Matrix final_gain, final_bias;
    Matrix head_w, head_b;

    int head_dim() const { return d / heads; }

    void validate() const {
        if (d <= 0 || d % 2 != 0) throw std::invalid_argument("encoder: d must be a positive even number");
        if (heads <= 0 || d % heads != 0) throw std::invalid_argument("encoder: d must be divisible by heads");
        if (depth < 1) throw std::invalid_argument("encoder: depth must be >= 1");
    }

    template <typename F>
    void for_each(F&& f) {
        f(patch_w);
        f(patch_b);
        f(class_token);
        for (auto& b : blocks) {
            f(b.ln1_gain);
            f(b.ln1_bias);
            f(b.attn.wq);
            f(b.attn.bq);
            f(b.attn.wk);
            f(b.attn.bk);
            f(b.attn.wv);
            f(b.attn.bv);
            f(b.attn.wo);
            f(b.attn.bo);
            f(b.ln2_gain);
            f(b.ln2_bias);
            f(b.mlp_w1);
            f(b.mlp_b1);
            f(b.mlp_w2);
            f(b.mlp_b2);
        }
        f(final_gain);
        f(final_bias);
        f(head_w);
        f(head_b);
    }

    template <typename F>
    void for_each(F&& f) const {
        const_cast<EncoderParams*>(this)->for_each([&](Matrix& m) { f(static_cast<const Matrix&>(m)); });
    }

    std::size_t num_params() const {
        std::size_t n = 0;
        for_each([&](const Matrix& m) { n += m.size(); });
        return n;
    }
};

inline EncoderParams init_encoder_params(int patch_dim, int d, int heads, int depth,
                                         int mlp_hidden, Rng& rng) {
    EncoderParams p;
    p.patch_dim = patch_dim;
    p.d = d;
    p.heads = heads;
    p.depth = depth;
    p.mlp_hidden = mlp_hidden;
    p.validate();

    auto gauss_mat = [&rng](std::size_t r, std::size_t c, double sd) {
        Matrix m(r, c);
        for (double& v : m.data) v = rng.gauss(0.0, sd);
        return m;
    };
    auto xavier = [&](std::size_t fan_in, std::size_t fan_out) {
        return gauss_mat(fan_in, fan_out, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
    };

    const std::size_t dd = static_cast<std::size_t>(d);
    p.patch_w = xavier(static_cast<std::size_t>(patch_dim), dd);
    p.patch_b = Matrix(1, dd);
    p.class_token = gauss_mat(1, dd, 0.02);
    p.blocks.resize(static_cast<std::size_t>(depth));
    for (auto& b : p.blocks) {
        b.ln1_gain = Matrix(1, dd, 1.0);
        b.ln1_bias = Matrix(1, dd);
        b.attn.wq = xavier(dd, dd);
        b.attn.bq = Matrix(1, dd);
        b.attn.wk = xavier(dd, dd);
        b.attn.bk = Matrix(1, dd);
        b.attn.wv = xavier(dd, dd);
        b.attn.bv = Matrix(1, dd);
        b.attn.wo = xavier(dd, dd);
        b.attn.bo = Matrix(1, dd);
        b.ln2_gain = Matrix(1, dd, 1.0);
        b.ln2_bias = Matrix(1, dd);
        b.mlp_w1 = xavier(dd, static_cast<std::size_t>(mlp_hidden));
        b.mlp_b1 = Matrix(1, static_cast<std::size_t>(mlp_hidden));
        b.mlp_w2 = xavier(static_cast<std::size_t>(mlp_hidden), dd);
        b.mlp_b2 = Matrix(1, dd);
    }
    p.final_gain = Matrix(1, dd, 1.0);
    p.final_bias = Matrix(1, dd);
    p.head_w = xavier(dd, 2);
    p.head_b = Matrix(1, 2);
    return p;
}

// Encoder weights plus the position table they were trained with. The table
// itself is a learnable matrix for the relative kind or when a sinusoidal
// table is flagged trainable.
struct ModelState {
    EncoderParams params;
    PositionTable pe;
    bool pe_trainable = false;

    template <typename F>
    void for_each_trainable(F&& f) {
        if (pe_trainable && !pe.table.empty()) f(pe.table);
        params.for_each(f);
    }
};

namespace detail {

struct AttnNodes {
    Tape::Id wq, bq, wk, bk, wv, bv, wo, bo;
};

struct BlockNodes {
    Tape::Id ln1_gain, ln1_bias;
    AttnNodes attn;
    Tape::Id ln2_gain, ln2_bias;
    Tape::Id mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

}  // namespace detail

// Tape-resident copies of all trainable matrices; shared by every sequence
// forward built on the same tape so gradients accumulate across a batch.
struct ParamNodes {
    Tape::Id patch_w = 0, patch_b = 0, class_token = 0;
    std::vector<detail::BlockNodes> blocks;
    Tape::Id final_gain = 0, final_bias = 0;
    Tape::Id head_w = 0, head_b = 0;
    bool pe_staged = false;
    Tape::Id pe_table = 0;
};

inline ParamNodes stage_params(Tape& t, const ModelState& m) {
    ParamNodes pn;
    if (m.pe_trainable && !m.pe.table.empty()) {
        pn.pe_staged = true;
        pn.pe_table = t.leaf(m.pe.table);
    }
    pn.patch_w = t.leaf(m.params.patch_w);
    pn.patch_b = t.leaf(m.params.patch_b);
    pn.class_token = t.leaf(m.params.class_token);
    for (const auto& b : m.params.blocks) {
        detail::BlockNodes bn;
        bn.ln1_gain = t.leaf(b.ln1_gain);
        bn.ln1_bias = t.leaf(b.ln1_bias);
        bn.attn = {t.leaf(b.attn.wq), t.leaf(b.attn.bq), t.leaf(b.attn.wk), t.leaf(b.attn.bk),
                   t.leaf(b.attn.wv), t.leaf(b.attn.bv), t.leaf(b.attn.wo), t.leaf(b.attn.bo)};
        bn.ln2_gain = t.leaf(b.ln2_gain);
        bn.ln2_bias = t.leaf(b.ln2_bias);
        bn.mlp_w1 = t.leaf(b.mlp_w1);
        bn.mlp_b1 = t.leaf(b.mlp_b1);
        bn.mlp_w2 = t.leaf(b.mlp_w2);
        bn.mlp_b2 = t.leaf(b.mlp_b2);
        pn.blocks.push_back(bn);
    }
    pn.final_gain = t.leaf(m.params.final_gain);
    pn.final_bias = t.leaf(m.params.final_bias);
    pn.head_w = t.leaf(m.params.head_w);
    pn.head_b = t.leaf(m.params.head_b);
    return pn;
}

// Collects gradients back out of the tape in the same order as stage_params.
template <typename F>
void for_each_param_grad(Tape& t, const ParamNodes& pn, ModelState& m, F&& f) {
    if (pn.pe_staged) f(m.pe.table, t.grad(pn.pe_table));
    std::vector<Tape::Id> ids;
    ids.push_back(pn.patch_w);
    ids.push_back(pn.patch_b);
    ids.push_back(pn.class_token);
    for (const auto& bn : pn.blocks) {
        ids.insert(ids.end(), {bn.ln1_gain, bn.ln1_bias, bn.attn.wq, bn.attn.bq, bn.attn.wk,
                               bn.attn.bk, bn.attn.wv, bn.attn.bv, bn.attn.wo, bn.attn.bo,
                               bn.ln2_gain, bn.ln2_bias, bn.mlp_w1, bn.mlp_b1, bn.mlp_w2,
                               bn.mlp_b2});
    }
    ids.insert(ids.end(), {pn.final_gain, pn.final_bias, pn.head_w, pn.head_b});
    std::size_t i = 0;
    m.params.for_each([&](Matrix& mat) { f(mat, t.grad(ids[i++])); });
}

namespace detail {

// Offset-index matrix for relative attention bias: entry (i, j) indexes the
// PE-table row for the offset between the plan-assigned cells of sequence
// positions i and j. Class token and PE holes use the dedicated last row.
inline std::vector<int> relative_index_matrix(const PositionTable& pe, const PositionPlan& plan) {
    const int P = plan.num_patches();
    const int T = P + 1;
    const int unknown = relative_unknown_index(pe.grid_rows, pe.grid_cols);
    std::vector<int> cell_r(static_cast<std::size_t>(T), -1), cell_c(static_cast<std::size_t>(T), -1);
    for (int k = 1; k <= P; ++k) {
        const int row = plan.row_for_token(k);
        if (row == PositionPlan::kNoPe) continue;
        cell_r[static_cast<std::size_t>(k)] = (row - 1) / pe.grid_cols;
        cell_c[static_cast<std::size_t>(k)] = (row - 1) % pe.grid_cols;
    }
    std::vector<int> idx(static_cast<std::size_t>(T) * static_cast<std::size_t>(T), unknown);
    for (int i = 1; i < T; ++i) {
        if (cell_r[static_cast<std::size_t>(i)] < 0) continue;
        for (int j = 1; j < T; ++j) {
            if (cell_r[static_cast<std::size_t>(j)] < 0) continue;
            idx[static_cast<std::size_t>(i) * static_cast<std::size_t>(T) + static_cast<std::size_t>(j)] =
                relative_offset_index(pe.grid_rows, pe.grid_cols,
                                      cell_r[static_cast<std::size_t>(i)] - cell_r[static_cast<std::size_t>(j)],
                                      cell_c[static_cast<std::size_t>(i)] - cell_c[static_cast<std::size_t>(j)]);
        }
    }
    return idx;
}

struct RelativeCtx {
    Tape::Id table;
    const std::vector<int>* idx;  // T*T offset indices
    std::size_t t_len;
};

inline Tape::Id build_attention(Tape& t, Tape::Id x, const AttnNodes& an, int heads,
                                const std::optional<RelativeCtx>& rel) {
    const std::size_t d = t.value(an.wq).cols;
    const std::size_t dh = d / static_cast<std::size_t>(heads);
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tape::Id q = t.add_rowvec(t.matmul(x, an.wq), an.bq);
    const Tape::Id k = t.add_rowvec(t.matmul(x, an.wk), an.bk);
    const Tape::Id v = t.add_rowvec(t.matmul(x, an.wv), an.bv);
    std::vector<Tape::Id> head_outs;
    for (int h = 0; h < heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * dh;
        const Tape::Id qh = t.slice_cols(q, c0, dh);
        const Tape::Id kh = t.slice_cols(k, c0, dh);
        const Tape::Id vh = t.slice_cols(v, c0, dh);
        Tape::Id s = t.scale(t.matmul_nt(qh, kh), att_scale);
        if (rel) s = t.add(s, t.offset_bias(rel->table, *rel->idx, rel->t_len, c0, dh));
        const Tape::Id a = t.row_softmax(s);
        head_outs.push_back(t.matmul(a, vh));
    }
    const Tape::Id cat = t.concat_cols(head_outs);
    return t.add_rowvec(t.matmul(cat, an.wo), an.bo);
}

}  // namespace detail

// Builds the full forward pass for one sequence on the tape and returns the
// 1x2 logits node. The class token sits at sequence position 0 and always
// receives PE row 0; token #k receives PE row plan(k).
inline Tape::Id encode_on_tape(Tape& t, const ParamNodes& pn, const ModelState& m,
                               const TokenGrid& grid, const PositionPlan& plan) {
    const int P = grid.num_patches();
    if (plan.num_patches() != P)
        throw std::invalid_argument("encode: plan length does not match patch count");
    {
        std::vector<bool> seen(static_cast<std::size_t>(P), false);
        for (int v : plan.assignment) {
            if (v == PositionPlan::kNoPe) continue;
            if (v < 1 || v > P || seen[static_cast<std::size_t>(v) - 1])
                throw std::invalid_argument("encode: plan is not a permutation");
            seen[static_cast<std::size_t>(v) - 1] = true;
        }
    }
    if (grid.tokens.cols != static_cast<std::size_t>(m.params.patch_dim))
        throw std::invalid_argument("encode: token width does not match patch projection");

    const PeKind kind = m.pe.kind;
    const bool absolute = kind == PeKind::sinusoidal_1d || kind == PeKind::grid_2d;
    if (absolute && m.pe.table.rows != static_cast<std::size_t>(P) + 1)
        throw std::invalid_argument("encode: position table must cover P+1 positions");

    const Tape::Id tokens = t.leaf(grid.tokens);
    Tape::Id x = t.add_rowvec(t.matmul(tokens, pn.patch_w), pn.patch_b);
    Tape::Id cls = pn.class_token;

    if (absolute) {
        if (pn.pe_staged) {
            std::vector<int> idx(static_cast<std::size_t>(P));
            for (int k = 1; k <= P; ++k) {
                const int row = plan.row_for_token(k);
                idx[static_cast<std::size_t>(k) - 1] = row == PositionPlan::kNoPe ? -1 : row;
            }
            x = t.add(x, t.gather_rows(pn.pe_table, idx));
            cls = t.add(cls, t.gather_rows(pn.pe_table, {0}));
        } else {
            Matrix gathered(static_cast<std::size_t>(P), static_cast<std::size_t>(m.params.d));
            for (int k = 1; k <= P; ++k) {
                const int row = plan.row_for_token(k);
                if (row == PositionPlan::kNoPe) continue;
                const double* src = m.pe.table.row_ptr(static_cast<std::size_t>(row));
                double* dst = gathered.row_ptr(static_cast<std::size_t>(k) - 1);
                for (int j = 0; j < m.params.d; ++j) dst[j] = src[j];
            }
            x = t.add_const(x, gathered);
            Matrix cls_pe(1, static_cast<std::size_t>(m.params.d));
            for (int j = 0; j < m.params.d; ++j) cls_pe.data[j] = m.pe.table(0, static_cast<std::size_t>(j));
            cls = t.add_const(cls, cls_pe);
        }
    }

    Tape::Id seq = t.concat_rows(cls, x);
    const std::size_t T = static_cast<std::size_t>(P) + 1;

    std::optional<detail::RelativeCtx> rel;
    std::vector<int> rel_idx;
    Tape::Id rel_table = 0;
    if (kind == PeKind::relative) {
        rel_idx = detail::relative_index_matrix(m.pe, plan);
        rel_table = pn.pe_staged ? pn.pe_table : t.leaf(m.pe.table);
        rel = detail::RelativeCtx{rel_table, &rel_idx, T};
    }

    for (const auto& bn : pn.blocks) {
        const Tape::Id h1 = t.layer_norm(seq, bn.ln1_gain, bn.ln1_bias, kLayerNormEps);
        seq = t.add(seq, detail::build_attention(t, h1, bn.attn, m.params.heads, rel));
        const Tape::Id h2 = t.layer_norm(seq, bn.ln2_gain, bn.ln2_bias, kLayerNormEps);
        Tape::Id mlp = t.add_rowvec(t.matmul(h2, bn.mlp_w1), bn.mlp_b1);
        mlp = t.gelu(mlp);
        mlp = t.add_rowvec(t.matmul(mlp, bn.mlp_w2), bn.mlp_b2);
        seq = t.add(seq, mlp);
    }

    const Tape::Id fin = t.layer_norm(seq, pn.final_gain, pn.final_bias, kLayerNormEps);
    const Tape::Id cls_out = t.select_row(fin, 0);
    return t.add_rowvec(t.matmul(cls_out, pn.head_w), pn.head_b);
}

// Pure inference entry point: fresh local tape, logits returned by value.
inline Matrix encode(const TokenGrid& grid, const PositionTable& pe, const PositionPlan& plan,
                     const EncoderParams& params) {
    ModelState m{params, pe, false};
    Tape t;
    const ParamNodes pn = stage_params(t, m);
    return t.value(encode_on_tape(t, pn, m, grid, plan));
}

// Standalone multi-head attention over a T x d sequence; optional per-head
// additive logit bias (T x T each, indexed by head).
inline Matrix multi_head_attention(const Matrix& x, const AttentionWeights& w, int heads,
                                   const std::vector<Matrix>* head_bias = nullptr) {
    if (x.cols != w.wq.rows || w.wq.cols % static_cast<std::size_t>(heads) != 0)
        throw std::invalid_argument("multi_head_attention: shape mismatch");
    Tape t;
    detail::AttnNodes an{t.leaf(w.wq), t.leaf(w.bq), t.leaf(w.wk), t.leaf(w.bk),
                         t.leaf(w.wv), t.leaf(w.bv), t.leaf(w.wo), t.leaf(w.bo)};
    const Tape::Id xi = t.leaf(x);
    if (!head_bias) return t.value(detail::build_attention(t, xi, an, heads, std::nullopt));

    // Bias path shares the head loop but injects fixed matrices.
    const std::size_t d = w.wq.cols;
    const std::size_t dh = d / static_cast<std::size_t>(heads);
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const Tape::Id q = t.add_rowvec(t.matmul(xi, an.wq), an.bq);
    const Tape::Id k = t.add_rowvec(t.matmul(xi, an.wk), an.bk);
    const Tape::Id v = t.add_rowvec(t.matmul(xi, an.wv), an.bv);
    std::vector<Tape::Id> outs;
    for (int h = 0; h < heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * dh;
        Tape::Id s = t.scale(t.matmul_nt(t.slice_cols(q, c0, dh), t.slice_cols(k, c0, dh)), att_scale);
        s = t.add_const(s, (*head_bias)[static_cast<std::size_t>(h)]);
        outs.push_back(t.matmul(t.row_softmax(s), t.slice_cols(v, c0, dh)));
    }
    return t.value(t.add_rowvec(t.matmul(t.concat_cols(outs), an.wo), an.bo));
}

// Per-head attention probabilities for a plain (bias-free) forward; test aid.
inline std::vector<Matrix> attention_probs(const Matrix& x, const AttentionWeights& w, int heads) {
    const std::size_t d = w.wq.cols;
    const std::size_t dh = d / static_cast<std::size_t>(heads);
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix q = matmul(x, w.wq);
    Matrix k = matmul(x, w.wk);
    for (std::size_t i = 0; i < q.rows; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            q(i, j) += w.bq.data[j];
            k(i, j) += w.bk.data[j];
        }
    std::vector<Matrix> probs;
    for (int h = 0; h < heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * dh;
        Matrix qh(q.rows, dh), kh(k.rows, dh);
        for (std::size_t i = 0; i < q.rows; ++i)
            for (std::size_t j = 0; j < dh; ++j) {
                qh(i, j) = q(i, c0 + j);
                kh(i, j) = k(i, c0 + j);
            }
        probs.push_back(softmax_rows(scale(matmul_nt(qh, kh), att_scale)));
    }
    return probs;
}

}  // namespace sspe
