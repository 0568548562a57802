#include "decfd/encoder.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace decfd::encoder {

namespace {

constexpr double kLayerNormEps = 1e-5;

nn::Tensor glorot_uniform(std::size_t fan_out, std::size_t fan_in, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    nn::Tensor t({fan_out, fan_in});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
    return t;
}

nn::Tensor embedding_init(std::size_t rows, std::size_t cols, Rng& rng) {
    // same fan-based range as the projections, rows indexed not multiplied
    const double a = std::sqrt(6.0 / static_cast<double>(cols + cols));
    nn::Tensor t({rows, cols});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
    return t;
}

}  // namespace

void Params::init(const Config& c, Rng& rng) {
    cfg = c;
    if (c.d_model % c.n_heads != 0) {
        throw std::invalid_argument("encoder: d_model must be divisible by n_heads");
    }
    tok_emb = nn::Param("enc.tok_emb", embedding_init(c.vocab_size, c.d_model, rng));
    pos_emb = nn::Param("enc.pos_emb", embedding_init(c.max_len, c.d_model, rng));
    layers.resize(c.n_layers);
    const std::size_t d = c.d_model;
    const std::size_t f = c.ff_hidden();
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        const std::string pre = "enc.layer" + std::to_string(l) + ".";
        LayerParams& lp = layers[l];
        lp.wq = nn::Param(pre + "wq", glorot_uniform(d, d, rng));
        lp.bq = nn::Param(pre + "bq", nn::Tensor({d}));
        lp.wk = nn::Param(pre + "wk", glorot_uniform(d, d, rng));
        lp.bk = nn::Param(pre + "bk", nn::Tensor({d}));
        lp.wv = nn::Param(pre + "wv", glorot_uniform(d, d, rng));
        lp.bv = nn::Param(pre + "bv", nn::Tensor({d}));
        lp.wo = nn::Param(pre + "wo", glorot_uniform(d, d, rng));
        lp.bo = nn::Param(pre + "bo", nn::Tensor({d}));
        lp.ln1_g = nn::Param(pre + "ln1.g", nn::Tensor::full({d}, 1.0));
        lp.ln1_b = nn::Param(pre + "ln1.b", nn::Tensor({d}));
        lp.ff1_w = nn::Param(pre + "ff1.w", glorot_uniform(f, d, rng));
        lp.ff1_b = nn::Param(pre + "ff1.b", nn::Tensor({f}));
        lp.ff2_w = nn::Param(pre + "ff2.w", glorot_uniform(d, f, rng));
        lp.ff2_b = nn::Param(pre + "ff2.b", nn::Tensor({d}));
        lp.ln2_g = nn::Param(pre + "ln2.g", nn::Tensor::full({d}, 1.0));
        lp.ln2_b = nn::Param(pre + "ln2.b", nn::Tensor({d}));
    }
}

std::vector<nn::Param*> Params::params() {
    std::vector<nn::Param*> out = {&tok_emb, &pos_emb};
    for (LayerParams& lp : layers) {
        for (nn::Param* p : {&lp.wq, &lp.bq, &lp.wk, &lp.bk, &lp.wv, &lp.bv, &lp.wo,
                             &lp.bo, &lp.ln1_g, &lp.ln1_b, &lp.ff1_w, &lp.ff1_b,
                             &lp.ff2_w, &lp.ff2_b, &lp.ln2_g, &lp.ln2_b}) {
            out.push_back(p);
        }
    }
    return out;
}

Forward forward(nn::Graph& g, Params& p, std::span<const std::size_t> token_ids) {
    const Config& cfg = p.cfg;
    Forward fwd;

    std::vector<std::size_t> ids;
    ids.reserve(token_ids.size() + 1);
    ids.push_back(cfg.vocab_size - 1);  // CLS is the last embedding row
    for (std::size_t id : token_ids) {
        if (ids.size() >= cfg.max_len) {
            fwd.truncated = true;
            break;
        }
        assert(id < cfg.vocab_size);
        ids.push_back(id);
    }
    const std::size_t len = ids.size();  // L + 1
    fwd.seq_len = len - 1;

    std::vector<std::size_t> positions(len);
    for (std::size_t i = 0; i < len; ++i) positions[i] = i;

    nn::NodeId x = g.add(g.gather_rows(g.param(p.tok_emb), std::move(ids)),
                         g.gather_rows(g.param(p.pos_emb), std::move(positions)));

    const std::size_t dh = cfg.head_dim();
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    for (LayerParams& lp : p.layers) {
        const nn::NodeId q = g.affine_rows(x, g.param(lp.wq), g.param(lp.bq));
        const nn::NodeId k = g.affine_rows(x, g.param(lp.wk), g.param(lp.bk));
        const nn::NodeId v = g.affine_rows(x, g.param(lp.wv), g.param(lp.bv));

        nn::NodeId heads = 0;
        for (std::size_t h = 0; h < cfg.n_heads; ++h) {
            const nn::NodeId qh = g.slice_cols(q, h * dh, dh);
            const nn::NodeId kh = g.slice_cols(k, h * dh, dh);
            const nn::NodeId vh = g.slice_cols(v, h * dh, dh);
            const nn::NodeId scores = g.scale(g.matmul_nt(qh, kh), inv_sqrt_dh);
            const nn::NodeId attn = g.softmax_rows(scores);

            const nn::Tensor& a = g.value(attn);
            nn::Tensor cls_row({len});
            for (std::size_t j = 0; j < len; ++j) cls_row[j] = a.at(0, j);
            fwd.cls_attn.push_back(std::move(cls_row));

            const nn::NodeId oh = g.matmul(attn, vh);
            heads = h == 0 ? oh : g.concat_cols(heads, oh);
        }
        const nn::NodeId attn_out = g.affine_rows(heads, g.param(lp.wo), g.param(lp.bo));
        x = g.layer_norm_rows(g.add(x, attn_out), g.param(lp.ln1_g), g.param(lp.ln1_b),
                              kLayerNormEps);
        const nn::NodeId ff =
            g.affine_rows(g.relu(g.affine_rows(x, g.param(lp.ff1_w), g.param(lp.ff1_b))),
                          g.param(lp.ff2_w), g.param(lp.ff2_b));
        x = g.layer_norm_rows(g.add(x, ff), g.param(lp.ln2_g), g.param(lp.ln2_b),
                              kLayerNormEps);
    }
    fwd.hidden = x;
    return fwd;
}

HiddenSeq extract(const nn::Graph& g, const Forward& fwd) {
    const nn::Tensor& h = g.value(fwd.hidden);
    HiddenSeq seq;
    seq.truncated = fwd.truncated;
    seq.attn = fwd.cls_attn;
    const std::size_t d = h.cols();
    seq.h_cls = nn::Tensor({d});
    for (std::size_t j = 0; j < d; ++j) seq.h_cls[j] = h.at(0, j);
    seq.h_tokens.reserve(h.rows() - 1);
    for (std::size_t i = 1; i < h.rows(); ++i) {
        nn::Tensor t({d});
        for (std::size_t j = 0; j < d; ++j) t[j] = h.at(i, j);
        seq.h_tokens.push_back(std::move(t));
    }
    return seq;
}

void FusionParams::init(std::size_t d_model, std::size_t topics, Rng& rng) {
    w = nn::Param("fuse.w", glorot_uniform(d_model, d_model + topics, rng));
    b = nn::Param("fuse.b", nn::Tensor({d_model}));
}

std::vector<nn::Param*> FusionParams::params() {
    return {&w, &b};
}

nn::NodeId fuse_topic(nn::Graph& g, FusionParams& p, nn::NodeId hidden, nn::NodeId theta) {
    const std::size_t rows = g.value(hidden).rows();
    const nn::NodeId joined = g.concat_cols(hidden, g.repeat_row(theta, rows));
    return g.tanh(g.affine_rows(joined, g.param(p.w), g.param(p.b)));
}

nn::Tensor cls_attention(const Forward& fwd) {
    assert(!fwd.cls_attn.empty());
    const std::size_t len = fwd.cls_attn.front().size();  // L + 1
    const std::size_t n_tokens = len - 1;
    if (n_tokens == 0) return nn::Tensor({0});
    nn::Tensor mean({len});
    for (const nn::Tensor& row : fwd.cls_attn) {
        for (std::size_t j = 0; j < len; ++j) mean[j] += row[j];
    }
    const double scale = 1.0 / static_cast<double>(fwd.cls_attn.size());
    nn::Tensor out({n_tokens});
    double total = 0.0;
    for (std::size_t j = 1; j < len; ++j) {
        out[j - 1] = mean[j] * scale;
        total += out[j - 1];
    }
    if (total > 0.0) {
        for (std::size_t j = 0; j < n_tokens; ++j) out[j] /= total;
    } else {
        out.fill(1.0 / static_cast<double>(n_tokens));
    }
    return out;
}

}  // namespace decfd::encoder
