#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "decfd/graph.hpp"
#include "decfd/rng.hpp"
#include "decfd/tensor.hpp"

namespace decfd::encoder {

struct Config {
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t max_len = 128;
    std::size_t vocab_size = 0;  // word ids + UNK + CLS
    std::size_t ff_hidden() const { return 4 * d_model; }
    std::size_t head_dim() const { return d_model / n_heads; }
};

struct LayerParams {
    nn::Param wq, bq, wk, bk, wv, bv, wo, bo;
    nn::Param ln1_g, ln1_b;
    nn::Param ff1_w, ff1_b, ff2_w, ff2_b;
    nn::Param ln2_g, ln2_b;
};

/// From-scratch post-LN transformer encoder. Stands in for the pretrained
/// language model at desk scale; the only intentional architecture departure
/// in this project.
struct Params {
    Config cfg;
    nn::Param tok_emb;  // [vocab_size x d_model]
    nn::Param pos_emb;  // [max_len x d_model]
    std::vector<LayerParams> layers;

    void init(const Config& cfg, Rng& rng);
    std::vector<nn::Param*> params();
};

struct Forward {
    nn::NodeId hidden = 0;  // [L+1 x d_model], row 0 is CLS
    /// CLS attention rows, one [L+1] tensor per (layer, head), layer-major.
    std::vector<nn::Tensor> cls_attn;
    bool truncated = false;
    std::size_t seq_len = 0;  // token count after truncation, excluding CLS
};

/// Value-level view of one encoded sequence for diagnostics.
struct HiddenSeq {
    nn::Tensor h_cls;
    std::vector<nn::Tensor> h_tokens;
    std::vector<nn::Tensor> attn;  // CLS attention rows, as in Forward
    bool truncated = false;
};

/// CLS is prepended internally. Inputs longer than max_len - 1 tokens are
/// truncated and flagged.
Forward forward(nn::Graph& g, Params& p, std::span<const std::size_t> token_ids);

HiddenSeq extract(const nn::Graph& g, const Forward& fwd);

struct FusionParams {
    nn::Param w, b;  // (d_model + K) -> d_model

    void init(std::size_t d_model, std::size_t topics, Rng& rng);
    std::vector<nn::Param*> params();
};

/// h_topic_i = tanh(Linear([h_i, theta])) for every position, CLS included.
nn::NodeId fuse_topic(nn::Graph& g, FusionParams& p, nn::NodeId hidden, nn::NodeId theta);

/// Mean over layers and heads of the CLS attention row, CLS position
/// excluded, renormalized to sum 1. One weight per input token.
nn::Tensor cls_attention(const Forward& fwd);

}  // namespace decfd::encoder
