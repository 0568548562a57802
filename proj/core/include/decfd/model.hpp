#pragma once

#include <optional>
#include <vector>

#include "decfd/config.hpp"
#include "decfd/corpus.hpp"
#include "decfd/encoder.hpp"
#include "decfd/graph.hpp"
#include "decfd/head.hpp"
#include "decfd/metrics.hpp"
#include "decfd/ntm.hpp"

namespace decfd {

/// Everything trainable plus the prototype state, built from one RunConfig
/// and one vocabulary.
struct Model {
    RunConfig cfg;
    corpus::Vocab vocab;
    ntm::Params ntm_p;
    encoder::Params enc_p;
    encoder::FusionParams fuse_p;
    head::Params head_p;
    head::Prototypes protos;

    static Model create(const RunConfig& cfg, corpus::Vocab vocab);

    /// Stable parameter order; checkpoint and Adam state key off it.
    std::vector<nn::Param*> params();

    corpus::BowVector bow(const corpus::Document& doc) const;
    std::vector<std::size_t> token_ids(const corpus::Document& doc) const;

    /// Mean-path topic state (eps = 0), as used at evaluation time.
    ntm::TopicState topic_state(const corpus::Document& doc);

    /// p_cfd for one document through the configured path (ablations
    /// honored). Deterministic: uses the posterior mean theta.
    double predict_prob(const corpus::Document& doc);

    /// Encoder forward for diagnostics (attention extraction).
    encoder::Forward encode_doc(nn::Graph& g, const corpus::Document& doc);

    /// Clamp parameter values through f32 when precision is f32.
    void apply_precision();
};

struct EvalResult {
    metrics::Confusion confusion;
    metrics::Scores scores;
    std::vector<double> probs;
};

EvalResult evaluate(Model& model, const corpus::LabeledDataset& ds,
                    double threshold = 0.5);

}  // namespace decfd
