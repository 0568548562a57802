#pragma once

#include <cstddef>
#include <vector>

#include "decfd/graph.hpp"
#include "decfd/rng.hpp"
#include "decfd/tensor.hpp"

namespace decfd::head {

/// Running per-label mean of [CLS] hidden states. Prototypes enter the loss
/// graph as constants and never receive gradient.
struct Prototypes {
    std::vector<nn::Tensor> vectors;
    std::vector<bool> initialized;
    std::vector<std::size_t> counts_seen;
    double momentum = 0.9;

    Prototypes() = default;
    Prototypes(std::size_t n_labels, std::size_t dim, double momentum = 0.9);

    std::size_t n_labels() const { return vectors.size(); }
    std::size_t dim() const { return vectors.empty() ? 0 : vectors[0].size(); }
    bool all_initialized() const;
};

/// EMA update from a batch: for each label present, the batch class-mean m_l
/// is folded in as momentum*old + (1-momentum)*m_l; the first update for a
/// label sets the prototype to m_l directly. Labels absent from the batch are
/// untouched. Labels are indices into [0, n_labels).
void update_prototypes(const std::vector<nn::Tensor>& batch_h_cls,
                       const std::vector<std::size_t>& labels, Prototypes& protos);

struct Params {
    nn::Param proto_w, proto_b;  // (|Y| * d_model) -> d_model
    nn::Param out_w, out_b;      // (2 * d_model) -> 1
    nn::Param plain_w, plain_b;  // d_model -> 1, used only by the no-intervention ablation
    // per-class logit variant for |Y| > 2; allocated only then, never
    // evaluated against the binary metrics
    nn::Param multi_w, multi_b;        // (2 * d_model) -> |Y|
    nn::Param multi_plain_w, multi_plain_b;  // d_model -> |Y|
    std::size_t n_labels = 2;

    void init(std::size_t d_model, std::size_t n_labels, Rng& rng);
    std::vector<nn::Param*> params();
};

/// Backdoor-adjusted logit: prototypes concatenated in label order, projected,
/// concatenated after h_topic_cls, projected to a scalar. Throws if any
/// prototype is uninitialized (run a warm pass first).
nn::NodeId intervene(nn::Graph& g, Params& p, nn::NodeId h_topic_cls,
                     const Prototypes& protos);

/// Ablation head: plain scalar logit from h_topic_cls.
nn::NodeId plain_logit(nn::Graph& g, Params& p, nn::NodeId h_topic_cls);

/// |Y|-way logits for the multi-class variant (softmax head behind a config
/// flag; structurally supported, not evaluated).
nn::NodeId multi_logits(nn::Graph& g, Params& p, nn::NodeId h_topic_cls,
                        const Prototypes& protos, bool bypass_intervention);

/// Cross-entropy on multi-class logits.
nn::NodeId multi_cfd_loss(nn::Graph& g, nn::NodeId logits, std::size_t y);

/// Literal averaged form (1/|Y|) * sum_l sigmoid(h_prime). The summand is
/// label-independent, so this equals sigmoid(h_prime); the sum runs in
/// extended precision so the equality is bit-exact for any practical |Y|.
double predict(double h_prime, std::size_t n_labels);

double sigmoid(double x);

/// Binary cross-entropy evaluated in logit form.
nn::NodeId cfd_loss(nn::Graph& g, nn::NodeId logit, int y);

/// L = L_CFD + lambda_ntm * L_NTM.
nn::NodeId total_loss(nn::Graph& g, nn::NodeId cfd, nn::NodeId ntm, double lambda_ntm);

}  // namespace decfd::head
