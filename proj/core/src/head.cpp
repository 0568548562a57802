#include "decfd/head.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace decfd::head {

namespace {

nn::Tensor glorot_uniform(std::size_t fan_out, std::size_t fan_in, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    nn::Tensor t({fan_out, fan_in});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
    return t;
}

}  // namespace

Prototypes::Prototypes(std::size_t n_labels, std::size_t dim, double momentum)
    : vectors(n_labels, nn::Tensor({dim})),
      initialized(n_labels, false),
      counts_seen(n_labels, 0),
      momentum(momentum) {}

bool Prototypes::all_initialized() const {
    for (bool b : initialized) {
        if (!b) return false;
    }
    return true;
}

void update_prototypes(const std::vector<nn::Tensor>& batch_h_cls,
                       const std::vector<std::size_t>& labels, Prototypes& protos) {
    assert(batch_h_cls.size() == labels.size());
    const std::size_t n = protos.n_labels();
    const std::size_t d = protos.dim();
    std::vector<nn::Tensor> mean(n, nn::Tensor({d}));
    std::vector<std::size_t> count(n, 0);
    for (std::size_t i = 0; i < batch_h_cls.size(); ++i) {
        const std::size_t l = labels[i];
        assert(l < n);
        assert(batch_h_cls[i].size() == d);
        for (std::size_t j = 0; j < d; ++j) mean[l][j] += batch_h_cls[i][j];
        ++count[l];
    }
    for (std::size_t l = 0; l < n; ++l) {
        if (count[l] == 0) continue;
        for (std::size_t j = 0; j < d; ++j) mean[l][j] /= static_cast<double>(count[l]);
        if (!protos.initialized[l]) {
            protos.vectors[l] = mean[l];
            protos.initialized[l] = true;
        } else {
            const double m = protos.momentum;
            for (std::size_t j = 0; j < d; ++j) {
                protos.vectors[l][j] = m * protos.vectors[l][j] + (1.0 - m) * mean[l][j];
            }
        }
        protos.counts_seen[l] += count[l];
    }
}

void Params::init(std::size_t d_model, std::size_t labels, Rng& rng) {
    n_labels = labels;
    proto_w = nn::Param("head.proto.w", glorot_uniform(d_model, labels * d_model, rng));
    proto_b = nn::Param("head.proto.b", nn::Tensor({d_model}));
    out_w = nn::Param("head.out.w", glorot_uniform(1, 2 * d_model, rng));
    out_b = nn::Param("head.out.b", nn::Tensor({1}));
    plain_w = nn::Param("head.plain.w", glorot_uniform(1, d_model, rng));
    plain_b = nn::Param("head.plain.b", nn::Tensor({1}));
    if (labels > 2) {
        multi_w = nn::Param("head.multi.w", glorot_uniform(labels, 2 * d_model, rng));
        multi_b = nn::Param("head.multi.b", nn::Tensor({labels}));
        multi_plain_w = nn::Param("head.multi_plain.w", glorot_uniform(labels, d_model, rng));
        multi_plain_b = nn::Param("head.multi_plain.b", nn::Tensor({labels}));
    }
}

std::vector<nn::Param*> Params::params() {
    std::vector<nn::Param*> out = {&proto_w, &proto_b, &out_w, &out_b, &plain_w, &plain_b};
    if (n_labels > 2) {
        out.push_back(&multi_w);
        out.push_back(&multi_b);
        out.push_back(&multi_plain_w);
        out.push_back(&multi_plain_b);
    }
    return out;
}

nn::NodeId intervene(nn::Graph& g, Params& p, nn::NodeId h_topic_cls,
                     const Prototypes& protos) {
    if (!protos.all_initialized()) {
        throw std::runtime_error(
            "intervene: prototypes not initialized for every label; "
            "run a warm pass over the training set first");
    }
    const std::size_t d = protos.dim();
    nn::Tensor joined({protos.n_labels() * d});
    for (std::size_t l = 0; l < protos.n_labels(); ++l) {
        for (std::size_t j = 0; j < d; ++j) joined[l * d + j] = protos.vectors[l][j];
    }
    const nn::NodeId label_info =
        g.affine(g.input(std::move(joined)), g.param(p.proto_w), g.param(p.proto_b));
    const nn::NodeId both = g.concat(h_topic_cls, label_info);
    return g.sum(g.affine(both, g.param(p.out_w), g.param(p.out_b)));
}

nn::NodeId plain_logit(nn::Graph& g, Params& p, nn::NodeId h_topic_cls) {
    return g.sum(g.affine(h_topic_cls, g.param(p.plain_w), g.param(p.plain_b)));
}

nn::NodeId multi_logits(nn::Graph& g, Params& p, nn::NodeId h_topic_cls,
                        const Prototypes& protos, bool bypass_intervention) {
    if (bypass_intervention) {
        return g.affine(h_topic_cls, g.param(p.multi_plain_w), g.param(p.multi_plain_b));
    }
    if (!protos.all_initialized()) {
        throw std::runtime_error(
            "multi_logits: prototypes not initialized for every label; "
            "run a warm pass over the training set first");
    }
    const std::size_t d = protos.dim();
    nn::Tensor joined({protos.n_labels() * d});
    for (std::size_t l = 0; l < protos.n_labels(); ++l) {
        for (std::size_t j = 0; j < d; ++j) joined[l * d + j] = protos.vectors[l][j];
    }
    const nn::NodeId label_info =
        g.affine(g.input(std::move(joined)), g.param(p.proto_w), g.param(p.proto_b));
    const nn::NodeId both = g.concat(h_topic_cls, label_info);
    return g.affine(both, g.param(p.multi_w), g.param(p.multi_b));
}

nn::NodeId multi_cfd_loss(nn::Graph& g, nn::NodeId logits, std::size_t y) {
    nn::Tensor onehot({g.value(logits).size()});
    onehot[y] = 1.0;
    return g.neg(g.weighted_sum(g.log_softmax(logits), std::move(onehot)));
}

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double predict(double h_prime, std::size_t n_labels) {
    assert(n_labels > 0);
    long double acc = 0.0L;
    for (std::size_t l = 0; l < n_labels; ++l) {
        acc += static_cast<long double>(sigmoid(h_prime));
    }
    return static_cast<double>(acc / static_cast<long double>(n_labels));
}

nn::NodeId cfd_loss(nn::Graph& g, nn::NodeId logit, int y) {
    assert(y == 0 || y == 1);
    return g.bce_with_logits(logit, static_cast<double>(y));
}

nn::NodeId total_loss(nn::Graph& g, nn::NodeId cfd, nn::NodeId ntm, double lambda_ntm) {
    return g.add(cfd, g.scale(ntm, lambda_ntm));
}

}  // namespace decfd::head
