#pragma once

#include <cstddef>
#include <vector>

#include "decfd/corpus.hpp"
#include "decfd/graph.hpp"
#include "decfd/rng.hpp"
#include "decfd/tensor.hpp"

namespace decfd::ntm {

struct Config {
    std::size_t vocab_size = 0;  // V
    std::size_t topics = 15;     // K
    std::size_t hidden = 256;    // width of the softplus encoder layer
    bool decoder_relu = true;    // relu before the decoder softmax
    double eps_cos = 1e-6;       // clamp floor for the cosine in the deconfounded term
};

/// Encoder nets f0 / f_mu / f_sigma and the decoder whose weight matrix
/// [V x K] is the topic-word distribution: row i embeds word i over topics,
/// column k holds topic k's word weights.
struct Params {
    Config cfg;
    nn::Param f0_w, f0_b;        // V -> H
    nn::Param mu_w, mu_b;        // H -> K
    nn::Param sigma_w, sigma_b;  // H -> K
    nn::Param dec_w, dec_b;      // K -> V, dec_w rows are word embeddings

    void init(const Config& cfg, Rng& rng);
    std::vector<nn::Param*> params();
};

/// Posterior parameters, latent sample and topic simplex for one document.
struct TopicState {
    nn::Tensor mu;
    nn::Tensor log_sigma;
    nn::Tensor z;
    nn::Tensor theta;
};

/// Linear warm-up: gamma(s) = target * min(1, s / warmup_steps).
struct GammaSchedule {
    std::size_t warmup_steps = 1000;
    double target = 0.25;

    double at(std::size_t step) const {
        if (warmup_steps == 0 || step >= warmup_steps) return target;
        return target * (static_cast<double>(step) / static_cast<double>(warmup_steps));
    }
};

struct EncodeOut {
    nn::NodeId mu;
    nn::NodeId log_sigma;
};

EncodeOut encode(nn::Graph& g, Params& p, const corpus::BowVector& x_bow);

/// z = mu + exp(log_sigma) * eps for injected noise eps.
nn::NodeId reparameterize(nn::Graph& g, nn::NodeId mu, nn::NodeId log_sigma,
                          const nn::Tensor& eps);

/// theta = softmax(z).
nn::NodeId topic_repr(nn::Graph& g, nn::NodeId z);

/// word_dist = softmax(relu(dec_w * theta + dec_b)); relu optional per config.
nn::NodeId decode(nn::Graph& g, Params& p, nn::NodeId theta);

/// Closed-form KL against the standard normal prior, always >= 0.
nn::NodeId kl_term(nn::Graph& g, nn::NodeId mu, nn::NodeId log_sigma);

/// Negative reconstruction log-likelihood: -sum_v count_v * log word_dist_v.
nn::NodeId recon_term(nn::Graph& g, const corpus::BowVector& x_bow, nn::NodeId word_dist);

/// Deconfounded alignment term, always <= 0:
/// sum over in-document words of count_i * log(clamp(cos(phi_i, theta), eps_cos, 1)).
nn::NodeId deconf_term(nn::Graph& g, Params& p, const corpus::BowVector& x_bow,
                       nn::NodeId theta);

struct LossOut {
    nn::NodeId loss;
    nn::NodeId kl;
    nn::NodeId recon;
    nn::NodeId deconf;  // 0 node when gamma == 0
    nn::NodeId theta;
    nn::NodeId mu;
    nn::NodeId log_sigma;
};

/// Single-sample estimate of the deconfounded ELBO:
/// kl + recon - gamma * deconf.
LossOut loss(nn::Graph& g, Params& p, const corpus::BowVector& x_bow,
             const nn::Tensor& eps, double gamma);

/// Posterior state for one document; eps == nullptr means the mean path
/// (eps = 0), which is what evaluation uses.
TopicState infer(Params& p, const corpus::BowVector& x_bow, const nn::Tensor* eps = nullptr);

/// Per topic, ids of the k largest decoder weights, descending, ties broken
/// by ascending id.
std::vector<std::vector<std::size_t>> top_words(const Params& p, std::size_t k);

}  // namespace decfd::ntm
