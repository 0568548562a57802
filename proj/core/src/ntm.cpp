#include "decfd/ntm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace decfd::ntm {

namespace {

nn::Tensor glorot_uniform(std::size_t fan_out, std::size_t fan_in, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    nn::Tensor t({fan_out, fan_in});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
    return t;
}

}  // namespace

void Params::init(const Config& c, Rng& rng) {
    cfg = c;
    f0_w = nn::Param("ntm.f0.w", glorot_uniform(c.hidden, c.vocab_size, rng));
    f0_b = nn::Param("ntm.f0.b", nn::Tensor({c.hidden}));
    mu_w = nn::Param("ntm.mu.w", glorot_uniform(c.topics, c.hidden, rng));
    mu_b = nn::Param("ntm.mu.b", nn::Tensor({c.topics}));
    sigma_w = nn::Param("ntm.sigma.w", glorot_uniform(c.topics, c.hidden, rng));
    sigma_b = nn::Param("ntm.sigma.b", nn::Tensor({c.topics}));
    dec_w = nn::Param("ntm.dec.w", glorot_uniform(c.vocab_size, c.topics, rng));
    dec_b = nn::Param("ntm.dec.b", nn::Tensor({c.vocab_size}));
}

std::vector<nn::Param*> Params::params() {
    return {&f0_w, &f0_b, &mu_w, &mu_b, &sigma_w, &sigma_b, &dec_w, &dec_b};
}

EncodeOut encode(nn::Graph& g, Params& p, const corpus::BowVector& x_bow) {
    const nn::NodeId x = g.input(x_bow.dense());
    const nn::NodeId pi = g.softplus(g.affine(x, g.param(p.f0_w), g.param(p.f0_b)));
    const nn::NodeId mu = g.affine(pi, g.param(p.mu_w), g.param(p.mu_b));
    const nn::NodeId log_sigma = g.affine(pi, g.param(p.sigma_w), g.param(p.sigma_b));
    return {mu, log_sigma};
}

nn::NodeId reparameterize(nn::Graph& g, nn::NodeId mu, nn::NodeId log_sigma,
                          const nn::Tensor& eps) {
    return g.add(mu, g.mul(g.exp(log_sigma), g.input(eps)));
}

nn::NodeId topic_repr(nn::Graph& g, nn::NodeId z) {
    return g.softmax(z);
}

nn::NodeId decode(nn::Graph& g, Params& p, nn::NodeId theta) {
    nn::NodeId logits = g.affine(theta, g.param(p.dec_w), g.param(p.dec_b));
    if (p.cfg.decoder_relu) logits = g.relu(logits);
    return g.softmax(logits);
}

nn::NodeId kl_term(nn::Graph& g, nn::NodeId mu, nn::NodeId log_sigma) {
    // -1/2 sum(1 + 2*ls - mu^2 - exp(2*ls))
    const nn::NodeId two_ls = g.scale(log_sigma, 2.0);
    const nn::NodeId pos = g.add_scalar(two_ls, 1.0);
    const nn::NodeId neg = g.add(g.square(mu), g.exp(two_ls));
    return g.scale(g.sum(g.sub(pos, neg)), -0.5);
}

nn::NodeId recon_term(nn::Graph& g, const corpus::BowVector& x_bow, nn::NodeId word_dist) {
    return g.neg(g.weighted_sum(g.log(word_dist), x_bow.dense()));
}

nn::NodeId deconf_term(nn::Graph& g, Params& p, const corpus::BowVector& x_bow,
                       nn::NodeId theta) {
    if (x_bow.empty()) return g.input(nn::Tensor::scalar(0.0));
    std::vector<std::size_t> ids;
    nn::Tensor weights({x_bow.counts.size()});
    ids.reserve(x_bow.counts.size());
    for (std::size_t i = 0; i < x_bow.counts.size(); ++i) {
        ids.push_back(x_bow.counts[i].first);
        weights[i] = static_cast<double>(x_bow.counts[i].second);
    }
    const nn::NodeId rows = g.gather_rows(g.param(p.dec_w), std::move(ids));
    const nn::NodeId dots = g.matvec(rows, theta);
    nn::NodeId row_norm = g.sqrt(g.row_sums(g.square(rows)));
    {
        const nn::Tensor& rn = g.value(row_norm);
        for (std::size_t i = 0; i < rn.size(); ++i) {
            if (rn[i] == 0.0) {
                std::fprintf(stderr,
                             "warning: zero-norm topic-word row for word id %zu, "
                             "cosine clamped to %g\n",
                             x_bow.counts[i].first, p.cfg.eps_cos);
                break;
            }
        }
    }
    // floor the norm so an all-zero row yields cosine 0 -> clamped, not NaN
    row_norm = g.clamp(row_norm, 1e-12, std::numeric_limits<double>::infinity());
    const nn::NodeId theta_norm = g.sqrt(g.sum(g.square(theta)));
    const nn::NodeId cosine = g.div(dots, g.scale_by(row_norm, theta_norm));
    const nn::NodeId clamped = g.clamp(cosine, p.cfg.eps_cos, 1.0);
    return g.weighted_sum(g.log(clamped), std::move(weights));
}

LossOut loss(nn::Graph& g, Params& p, const corpus::BowVector& x_bow,
             const nn::Tensor& eps, double gamma) {
    LossOut out{};
    const EncodeOut enc = encode(g, p, x_bow);
    out.mu = enc.mu;
    out.log_sigma = enc.log_sigma;
    const nn::NodeId z = reparameterize(g, enc.mu, enc.log_sigma, eps);
    out.theta = topic_repr(g, z);
    const nn::NodeId word_dist = decode(g, p, out.theta);
    out.kl = kl_term(g, enc.mu, enc.log_sigma);
    out.recon = recon_term(g, x_bow, word_dist);
    if (gamma != 0.0) {
        out.deconf = deconf_term(g, p, x_bow, out.theta);
        out.loss = g.add(g.add(out.kl, out.recon), g.scale(out.deconf, -gamma));
    } else {
        out.deconf = g.input(nn::Tensor::scalar(0.0));
        out.loss = g.add(out.kl, out.recon);
    }
    return out;
}

TopicState infer(Params& p, const corpus::BowVector& x_bow, const nn::Tensor* eps) {
    nn::Graph g;
    const EncodeOut enc = encode(g, p, x_bow);
    const nn::Tensor noise = eps ? *eps : nn::Tensor({p.cfg.topics});
    const nn::NodeId z = reparameterize(g, enc.mu, enc.log_sigma, noise);
    const nn::NodeId theta = topic_repr(g, z);
    TopicState st;
    st.mu = g.value(enc.mu);
    st.log_sigma = g.value(enc.log_sigma);
    st.z = g.value(z);
    st.theta = g.value(theta);
    return st;
}

std::vector<std::vector<std::size_t>> top_words(const Params& p, std::size_t top_k) {
    const nn::Tensor& w = p.dec_w.value;
    const std::size_t v = p.cfg.vocab_size;
    const std::size_t k = p.cfg.topics;
    std::vector<std::vector<std::size_t>> out(k);
    std::vector<std::size_t> order(v);
    for (std::size_t topic = 0; topic < k; ++topic) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double wa = w.at(a, topic), wb = w.at(b, topic);
            if (wa != wb) return wa > wb;
            return a < b;
        });
        const std::size_t take = std::min(top_k, v);
        out[topic].assign(order.begin(), order.begin() + take);
    }
    return out;
}

}  // namespace decfd::ntm
