#include "decfd/model.hpp"

#include <stdexcept>

#include "decfd/errors.hpp"
#include "decfd/rng.hpp"

namespace decfd {

Model Model::create(const RunConfig& cfg, corpus::Vocab vocab) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    m.vocab = std::move(vocab);

    Rng init_rng = Rng(cfg.seed).fork(0);
    ntm::Config ncfg;
    ncfg.vocab_size = m.vocab.size();
    ncfg.topics = cfg.topics;
    ncfg.hidden = cfg.ntm_hidden;
    ncfg.decoder_relu = cfg.ntm_decoder_relu;
    ncfg.eps_cos = cfg.eps_cos;
    m.ntm_p.init(ncfg, init_rng);

    encoder::Config ecfg;
    ecfg.d_model = cfg.d_model;
    ecfg.n_layers = cfg.n_layers;
    ecfg.n_heads = cfg.n_heads;
    ecfg.max_len = cfg.max_len;
    ecfg.vocab_size = m.vocab.encoder_vocab_size();
    m.enc_p.init(ecfg, init_rng);

    m.fuse_p.init(cfg.d_model, cfg.topics, init_rng);
    m.head_p.init(cfg.d_model, cfg.n_labels, init_rng);
    m.protos = head::Prototypes(cfg.n_labels, cfg.d_model, cfg.proto_momentum);
    m.apply_precision();
    return m;
}

std::vector<nn::Param*> Model::params() {
    std::vector<nn::Param*> out = ntm_p.params();
    for (nn::Param* p : enc_p.params()) out.push_back(p);
    for (nn::Param* p : fuse_p.params()) out.push_back(p);
    for (nn::Param* p : head_p.params()) out.push_back(p);
    return out;
}

corpus::BowVector Model::bow(const corpus::Document& doc) const {
    const auto* stop = cfg.bow_stopwords ? &corpus::builtin_stopwords() : nullptr;
    return corpus::to_bow(doc, vocab, stop);
}

std::vector<std::size_t> Model::token_ids(const corpus::Document& doc) const {
    return vocab.encode_tokens(doc.tokens);
}

ntm::TopicState Model::topic_state(const corpus::Document& doc) {
    return ntm::infer(ntm_p, bow(doc));
}

encoder::Forward Model::encode_doc(nn::Graph& g, const corpus::Document& doc) {
    const std::vector<std::size_t> ids = token_ids(doc);
    return encoder::forward(g, enc_p, ids);
}

double Model::predict_prob(const corpus::Document& doc) {
    if (cfg.n_labels != 2) {
        throw DataError("predict_prob: only binary evaluation is supported");
    }
    nn::Graph g;
    const encoder::Forward fwd = encode_doc(g, doc);
    nn::NodeId cls;
    if (cfg.no_ntm) {
        cls = g.row(fwd.hidden, 0);
    } else {
        const ntm::TopicState ts = topic_state(doc);
        const nn::NodeId theta = g.input(ts.theta);
        const nn::NodeId fused = encoder::fuse_topic(g, fuse_p, fwd.hidden, theta);
        cls = g.row(fused, 0);
    }
    const nn::NodeId logit = cfg.no_debias_cfd ? head::plain_logit(g, head_p, cls)
                                               : head::intervene(g, head_p, cls, protos);
    return head::predict(g.value(logit).item(), cfg.n_labels);
}

void Model::apply_precision() {
    if (cfg.precision != "f32") return;
    auto squash = [](nn::Tensor& t) {
        double* d = t.data();
        for (std::size_t i = 0; i < t.size(); ++i) {
            d[i] = static_cast<double>(static_cast<float>(d[i]));
        }
    };
    for (nn::Param* p : params()) squash(p->value);
    for (nn::Tensor& v : protos.vectors) squash(v);
}

EvalResult evaluate(Model& model, const corpus::LabeledDataset& ds, double threshold) {
    if (ds.documents.empty()) throw DataError("evaluate: empty dataset");
    EvalResult r;
    r.probs.reserve(ds.documents.size());
    std::vector<int> labels;
    labels.reserve(ds.documents.size());
    for (const corpus::Document& doc : ds.documents) {
        r.probs.push_back(model.predict_prob(doc));
        labels.push_back(doc.label);
    }
    r.confusion = metrics::confusion(r.probs, labels, threshold);
    r.scores = metrics::scores(r.confusion);
    return r;
}

}  // namespace decfd
