#include "decfd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "decfd/errors.hpp"
#include "decfd/rng.hpp"

namespace decfd {

namespace {

// stream ids for derived rngs; disjoint ranges keep draws independent
constexpr std::uint64_t kWarmShuffleStream = 999;
constexpr std::uint64_t kEpochShuffleStream = 1000;
constexpr std::uint64_t kStepNoiseStream = 1u << 24;

nn::Dtype dtype_of(const RunConfig& cfg) {
    return cfg.precision == "f32" ? nn::Dtype::f32 : nn::Dtype::f64;
}

}  // namespace

const char* EpochStats::csv_header() {
    return "epoch,L_cfd,L_ntm,gamma,val_acc,val_mcc,val_f1";
}

std::string EpochStats::csv_row() const {
    std::ostringstream os;
    os << epoch << ',' << format_double(mean_cfd) << ',' << format_double(mean_ntm) << ','
       << format_double(gamma) << ',';
    if (val) {
        os << format_double(val->acc) << ',' << format_double(val->mcc) << ','
           << format_double(val->f1);
    } else {
        os << ",,";
    }
    return os.str();
}

Trainer::Trainer(const RunConfig& cfg, corpus::Vocab vocab)
    : model_(Model::create(cfg, std::move(vocab))),
      adam_(model_.params(),
            nn::AdamConfig{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.l2}),
      gamma_{cfg.gamma_warmup_steps, cfg.gamma_max} {}

double Trainer::gamma_now() const {
    return gamma_.at(step_);
}

std::size_t Trainer::label_index(int label) const {
    if (label < 0 || static_cast<std::size_t>(label) >= model_.cfg.n_labels) {
        throw DataError("trainer: label " + std::to_string(label) +
                        " outside configured n_labels");
    }
    return static_cast<std::size_t>(label);
}

std::vector<std::vector<std::size_t>> Trainer::make_batches(std::size_t n_docs,
                                                            std::uint64_t shuffle_stream) {
    std::vector<std::size_t> order(n_docs);
    for (std::size_t i = 0; i < n_docs; ++i) order[i] = i;
    Rng rng = Rng(model_.cfg.seed).fork(shuffle_stream);
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    const std::size_t bs = model_.cfg.batch_size;
    for (std::size_t start = 0; start < n_docs; start += bs) {
        const std::size_t end = std::min(n_docs, start + bs);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

Trainer::BatchStats Trainer::step_batch(const corpus::LabeledDataset& ds,
                                        const std::vector<std::size_t>& batch, bool warm) {
    const RunConfig& cfg = model_.cfg;
    const std::size_t b_size = batch.size();
    const double gamma = cfg.no_deconf_tm ? 0.0 : gamma_.at(step_);
    Rng noise = Rng(cfg.seed).fork(kStepNoiseStream + step_);

    nn::Graph g;
    std::vector<nn::NodeId> theta(b_size, 0);
    std::vector<nn::NodeId> ntm_loss(b_size, 0);
    std::vector<nn::NodeId> hidden(b_size, 0);
    std::vector<nn::Tensor> h_cls_vals;
    std::vector<std::size_t> labels;
    h_cls_vals.reserve(b_size);
    labels.reserve(b_size);

    for (std::size_t b = 0; b < b_size; ++b) {
        const corpus::Document& doc = ds.documents[batch[b]];
        if (!cfg.no_ntm) {
            const corpus::BowVector bow = model_.bow(doc);
            nn::Tensor eps({cfg.topics});
            for (std::size_t k = 0; k < cfg.topics; ++k) eps[k] = noise.normal();
            const ntm::LossOut lo = ntm::loss(g, model_.ntm_p, bow, eps, gamma);
            theta[b] = lo.theta;
            ntm_loss[b] = lo.loss;
        }
        const encoder::Forward fwd = encoder::forward(g, model_.enc_p, model_.token_ids(doc));
        hidden[b] = fwd.hidden;

        const nn::Tensor& h = g.value(fwd.hidden);
        nn::Tensor cls({h.cols()});
        for (std::size_t j = 0; j < h.cols(); ++j) cls[j] = h.at(0, j);
        h_cls_vals.push_back(std::move(cls));
        labels.push_back(label_index(doc.label));
    }

    // prototype update from pre-fusion h_cls, before any intervention
    head::update_prototypes(h_cls_vals, labels, model_.protos);

    BatchStats stats;
    std::vector<nn::NodeId> totals;
    totals.reserve(b_size);
    for (std::size_t b = 0; b < b_size; ++b) {
        const corpus::Document& doc = ds.documents[batch[b]];
        nn::NodeId total;
        if (warm) {
            if (cfg.no_ntm) continue;  // nothing to optimize during the warm pass
            total = g.scale(ntm_loss[b], cfg.lambda_ntm);
            stats.ntm += g.value(ntm_loss[b]).item();
        } else {
            nn::NodeId cls;
            if (cfg.no_ntm) {
                cls = g.row(hidden[b], 0);
            } else {
                const nn::NodeId fused =
                    encoder::fuse_topic(g, model_.fuse_p, hidden[b], theta[b]);
                cls = g.row(fused, 0);
            }
            nn::NodeId cfd;
            if (cfg.multiclass_head && cfg.n_labels > 2) {
                const nn::NodeId logits = head::multi_logits(g, model_.head_p, cls,
                                                             model_.protos,
                                                             cfg.no_debias_cfd);
                cfd = head::multi_cfd_loss(g, logits, labels[b]);
            } else {
                const nn::NodeId logit =
                    cfg.no_debias_cfd ? head::plain_logit(g, model_.head_p, cls)
                                      : head::intervene(g, model_.head_p, cls, model_.protos);
                cfd = head::cfd_loss(g, logit, doc.label);
            }
            stats.cfd += g.value(cfd).item();
            if (cfg.no_ntm) {
                total = cfd;
            } else {
                total = head::total_loss(g, cfd, ntm_loss[b], cfg.lambda_ntm);
                stats.ntm += g.value(ntm_loss[b]).item();
            }
        }
        totals.push_back(total);
    }

    if (totals.empty()) {
        model_.apply_precision();  // prototypes changed even without a step
        return stats;
    }

    nn::NodeId batch_loss = totals[0];
    for (std::size_t i = 1; i < totals.size(); ++i) batch_loss = g.add(batch_loss, totals[i]);
    batch_loss = g.scale(batch_loss, 1.0 / static_cast<double>(totals.size()));

    stats.total = g.value(batch_loss).item();
    stats.cfd /= static_cast<double>(totals.size());
    stats.ntm /= static_cast<double>(totals.size());

    adam_.zero_grad();
    g.backward(batch_loss);
    adam_.step();
    model_.apply_precision();
    ++step_;
    return stats;
}

void Trainer::warm_pass(const corpus::LabeledDataset& train) {
    if (train.documents.empty()) throw DataError("trainer: empty training set");
    for (const auto& batch : make_batches(train.size(), kWarmShuffleStream)) {
        step_batch(train, batch, /*warm=*/true);
    }
    warmed_ = true;
}

EpochStats Trainer::run_epoch(const corpus::LabeledDataset& train,
                              const corpus::LabeledDataset* val) {
    if (train.documents.empty()) throw DataError("trainer: empty training set");
    double sum_cfd = 0.0, sum_ntm = 0.0;
    std::size_t n_batches = 0;
    for (const auto& batch : make_batches(train.size(), kEpochShuffleStream + epoch_)) {
        const BatchStats st = step_batch(train, batch, /*warm=*/false);
        sum_cfd += st.cfd;
        sum_ntm += st.ntm;
        ++n_batches;
    }
    ++epoch_;
    EpochStats out;
    out.epoch = epoch_;
    out.mean_cfd = sum_cfd / static_cast<double>(n_batches);
    out.mean_ntm = sum_ntm / static_cast<double>(n_batches);
    out.gamma = gamma_.at(step_);
    if (val && !val->documents.empty()) {
        out.val = evaluate(model_, *val).scores;
    }
    return out;
}

std::vector<double> Trainer::run_steps(const corpus::LabeledDataset& train, std::size_t n) {
    if (train.documents.empty()) throw DataError("trainer: empty training set");
    std::vector<double> trace;
    trace.reserve(n);
    std::uint64_t cycle = 0;
    while (trace.size() < n) {
        for (const auto& batch : make_batches(train.size(), kEpochShuffleStream + epoch_)) {
            const BatchStats st = step_batch(train, batch, /*warm=*/false);
            trace.push_back(st.total);
            if (trace.size() >= n) break;
        }
        ++epoch_;
        ++cycle;
        if (cycle > n + 1) break;  // safety against degenerate configs
    }
    return trace;
}

void Trainer::save(const std::filesystem::path& path) {
    const nn::Dtype dt = dtype_of(model_.cfg);
    std::vector<nn::NamedTensor> tensors;
    for (nn::Param* p : model_.params()) {
        tensors.push_back({p->name, p->value, dt});
    }
    for (std::size_t i = 0; i < adam_.num_params(); ++i) {
        tensors.push_back({"adam.m." + adam_.param(i).name, adam_.m(i), dt});
        tensors.push_back({"adam.v." + adam_.param(i).name, adam_.v(i), dt});
    }
    tensors.push_back({"state.adam_t", nn::Tensor::scalar(static_cast<double>(adam_.t())),
                       nn::Dtype::f64});
    tensors.push_back(
        {"state.step", nn::Tensor::scalar(static_cast<double>(step_)), nn::Dtype::f64});
    tensors.push_back(
        {"state.epoch", nn::Tensor::scalar(static_cast<double>(epoch_)), nn::Dtype::f64});
    tensors.push_back(
        {"state.warmed", nn::Tensor::scalar(warmed_ ? 1.0 : 0.0), nn::Dtype::f64});
    for (std::size_t l = 0; l < model_.protos.n_labels(); ++l) {
        const std::string pre = "proto." + std::to_string(l) + ".";
        tensors.push_back({pre + "value", model_.protos.vectors[l], dt});
        tensors.push_back({pre + "count",
                           nn::Tensor::scalar(static_cast<double>(model_.protos.counts_seen[l])),
                           nn::Dtype::f64});
        tensors.push_back({pre + "init",
                           nn::Tensor::scalar(model_.protos.initialized[l] ? 1.0 : 0.0),
                           nn::Dtype::f64});
    }
    nn::save_checkpoint(path, tensors);
}

void Trainer::restore(const std::filesystem::path& path) {
    std::map<std::string, nn::Tensor> by_name;
    for (nn::NamedTensor& nt : nn::load_checkpoint(path)) {
        by_name.emplace(std::move(nt.name), std::move(nt.tensor));
    }
    auto take = [&](const std::string& name) -> nn::Tensor {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw CheckpointError("checkpoint: missing tensor '" + name + "' in " +
                                  path.string());
        }
        return std::move(it->second);
    };
    auto fill = [&](nn::Tensor& dst, nn::Tensor src, const std::string& name) {
        if (!dst.same_shape(src)) {
            throw CheckpointError("checkpoint: shape mismatch for '" + name +
                                  "' (config and checkpoint disagree)");
        }
        dst = std::move(src);
    };
    for (nn::Param* p : model_.params()) fill(p->value, take(p->name), p->name);
    for (std::size_t i = 0; i < adam_.num_params(); ++i) {
        const std::string& n = adam_.param(i).name;
        fill(adam_.m(i), take("adam.m." + n), "adam.m." + n);
        fill(adam_.v(i), take("adam.v." + n), "adam.v." + n);
    }
    adam_.set_t(static_cast<std::size_t>(take("state.adam_t").item()));
    step_ = static_cast<std::size_t>(take("state.step").item());
    epoch_ = static_cast<std::size_t>(take("state.epoch").item());
    warmed_ = take("state.warmed").item() != 0.0;
    for (std::size_t l = 0; l < model_.protos.n_labels(); ++l) {
        const std::string pre = "proto." + std::to_string(l) + ".";
        fill(model_.protos.vectors[l], take(pre + "value"), pre + "value");
        model_.protos.counts_seen[l] = static_cast<std::size_t>(take(pre + "count").item());
        model_.protos.initialized[l] = take(pre + "init").item() != 0.0;
    }
}

}  // namespace decfd
