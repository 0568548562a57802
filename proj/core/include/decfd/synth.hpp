#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "decfd/corpus.hpp"
#include "decfd/tensor.hpp"

namespace decfd::synth {

/// Clue phrases that correlate with the positive label; mirrors the surface
/// markers counterfactual classifiers latch onto.
const std::vector<std::string>& clue_phrases();

struct Config {
    std::size_t n_docs = 2000;      // train split size; other splits derive from it
    std::size_t vocab_pool = 600;   // distinct content words
    std::size_t k_true = 6;         // planted topics
    std::size_t doc_len_min = 8;
    std::size_t doc_len_max = 20;
    double pos_rate = 0.13;         // positive-label share
    double clue_correlation = 0.9;  // rho: clue insertion rate for positives
    double dirichlet_alpha = 0.3;
    double label_topic_boost = 2.0;  // pseudo-count added to a label's designated topic
    std::size_t balanced_per_class = 0;  // 0: use the smaller class of test_iid
    std::uint64_t seed = 7;

    std::size_t n_val() const { return std::max<std::size_t>(1, n_docs / 10); }
    std::size_t n_test() const { return std::max<std::size_t>(1, n_docs / 4); }

    void set(const std::string& key, const std::string& value);
    void apply_file(const std::filesystem::path& path);
    void apply_env();
    void apply_overrides(const std::vector<std::string>& overrides);
    void validate() const;

    static const std::vector<std::string>& known_keys();
};

struct DocTruth {
    std::string doc_id;
    bool clue = false;
    std::vector<double> mixture;  // k_true entries
};

struct TopicGroundTruth {
    std::vector<std::vector<double>> topic_word;  // k_true rows over vocab_pool
    std::vector<DocTruth> train, val, test_iid, test_flipped, test_balanced;
};

struct GeneratedCorpus {
    corpus::LabeledDataset train, val, test_iid, test_flipped, test_balanced;
    TopicGroundTruth truth;
};

/// Fully seeded corpus with a planted label-topic confound and clue-phrase
/// bias. Positives receive a clue with probability rho, negatives with 1-rho;
/// test_flipped inverts the pairing; test_balanced is a balanced subsample of
/// test_iid.
GeneratedCorpus gen_corpus(const Config& cfg);

void write_corpus(const GeneratedCorpus& corpus, const std::filesystem::path& dir);

/// Per-topic share of documents whose argmax theta lands on that topic.
/// Argmax ties resolve to the lowest index. Shares sum to 1.
std::vector<double> topic_concentration(
    const std::function<nn::Tensor(const corpus::Document&)>& theta_fn,
    const corpus::LabeledDataset& ds);

/// Shannon entropy of the share vector, in nats.
double concentration_entropy(std::span<const double> shares);

struct ClueGap {
    double acc_iid = 0.0;
    double acc_flipped = 0.0;
    double gap = 0.0;  // acc_iid - acc_flipped; smaller means less clue reliance
};

ClueGap clue_gap(const std::function<double(const corpus::Document&)>& prob_fn,
                 const corpus::LabeledDataset& test_iid,
                 const corpus::LabeledDataset& test_flipped, double threshold = 0.5);

}  // namespace decfd::synth
