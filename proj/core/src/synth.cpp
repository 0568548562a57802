#include "decfd/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "decfd/config.hpp"
#include "decfd/errors.hpp"
#include "decfd/rng.hpp"

namespace decfd::synth {

const std::vector<std::string>& clue_phrases() {
    static const std::vector<std::string> phrases = {"if", "i wish", "would have",
                                                     "should have"};
    return phrases;
}

const std::vector<std::string>& Config::known_keys() {
    static const std::vector<std::string> keys = {
        "n_docs",          "vocab_pool",   "k_true",
        "doc_len_min",     "doc_len_max",  "pos_rate",
        "clue_correlation", "dirichlet_alpha", "label_topic_boost",
        "balanced_per_class", "seed"};
    return keys;
}

void Config::set(const std::string& key, const std::string& value) {
    auto to_size = [&](const char* k) -> std::size_t {
        try {
            return static_cast<std::size_t>(std::stoull(value));
        } catch (const std::exception&) {
            throw ConfigError(std::string("synth config: bad integer for ") + k);
        }
    };
    auto to_double = [&](const char* k) -> double {
        try {
            return std::stod(value);
        } catch (const std::exception&) {
            throw ConfigError(std::string("synth config: bad number for ") + k);
        }
    };
    if (key == "n_docs") n_docs = to_size("n_docs");
    else if (key == "vocab_pool") vocab_pool = to_size("vocab_pool");
    else if (key == "k_true") k_true = to_size("k_true");
    else if (key == "doc_len_min") doc_len_min = to_size("doc_len_min");
    else if (key == "doc_len_max") doc_len_max = to_size("doc_len_max");
    else if (key == "pos_rate") pos_rate = to_double("pos_rate");
    else if (key == "clue_correlation") clue_correlation = to_double("clue_correlation");
    else if (key == "dirichlet_alpha") dirichlet_alpha = to_double("dirichlet_alpha");
    else if (key == "label_topic_boost") label_topic_boost = to_double("label_topic_boost");
    else if (key == "balanced_per_class") balanced_per_class = to_size("balanced_per_class");
    else if (key == "seed") seed = to_size("seed");
    else throw ConfigError("synth config: unknown key '" + key + "'");
}

void Config::apply_file(const std::filesystem::path& path) {
    for (const auto& [k, v] : parse_kv_file(path)) set(k, v);
}

void Config::apply_env() {
    for (const std::string& key : known_keys()) {
        std::string env_name = "DECFD_";
        for (char c : key) env_name.push_back(static_cast<char>(std::toupper(c)));
        if (const char* v = std::getenv(env_name.c_str())) set(key, v);
    }
}

void Config::apply_overrides(const std::vector<std::string>& overrides) {
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("synth config: override must be key=value, got '" + kv + "'");
        }
        std::string k = kv.substr(0, eq);
        std::string v = kv.substr(eq + 1);
        while (!k.empty() && std::isspace(static_cast<unsigned char>(k.back()))) k.pop_back();
        while (!v.empty() && std::isspace(static_cast<unsigned char>(v.front()))) v.erase(0, 1);
        set(k, v);
    }
}

void Config::validate() const {
    if (n_docs == 0) throw ConfigError("synth config: n_docs must be >= 1");
    if (vocab_pool < 10) throw ConfigError("synth config: vocab_pool must be >= 10");
    if (k_true < 2) throw ConfigError("synth config: k_true must be >= 2");
    if (doc_len_min == 0 || doc_len_max < doc_len_min) {
        throw ConfigError("synth config: need 0 < doc_len_min <= doc_len_max");
    }
    if (!(pos_rate > 0.0 && pos_rate < 1.0)) {
        throw ConfigError("synth config: pos_rate must be in (0, 1)");
    }
    if (clue_correlation < 0.0 || clue_correlation > 1.0) {
        throw ConfigError("synth config: clue_correlation must be in [0, 1]");
    }
    if (!(dirichlet_alpha > 0.0)) {
        throw ConfigError("synth config: dirichlet_alpha must be > 0");
    }
    if (label_topic_boost < 0.0) {
        throw ConfigError("synth config: label_topic_boost must be >= 0");
    }
}

namespace {

std::string pool_word(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "w%04zu", index);
    return buf;
}

std::size_t sample_categorical(Rng& rng, const std::vector<double>& probs) {
    const double u = rng.uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

struct SplitSpec {
    std::string name;
    std::size_t count;
    bool flipped;
    corpus::Split tag;
};

}  // namespace

GeneratedCorpus gen_corpus(const Config& cfg) {
    cfg.validate();
    Rng base(cfg.seed);

    // planted topics: block-structured Dirichlet rows so topics are distinct
    Rng topic_rng = base.fork(1);
    std::vector<std::vector<double>> topic_word(cfg.k_true);
    const std::size_t block = std::max<std::size_t>(1, cfg.vocab_pool / cfg.k_true);
    for (std::size_t k = 0; k < cfg.k_true; ++k) {
        std::vector<double> alpha(cfg.vocab_pool, 0.01);
        const std::size_t lo = k * block;
        const std::size_t hi = k + 1 == cfg.k_true ? cfg.vocab_pool
                                                   : std::min(cfg.vocab_pool, lo + block);
        for (std::size_t w = lo; w < hi; ++w) alpha[w] = 1.0;
        topic_word[k] = topic_rng.dirichlet(alpha);
    }

    GeneratedCorpus out;
    out.truth.topic_word = topic_word;

    const SplitSpec specs[] = {
        {"train", cfg.n_docs, false, corpus::Split::train},
        {"val", cfg.n_val(), false, corpus::Split::val},
        {"test_iid", cfg.n_test(), false, corpus::Split::test},
        {"test_flipped", cfg.n_test(), true, corpus::Split::test},
    };

    std::uint64_t doc_stream = 100;
    for (const SplitSpec& spec : specs) {
        corpus::LabeledDataset ds;
        ds.label_set = {0, 1};
        ds.split = spec.tag;
        std::vector<DocTruth> truths;
        for (std::size_t i = 0; i < spec.count; ++i) {
            Rng rng = base.fork(doc_stream++);
            const int label = rng.bernoulli(cfg.pos_rate) ? 1 : 0;

            // label-conditioned topic confound: each label boosts its topic
            std::vector<double> alpha(cfg.k_true, cfg.dirichlet_alpha);
            alpha[label == 1 ? 0 : 1] += cfg.label_topic_boost;
            const std::vector<double> mixture = rng.dirichlet(alpha);

            const std::size_t len =
                cfg.doc_len_min + rng.uniform_int(cfg.doc_len_max - cfg.doc_len_min + 1);
            std::vector<std::string> tokens;
            tokens.reserve(len + 3);
            for (std::size_t w = 0; w < len; ++w) {
                const std::size_t topic = sample_categorical(rng, mixture);
                tokens.push_back(pool_word(sample_categorical(rng, topic_word[topic])));
            }

            const double clue_rate = (label == 1) != spec.flipped
                                         ? cfg.clue_correlation
                                         : 1.0 - cfg.clue_correlation;
            const bool insert_clue = rng.bernoulli(clue_rate);
            if (insert_clue) {
                const std::string& phrase =
                    clue_phrases()[rng.uniform_int(clue_phrases().size())];
                const std::vector<std::string> clue_tokens = corpus::tokenize(phrase);
                const std::size_t at = rng.uniform_int(tokens.size() + 1);
                tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(at),
                              clue_tokens.begin(), clue_tokens.end());
            }

            corpus::Document doc;
            {
                char idbuf[48];
                std::snprintf(idbuf, sizeof(idbuf), "%s-%06zu", spec.name.c_str(), i);
                doc.id = idbuf;
            }
            doc.label = label;
            std::ostringstream text;
            for (std::size_t t = 0; t < tokens.size(); ++t) {
                if (t) text << ' ';
                text << tokens[t];
            }
            doc.raw_text = text.str();
            doc.tokens = std::move(tokens);
            ds.documents.push_back(std::move(doc));
            truths.push_back(DocTruth{ds.documents.back().id, insert_clue, mixture});
        }
        if (spec.name == "train") {
            out.train = std::move(ds);
            out.truth.train = std::move(truths);
        } else if (spec.name == "val") {
            out.val = std::move(ds);
            out.truth.val = std::move(truths);
        } else if (spec.name == "test_iid") {
            out.test_iid = std::move(ds);
            out.truth.test_iid = std::move(truths);
        } else {
            out.test_flipped = std::move(ds);
            out.truth.test_flipped = std::move(truths);
        }
    }

    // balanced subsample of test_iid
    std::size_t per_class = cfg.balanced_per_class;
    if (per_class == 0) {
        const auto st = corpus::dataset_stats(out.test_iid);
        per_class = st.per_label.empty() ? 0 : st.per_label.begin()->second;
        for (const auto& [label, n] : st.per_label) per_class = std::min(per_class, n);
    }
    out.test_balanced = corpus::balanced_subsample(out.test_iid, per_class,
                                                   cfg.seed ^ 0xba1a9cedULL);
    {
        std::map<std::string, const DocTruth*> by_id;
        for (const DocTruth& t : out.truth.test_iid) by_id[t.doc_id] = &t;
        for (const corpus::Document& d : out.test_balanced.documents) {
            out.truth.test_balanced.push_back(*by_id.at(d.id));
        }
    }
    return out;
}

namespace {

void write_truth_csv(const std::filesystem::path& path, const std::vector<DocTruth>& rows,
                     std::size_t k_true) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("synth: cannot open for writing: " + path.string());
    out << "doc_id,clue_flag";
    for (std::size_t k = 0; k < k_true; ++k) out << ",mix_" << k;
    out << '\n';
    for (const DocTruth& t : rows) {
        out << t.doc_id << ',' << (t.clue ? 1 : 0);
        for (double m : t.mixture) out << ',' << format_double(m);
        out << '\n';
    }
}

}  // namespace

void write_corpus(const GeneratedCorpus& corpus, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::size_t k_true = corpus.truth.topic_word.size();
    corpus::save_tsv(dir / "train.tsv", corpus.train);
    corpus::save_tsv(dir / "val.tsv", corpus.val);
    corpus::save_tsv(dir / "test_iid.tsv", corpus.test_iid);
    corpus::save_tsv(dir / "test_flipped.tsv", corpus.test_flipped);
    corpus::save_tsv(dir / "test_balanced.tsv", corpus.test_balanced);
    write_truth_csv(dir / "train.truth.csv", corpus.truth.train, k_true);
    write_truth_csv(dir / "val.truth.csv", corpus.truth.val, k_true);
    write_truth_csv(dir / "test_iid.truth.csv", corpus.truth.test_iid, k_true);
    write_truth_csv(dir / "test_flipped.truth.csv", corpus.truth.test_flipped, k_true);
    write_truth_csv(dir / "test_balanced.truth.csv", corpus.truth.test_balanced, k_true);
    {
        std::ofstream out(dir / "topics.truth.csv", std::ios::trunc);
        if (!out) throw DataError("synth: cannot write topics.truth.csv");
        for (std::size_t k = 0; k < k_true; ++k) {
            out << "topic_" << k;
            for (double w : corpus.truth.topic_word[k]) out << ',' << format_double(w);
            out << '\n';
        }
    }
}

std::vector<double> topic_concentration(
    const std::function<nn::Tensor(const corpus::Document&)>& theta_fn,
    const corpus::LabeledDataset& ds) {
    if (ds.documents.empty()) return {};
    std::vector<double> shares;
    for (const corpus::Document& doc : ds.documents) {
        const nn::Tensor theta = theta_fn(doc);
        if (shares.empty()) shares.assign(theta.size(), 0.0);
        std::size_t best = 0;
        for (std::size_t k = 1; k < theta.size(); ++k) {
            if (theta[k] > theta[best]) best = k;  // ties keep the lowest index
        }
        shares[best] += 1.0;
    }
    const double n = static_cast<double>(ds.documents.size());
    for (double& s : shares) s /= n;
    return shares;
}

double concentration_entropy(std::span<const double> shares) {
    double h = 0.0;
    for (double s : shares) {
        if (s > 0.0) h -= s * std::log(s);
    }
    return h;
}

ClueGap clue_gap(const std::function<double(const corpus::Document&)>& prob_fn,
                 const corpus::LabeledDataset& test_iid,
                 const corpus::LabeledDataset& test_flipped, double threshold) {
    auto acc_on = [&](const corpus::LabeledDataset& ds) {
        std::size_t correct = 0;
        for (const corpus::Document& doc : ds.documents) {
            const bool pred = prob_fn(doc) >= threshold;
            if (pred == (doc.label == 1)) ++correct;
        }
        if (ds.documents.empty()) throw DataError("clue_gap: empty split");
        return static_cast<double>(correct) / static_cast<double>(ds.documents.size());
    };
    ClueGap out;
    out.acc_iid = acc_on(test_iid);
    out.acc_flipped = acc_on(test_flipped);
    out.gap = out.acc_iid - out.acc_flipped;
    return out;
}

}  // namespace decfd::synth
