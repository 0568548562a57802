#include <unistd.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "decfd/errors.hpp"
#include "decfd/synth.hpp"
#include "doctest.h"

using namespace decfd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() /
                     ("decfd_synth_" + std::to_string(::getpid()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

synth::Config small_config() {
    synth::Config cfg;
    cfg.n_docs = 400;
    cfg.vocab_pool = 120;
    cfg.k_true = 4;
    cfg.doc_len_min = 6;
    cfg.doc_len_max = 12;
    cfg.pos_rate = 0.2;
    cfg.clue_correlation = 0.9;
    cfg.seed = 7;
    return cfg;
}

}  // namespace

TEST_CASE("config validation") {
    synth::Config cfg = small_config();
    cfg.clue_correlation = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.pos_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.k_true = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(cfg.set("not_a_key", "1"), ConfigError);
}

TEST_CASE("gen_corpus basic structure") {
    const auto corpus = synth::gen_corpus(small_config());
    CHECK(corpus.train.documents.size() == 400);
    CHECK(corpus.val.documents.size() == 40);
    CHECK(corpus.test_iid.documents.size() == 100);
    CHECK(corpus.test_flipped.documents.size() == 100);
    CHECK(corpus.truth.topic_word.size() == 4);
    for (const auto& row : corpus.truth.topic_word) {
        double s = 0.0;
        for (double w : row) s += w;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
    // balanced split is exactly balanced
    std::size_t pos = 0, neg = 0;
    for (const auto& d : corpus.test_balanced.documents) (d.label == 1 ? pos : neg)++;
    CHECK(pos == neg);
    CHECK(pos > 0);
    // truth rows align with documents
    REQUIRE(corpus.truth.train.size() == corpus.train.documents.size());
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(corpus.truth.train[i].doc_id == corpus.train.documents[i].id);
        CHECK(corpus.truth.train[i].mixture.size() == 4);
    }
}

TEST_CASE("same seed twice gives byte-identical output") {
    TempDir tmp;
    const auto c1 = synth::gen_corpus(small_config());
    const auto c2 = synth::gen_corpus(small_config());
    synth::write_corpus(c1, tmp.path / "a");
    synth::write_corpus(c2, tmp.path / "b");
    for (const char* name :
         {"train.tsv", "val.tsv", "test_iid.tsv", "test_flipped.tsv", "test_balanced.tsv",
          "train.truth.csv", "topics.truth.csv"}) {
        CHECK(slurp(tmp.path / "a" / name) == slurp(tmp.path / "b" / name));
        CHECK(!slurp(tmp.path / "a" / name).empty());
    }
    synth::Config other = small_config();
    other.seed = 8;
    synth::write_corpus(synth::gen_corpus(other), tmp.path / "c");
    CHECK(slurp(tmp.path / "a" / "train.tsv") != slurp(tmp.path / "c" / "train.tsv"));
}

TEST_CASE("rho=1 makes the clue flag equal the label on unflipped splits") {
    synth::Config cfg = small_config();
    cfg.clue_correlation = 1.0;
    const auto corpus = synth::gen_corpus(cfg);
    for (std::size_t i = 0; i < corpus.train.documents.size(); ++i) {
        CHECK(corpus.truth.train[i].clue == (corpus.train.documents[i].label == 1));
    }
    // and inverts on the flipped test split
    for (std::size_t i = 0; i < corpus.test_flipped.documents.size(); ++i) {
        CHECK(corpus.truth.test_flipped[i].clue ==
              (corpus.test_flipped.documents[i].label == 0));
    }
    // clue tokens really appear in the text
    std::size_t with_clue = 0;
    for (std::size_t i = 0; i < corpus.train.documents.size(); ++i) {
        if (!corpus.truth.train[i].clue) continue;
        ++with_clue;
        bool found = false;
        for (const auto& tok : corpus.train.documents[i].tokens) {
            if (tok == "if" || tok == "wish" || tok == "would" || tok == "should") {
                found = true;
                break;
            }
        }
        CHECK(found);
    }
    CHECK(with_clue > 0);
}

TEST_CASE("rho=0.5 decouples clue and label (chi-square independence)") {
    synth::Config cfg = small_config();
    cfg.n_docs = 5000;
    cfg.clue_correlation = 0.5;
    cfg.seed = 11;
    const auto corpus = synth::gen_corpus(cfg);
    // 2x2 contingency of clue flag vs label over the train split
    double n[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < corpus.train.documents.size(); ++i) {
        const int c = corpus.truth.train[i].clue ? 1 : 0;
        const int l = corpus.train.documents[i].label;
        n[c][l] += 1.0;
    }
    const double total = 5000;
    double chi2 = 0.0;
    for (int c = 0; c < 2; ++c) {
        for (int l = 0; l < 2; ++l) {
            const double row = n[c][0] + n[c][1];
            const double col = n[0][l] + n[1][l];
            const double expect = row * col / total;
            chi2 += (n[c][l] - expect) * (n[c][l] - expect) / expect;
        }
    }
    // df = 1; p > 0.01 iff chi2 below the 6.635 critical value
    CHECK(chi2 < 6.635);
}

TEST_CASE("positive share tracks pos_rate (frozen golden)") {
    synth::Config cfg = small_config();
    cfg.n_docs = 1000;
    cfg.pos_rate = 0.1;
    cfg.seed = 7;
    const auto corpus = synth::gen_corpus(cfg);
    std::size_t pos = 0;
    for (const auto& d : corpus.train.documents) pos += d.label == 1;
    // binomial 3 sigma around 100 for n=1000, p=0.1
    CHECK(pos >= 72);
    CHECK(pos <= 128);
    CHECK(pos == 98);  // frozen from the seeded generator
}

TEST_CASE("default config stats match frozen goldens") {
    const synth::Config cfg;  // defaults, seed 7
    const auto c = synth::gen_corpus(cfg);
    auto counts = [](const corpus::LabeledDataset& ds) {
        const auto st = corpus::dataset_stats(ds);
        return std::array<std::size_t, 3>{st.per_label.at(0), st.per_label.at(1), st.total};
    };
    CHECK(counts(c.train) == std::array<std::size_t, 3>{1752, 248, 2000});
    CHECK(counts(c.val) == std::array<std::size_t, 3>{172, 28, 200});
    CHECK(counts(c.test_iid) == std::array<std::size_t, 3>{420, 80, 500});
    CHECK(counts(c.test_flipped) == std::array<std::size_t, 3>{422, 78, 500});
    CHECK(counts(c.test_balanced) == std::array<std::size_t, 3>{80, 80, 160});
}

TEST_CASE("topic_concentration") {
    corpus::LabeledDataset ds;
    ds.label_set = {0, 1};
    for (int i = 0; i < 10; ++i) {
        corpus::Document d;
        d.id = "d" + std::to_string(i);
        d.label = 0;
        ds.documents.push_back(d);
    }
    SUBCASE("constant theta concentrates on one topic") {
        const auto shares = synth::topic_concentration(
            [](const corpus::Document&) { return nn::Tensor({3}, {0.1, 0.7, 0.2}); }, ds);
        CHECK(shares == std::vector<double>{0.0, 1.0, 0.0});
    }
    SUBCASE("uniform theta resolves ties to topic 0") {
        const auto shares = synth::topic_concentration(
            [](const corpus::Document&) {
                return nn::Tensor({4}, {0.25, 0.25, 0.25, 0.25});
            },
            ds);
        CHECK(shares[0] == 1.0);
    }
    SUBCASE("shares match a brute-force recount") {
        auto theta_fn = [](const corpus::Document& d) {
            const int i = d.id.back() - '0';
            nn::Tensor t({3});
            t[i % 3] = 1.0;
            return t;
        };
        const auto shares = synth::topic_concentration(theta_fn, ds);
        std::vector<double> recount(3, 0.0);
        for (const auto& d : ds.documents) {
            const nn::Tensor t = theta_fn(d);
            std::size_t best = 0;
            for (std::size_t k = 1; k < 3; ++k) {
                if (t[k] > t[best]) best = k;
            }
            recount[best] += 0.1;
        }
        for (std::size_t k = 0; k < 3; ++k) {
            CHECK(shares[k] == doctest::Approx(recount[k]).epsilon(1e-12));
        }
        double s = 0.0;
        for (double x : shares) s += x;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("concentration_entropy") {
    CHECK(synth::concentration_entropy(std::vector<double>{1.0, 0.0, 0.0}) == 0.0);
    const std::vector<double> uniform(5, 0.2);
    CHECK(synth::concentration_entropy(uniform) ==
          doctest::Approx(std::log(5.0)).epsilon(1e-12));
    const std::vector<double> mixed = {0.5, 0.3, 0.2};
    CHECK(synth::concentration_entropy(mixed) == doctest::Approx(1.0297).epsilon(1e-4));
}

TEST_CASE("clue_gap") {
    synth::Config cfg = small_config();
    const auto corpus = synth::gen_corpus(cfg);
    SUBCASE("majority-class model gap follows the class rates exactly") {
        const auto gap = synth::clue_gap(
            [](const corpus::Document&) { return 0.0; }, corpus.test_iid,
            corpus.test_flipped);
        // always-negative predictions: accuracy = share of negatives
        double neg_iid = 0.0, neg_flip = 0.0;
        for (const auto& d : corpus.test_iid.documents) neg_iid += d.label == 0;
        for (const auto& d : corpus.test_flipped.documents) neg_flip += d.label == 0;
        neg_iid /= static_cast<double>(corpus.test_iid.documents.size());
        neg_flip /= static_cast<double>(corpus.test_flipped.documents.size());
        CHECK(gap.acc_iid == doctest::Approx(neg_iid).epsilon(1e-12));
        CHECK(gap.acc_flipped == doctest::Approx(neg_flip).epsilon(1e-12));
        CHECK(gap.gap == doctest::Approx(neg_iid - neg_flip).epsilon(1e-12));
    }
    SUBCASE("label-reading oracle has zero gap") {
        const auto gap = synth::clue_gap(
            [](const corpus::Document& d) { return d.label == 1 ? 1.0 : 0.0; },
            corpus.test_iid, corpus.test_flipped);
        CHECK(gap.acc_iid == 1.0);
        CHECK(gap.acc_flipped == 1.0);
        CHECK(gap.gap == 0.0);
    }
}
