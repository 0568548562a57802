#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "decfd/corpus.hpp"
#include "decfd/errors.hpp"
#include "decfd/rng.hpp"
#include "doctest.h"

using namespace decfd;
using corpus::Document;
using corpus::LabeledDataset;
using corpus::Vocab;

namespace {

Document mk_doc(const std::string& text, int label = 0, const std::string& id = "d") {
    Document d;
    d.id = id;
    d.label = label;
    d.raw_text = text;
    d.tokens = corpus::tokenize(text);
    return d;
}

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() /
                     ("decfd_corpus_" + std::to_string(::getpid()))) {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("tokenize") {
    CHECK(corpus::tokenize("").empty());
    CHECK(corpus::tokenize("   \t\n ").empty());

    const auto t = corpus::tokenize("I wish I knew.");
    CHECK(t == std::vector<std::string>{"i", "wish", "i", "knew", "."});

    const auto t2 =
        corpus::tokenize("Who would have thought a pillow could make such a difference.");
    REQUIRE(t2.size() == 12);
    CHECK(t2[0] == "who");
    CHECK(t2[1] == "would");
    CHECK(t2[2] == "have");
    CHECK(t2[11] == ".");

    // punctuation runs collapse to one token
    const auto t3 = corpus::tokenize("wait... what?!");
    CHECK(t3 == std::vector<std::string>{"wait", "...", "what", "?!"});

    // non-ASCII runs survive as word tokens
    const auto t4 = corpus::tokenize("das Buch ist schön");
    CHECK(t4.size() == 4);
    CHECK(t4[3] == "schön");
}

TEST_CASE("tokenize of joined tokens is idempotent") {
    Rng rng(3);
    const std::vector<std::string> pool = {"alpha", "beta", "42", ".", "!!", "word"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> toks;
        const std::size_t n = 1 + rng.uniform_int(12);
        for (std::size_t i = 0; i < n; ++i) toks.push_back(pool[rng.uniform_int(pool.size())]);
        std::string joined;
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (i) joined += ' ';
            joined += toks[i];
        }
        CHECK(corpus::tokenize(joined) == toks);
    }
}

TEST_CASE("build_vocab ordering, thresholds, caps") {
    SUBCASE("basic ordering") {
        const auto v = Vocab::build({mk_doc("a a b")}, 1, 0);
        REQUIRE(v.size() == 2);
        CHECK(v.id_of("a") == 0);
        CHECK(v.id_of("b") == 1);
        CHECK(v.count_of(0) == 2);
    }
    SUBCASE("min_count filter") {
        const auto v = Vocab::build({mk_doc("a a b")}, 2, 0);
        REQUIRE(v.size() == 1);
        CHECK(v.id_of("a") == 0);
        CHECK(!v.id_of("b").has_value());
    }
    SUBCASE("nothing survives min_count") {
        CHECK_THROWS_AS((void)Vocab::build({mk_doc("a b c")}, 5, 0), DataError);
    }
    SUBCASE("frequency ties break lexicographically") {
        const auto v = Vocab::build({mk_doc("zz aa zz aa mm")}, 1, 0);
        CHECK(v.id_of("aa") == 0);
        CHECK(v.id_of("zz") == 1);
        CHECK(v.id_of("mm") == 2);
    }
    SUBCASE("max_size cap on a wide synthetic corpus") {
        std::vector<Document> docs;
        for (int i = 0; i < 1000; ++i) {
            // >500 distinct tokens overall, frequency descending with i
            std::string text;
            for (int j = 0; j < 3; ++j) {
                text += "tok" + std::to_string((i * 3 + j) % 650) + " ";
            }
            docs.push_back(mk_doc(text));
        }
        const auto v = Vocab::build(docs, 1, 500);
        CHECK(v.size() == 500);
    }
    SUBCASE("document order does not matter") {
        std::vector<Document> docs = {mk_doc("red green"), mk_doc("blue red"),
                                      mk_doc("green red blue blue")};
        const auto v1 = Vocab::build(docs, 1, 0);
        std::swap(docs[0], docs[2]);
        const auto v2 = Vocab::build(docs, 1, 0);
        REQUIRE(v1.size() == v2.size());
        for (std::size_t i = 0; i < v1.size(); ++i) {
            CHECK(v1.token_of(i) == v2.token_of(i));
            CHECK(v1.count_of(i) == v2.count_of(i));
        }
        CHECK(v1.hash() == v2.hash());
    }
}

TEST_CASE("to_bow") {
    const auto vocab = Vocab::build({mk_doc("a a b c")}, 1, 0);
    SUBCASE("counts and OOV drop") {
        const auto bow = corpus::to_bow(mk_doc("a a b"), vocab);
        REQUIRE(bow.counts.size() == 2);
        CHECK(bow.counts[0].first == *vocab.id_of("a"));
        CHECK(bow.counts[0].second == 2);
        CHECK(bow.counts[1].second == 1);
        CHECK(bow.total() == 3);
    }
    SUBCASE("document with no in-vocab tokens") {
        const auto bow = corpus::to_bow(mk_doc("zz yy"), vocab);
        CHECK(bow.empty());
        CHECK(bow.dense().sum() == 0.0);
    }
    SUBCASE("missing word excluded") {
        const auto sent =
            mk_doc("Who would have thought a pillow could make such a difference.");
        const auto v2 = Vocab::build({mk_doc("who would have thought such a difference .")},
                                     1, 0);
        const auto bow = corpus::to_bow(sent, v2);
        for (const auto& [id, c] : bow.counts) CHECK(v2.token_of(id) != "pillow");
        // conservation: in-vocab + dropped = token count
        std::size_t dropped = 0;
        for (const auto& tok : sent.tokens) {
            if (!v2.id_of(tok)) ++dropped;
        }
        CHECK(bow.total() + dropped == sent.tokens.size());
    }
    SUBCASE("stopword filtering is flag-driven") {
        const auto v3 = Vocab::build({mk_doc("the cat sat on the mat")}, 1, 0);
        const auto with = corpus::to_bow(mk_doc("the cat"), v3);
        const auto without = corpus::to_bow(mk_doc("the cat"), v3, &corpus::builtin_stopwords());
        CHECK(with.total() == 2);
        CHECK(without.total() == 1);
    }
}

TEST_CASE("bow is invariant to word order") {
    const auto vocab = Vocab::build({mk_doc("red green blue")}, 1, 0);
    const auto a = corpus::to_bow(mk_doc("red green blue red"), vocab);
    const auto b = corpus::to_bow(mk_doc("blue red red green"), vocab);
    CHECK(a.counts == b.counts);
}

TEST_CASE("bow conservation property over random docs") {
    Rng rng(8);
    const auto vocab = Vocab::build({mk_doc("one two three four five six")}, 1, 0);
    const std::vector<std::string> pool = {"one", "two",  "three", "four",
                                           "five", "six", "zzz",   "yyy"};
    for (int trial = 0; trial < 100; ++trial) {
        std::string text;
        const std::size_t n = rng.uniform_int(20);
        for (std::size_t i = 0; i < n; ++i) text += pool[rng.uniform_int(pool.size())] + " ";
        const auto doc = mk_doc(text);
        const auto bow = corpus::to_bow(doc, vocab);
        std::size_t dropped = 0;
        for (const auto& tok : doc.tokens) {
            if (!vocab.id_of(tok)) ++dropped;
        }
        CHECK(bow.total() + dropped == doc.tokens.size());
    }
}

TEST_CASE("vocab save/load/hash round trip") {
    TempDir tmp;
    const auto v = Vocab::build({mk_doc("apple banana apple cherry banana apple")}, 1, 0);
    v.save(tmp.path / "vocab.tsv");
    const auto v2 = Vocab::load(tmp.path / "vocab.tsv");
    REQUIRE(v2.size() == v.size());
    CHECK(v2.id_of("apple") == v.id_of("apple"));
    CHECK(v2.count_of(0) == 3);
    CHECK(v2.hash() == v.hash());
}

TEST_CASE("load_tsv well formed and malformed") {
    TempDir tmp;
    const auto label_map = corpus::default_label_map();
    SUBCASE("three rows") {
        std::ofstream out(tmp.path / "ok.tsv");
        out << "r1\t0\thello world\n";
        out << "r2\t1\ti wish it worked\n";
        out << "r3\tcounterfactual\tif only\n";
        out.close();
        const auto ds = corpus::load_tsv(tmp.path / "ok.tsv", label_map);
        REQUIRE(ds.documents.size() == 3);
        CHECK(ds.documents[0].label == 0);
        CHECK(ds.documents[2].label == 1);
        CHECK(ds.documents[1].tokens[0] == "i");
        CHECK(ds.label_set == std::vector<int>{0, 1});
    }
    SUBCASE("header row is skipped") {
        std::ofstream out(tmp.path / "hdr.tsv");
        out << "id\tlabel\ttext\n";
        out << "r1\t1\tsome text\n";
        out.close();
        const auto ds = corpus::load_tsv(tmp.path / "hdr.tsv", label_map);
        CHECK(ds.documents.size() == 1);
    }
    SUBCASE("two-field row errors with line number") {
        std::ofstream out(tmp.path / "bad.tsv");
        out << "r1\t0\tfine\n";
        out << "r2\t1\n";
        out.close();
        try {
            (void)corpus::load_tsv(tmp.path / "bad.tsv", label_map);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
    SUBCASE("extra tab errors") {
        std::ofstream out(tmp.path / "tab.tsv");
        out << "r1\t0\ttext with\ttab\n";
        out.close();
        CHECK_THROWS_AS((void)corpus::load_tsv(tmp.path / "tab.tsv", label_map), DataError);
    }
    SUBCASE("unknown label errors") {
        std::ofstream out(tmp.path / "lbl.tsv");
        out << "r1\tmaybe\ttext\n";
        out.close();
        CHECK_THROWS_AS((void)corpus::load_tsv(tmp.path / "lbl.tsv", label_map), DataError);
    }
    SUBCASE("missing file errors") {
        CHECK_THROWS_AS((void)corpus::load_tsv(tmp.path / "nope.tsv", label_map), DataError);
    }
}

TEST_CASE("loader fixture mirroring the En corpus sizes") {
    // train 4018, val 335, test 670 with 131 positive / 539 negative in test
    TempDir tmp;
    auto write_rows = [](const fs::path& p, std::size_t n, std::size_t n_pos) {
        std::ofstream out(p);
        for (std::size_t i = 0; i < n; ++i) {
            out << "row" << i << '\t' << (i < n_pos ? 1 : 0) << "\tsample text " << i << '\n';
        }
    };
    write_rows(tmp.path / "train.tsv", 4018, 762);
    write_rows(tmp.path / "val.tsv", 335, 61);
    write_rows(tmp.path / "test.tsv", 670, 131);

    const auto label_map = corpus::default_label_map();
    const auto train = corpus::load_tsv(tmp.path / "train.tsv", label_map, corpus::Split::train);
    const auto val = corpus::load_tsv(tmp.path / "val.tsv", label_map, corpus::Split::val);
    const auto test = corpus::load_tsv(tmp.path / "test.tsv", label_map, corpus::Split::test);

    CHECK(train.documents.size() == 4018);
    CHECK(val.documents.size() == 335);
    CHECK(test.documents.size() == 670);
    CHECK(train.documents.size() + val.documents.size() + test.documents.size() == 5023);

    const auto st = corpus::dataset_stats(test);
    CHECK(st.per_label.at(1) == 131);
    CHECK(st.per_label.at(0) == 539);
    CHECK(st.total == 670);
    CHECK(st.table().find("total=670") != std::string::npos);
}

TEST_CASE("dataset_stats on empty dataset") {
    LabeledDataset ds;
    ds.label_set = {0, 1};
    const auto st = corpus::dataset_stats(ds);
    CHECK(st.total == 0);
    CHECK(st.per_label.at(0) == 0);
    CHECK(st.per_label.at(1) == 0);
}

TEST_CASE("balanced_subsample") {
    LabeledDataset ds;
    ds.label_set = {0, 1};
    for (int i = 0; i < 40; ++i) ds.documents.push_back(mk_doc("x", 0, "n" + std::to_string(i)));
    for (int i = 0; i < 10; ++i) ds.documents.push_back(mk_doc("x", 1, "p" + std::to_string(i)));

    SUBCASE("per_class zero gives empty dataset") {
        CHECK(corpus::balanced_subsample(ds, 0, 1).documents.empty());
    }
    SUBCASE("exactly per_class per label") {
        const auto sub = corpus::balanced_subsample(ds, 7, 3);
        const auto st = corpus::dataset_stats(sub);
        CHECK(st.per_label.at(0) == 7);
        CHECK(st.per_label.at(1) == 7);
    }
    SUBCASE("full class returned whole") {
        const auto sub = corpus::balanced_subsample(ds, 10, 5);
        std::set<std::string> pos_ids;
        for (const auto& d : sub.documents) {
            if (d.label == 1) pos_ids.insert(d.id);
        }
        CHECK(pos_ids.size() == 10);  // every positive included exactly once
    }
    SUBCASE("deterministic per seed") {
        const auto a = corpus::balanced_subsample(ds, 5, 42);
        const auto b = corpus::balanced_subsample(ds, 5, 42);
        const auto c = corpus::balanced_subsample(ds, 5, 43);
        std::multiset<std::string> ia, ib, ic;
        for (const auto& d : a.documents) ia.insert(d.id);
        for (const auto& d : b.documents) ib.insert(d.id);
        for (const auto& d : c.documents) ic.insert(d.id);
        CHECK(ia == ib);
        CHECK(ia != ic);
    }
    SUBCASE("class too small errors") {
        CHECK_THROWS_AS((void)corpus::balanced_subsample(ds, 11, 1), DataError);
    }
}
