#include "decfd/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "decfd/errors.hpp"
#include "decfd/rng.hpp"

namespace decfd::corpus {

namespace {

enum class CharClass { word, space, punct };

CharClass classify(unsigned char c) {
    if (std::isalnum(c)) return CharClass::word;
    if (std::isspace(c)) return CharClass::space;
    if (c >= 0x80) return CharClass::word;  // any non-ASCII byte joins a word run
    return CharClass::punct;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    CharClass mode = CharClass::space;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };
    for (unsigned char c : text) {
        const CharClass cls = classify(c);
        if (cls == CharClass::space) {
            flush();
            mode = CharClass::space;
            continue;
        }
        if (cls != mode) flush();
        mode = cls;
        current.push_back(cls == CharClass::word && c < 0x80
                              ? static_cast<char>(std::tolower(c))
                              : static_cast<char>(c));
    }
    flush();
    return tokens;
}

Vocab Vocab::build(const std::vector<Document>& docs, std::size_t min_count,
                   std::size_t max_size) {
    if (docs.empty()) throw DataError("build_vocab: no documents");
    std::unordered_map<std::string, std::size_t> freq;
    for (const Document& d : docs) {
        for (const std::string& t : d.tokens) ++freq[t];
    }
    std::vector<std::pair<std::string, std::size_t>> items;
    items.reserve(freq.size());
    for (auto& [tok, n] : freq) {
        if (n >= min_count) items.emplace_back(tok, n);
    }
    if (items.empty()) throw DataError("build_vocab: no token meets min_count");
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (max_size > 0 && items.size() > max_size) items.resize(max_size);

    Vocab v;
    v.min_count_ = min_count;
    v.max_size_ = max_size;
    v.id_to_token_.reserve(items.size());
    v.counts_.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        v.token_to_id_.emplace(items[i].first, i);
        v.id_to_token_.push_back(std::move(items[i].first));
        v.counts_.push_back(items[i].second);
    }
    return v;
}

std::optional<std::size_t> Vocab::id_of(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    if (it == token_to_id_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::size_t> Vocab::encode_tokens(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const std::string& t : tokens) {
        auto id = id_of(t);
        ids.push_back(id ? *id : unk_id());
    }
    return ids;
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("vocab: cannot open for writing: " + path.string());
    for (std::size_t i = 0; i < size(); ++i) {
        out << id_to_token_[i] << '\t' << counts_[i] << '\n';
    }
    if (!out) throw DataError("vocab: write failed: " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("vocab: cannot open: " + path.string());
    Vocab v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw DataError("vocab: malformed line " + std::to_string(lineno) + " in " +
                            path.string());
        }
        std::string tok = line.substr(0, tab);
        std::size_t count = 0;
        try {
            count = std::stoull(line.substr(tab + 1));
        } catch (const std::exception&) {
            throw DataError("vocab: bad count at line " + std::to_string(lineno));
        }
        v.token_to_id_.emplace(tok, v.id_to_token_.size());
        v.id_to_token_.push_back(std::move(tok));
        v.counts_.push_back(count);
    }
    return v;
}

std::uint64_t Vocab::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    };
    for (std::size_t i = 0; i < size(); ++i) {
        feed(id_to_token_[i]);
        feed("\t");
        feed(std::to_string(counts_[i]));
        feed("\n");
    }
    return h;
}

std::size_t BowVector::total() const {
    std::size_t n = 0;
    for (const auto& [id, c] : counts) n += c;
    return n;
}

nn::Tensor BowVector::dense() const {
    nn::Tensor t({vocab_size});
    for (const auto& [id, c] : counts) t[id] = static_cast<double>(c);
    return t;
}

BowVector to_bow(const Document& doc, const Vocab& vocab,
                 const std::unordered_set<std::string>* stopwords) {
    std::map<std::size_t, std::uint32_t> acc;
    for (const std::string& t : doc.tokens) {
        if (stopwords && stopwords->count(t)) continue;
        if (auto id = vocab.id_of(t)) ++acc[*id];
    }
    BowVector bow;
    bow.vocab_size = vocab.size();
    bow.counts.assign(acc.begin(), acc.end());
    return bow;
}

const std::unordered_set<std::string>& builtin_stopwords() {
    static const std::unordered_set<std::string> words = {
        "a",    "an",  "and", "are", "as",   "at",   "be",   "by",   "for", "from",
        "has",  "he",  "in",  "is",  "it",   "its",  "of",   "on",   "or",  "that",
        "the",  "to",  "was", "were", "will", "with", "this", "but",  "they",
        "she",  "his", "her", "you",  "we"};
    return words;
}

std::string_view split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

LabeledDataset load_tsv(const std::filesystem::path& path,
                        const std::map<std::string, int>& label_map, Split split) {
    std::ifstream in(path);
    if (!in) throw DataError("load_tsv: cannot open: " + path.string());
    LabeledDataset ds;
    ds.split = split;
    {
        std::vector<int> labels;
        for (const auto& [_, v] : label_map) labels.push_back(v);
        std::sort(labels.begin(), labels.end());
        labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
        ds.label_set = std::move(labels);
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        const auto t3 = t2 == std::string::npos ? std::string::npos : line.find('\t', t2 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos || t3 != std::string::npos) {
            throw DataError("load_tsv: malformed row at line " + std::to_string(lineno) +
                            " in " + path.string());
        }
        std::string id = line.substr(0, t1);
        if (lineno == 1 && id == "id") continue;  // header
        std::string label_str = line.substr(t1 + 1, t2 - t1 - 1);
        std::string text = line.substr(t2 + 1);
        auto it = label_map.find(label_str);
        if (it == label_map.end()) {
            throw DataError("load_tsv: unknown label '" + label_str + "' at line " +
                            std::to_string(lineno) + " in " + path.string());
        }
        Document doc;
        doc.id = std::move(id);
        doc.label = it->second;
        doc.tokens = tokenize(text);
        doc.raw_text = std::move(text);
        ds.documents.push_back(std::move(doc));
    }
    return ds;
}

void save_tsv(const std::filesystem::path& path, const LabeledDataset& ds) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("save_tsv: cannot open for writing: " + path.string());
    for (const Document& d : ds.documents) {
        out << d.id << '\t' << d.label << '\t' << d.raw_text << '\n';
    }
    if (!out) throw DataError("save_tsv: write failed: " + path.string());
}

DatasetStats dataset_stats(const LabeledDataset& ds) {
    DatasetStats st;
    st.split = ds.split;
    for (int l : ds.label_set) st.per_label[l] = 0;
    for (const Document& d : ds.documents) {
        ++st.per_label[d.label];
        ++st.total;
    }
    return st;
}

std::string DatasetStats::table() const {
    std::ostringstream os;
    os << "split=" << split_name(split) << " total=" << total;
    for (const auto& [label, n] : per_label) {
        os << " label_" << label << "=" << n;
    }
    return os.str();
}

LabeledDataset balanced_subsample(const LabeledDataset& ds, std::size_t per_class,
                                  std::uint64_t seed) {
    std::map<int, std::vector<std::size_t>> by_label;
    for (int l : ds.label_set) by_label[l];
    for (std::size_t i = 0; i < ds.documents.size(); ++i) {
        by_label[ds.documents[i].label].push_back(i);
    }
    for (const auto& [label, idx] : by_label) {
        if (idx.size() < per_class) {
            throw DataError("balanced_subsample: label " + std::to_string(label) + " has " +
                            std::to_string(idx.size()) + " docs, need " +
                            std::to_string(per_class));
        }
    }
    Rng rng(seed);
    LabeledDataset out;
    out.label_set = ds.label_set;
    out.split = ds.split;
    for (auto& [label, idx] : by_label) {
        rng.shuffle(idx);
        for (std::size_t i = 0; i < per_class; ++i) {
            out.documents.push_back(ds.documents[idx[i]]);
        }
    }
    return out;
}

std::map<std::string, int> default_label_map(std::size_t n_labels) {
    std::map<std::string, int> m;
    for (std::size_t i = 0; i < n_labels; ++i) {
        m[std::to_string(i)] = static_cast<int>(i);
    }
    m["non-counterfactual"] = 0;
    m["counterfactual"] = 1;
    return m;
}

}  // namespace decfd::corpus
