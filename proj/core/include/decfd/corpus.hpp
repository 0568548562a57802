#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "decfd/tensor.hpp"

namespace decfd::corpus {

/// Lowercases and splits on word boundaries. Letter/digit runs become word
/// tokens, punctuation runs become single tokens, whitespace separates.
/// Non-ASCII codepoints are treated as word characters and kept verbatim
/// (no multilingual normalization).
std::vector<std::string> tokenize(std::string_view text);

struct Document {
    std::string id;
    std::vector<std::string> tokens;
    int label = 0;
    std::string raw_text;
};

/// Frequency-built vocabulary with dense ids. Ordering is (count descending,
/// token ascending), truncated to max_size.
class Vocab {
public:
    Vocab() = default;

    static Vocab build(const std::vector<Document>& docs, std::size_t min_count,
                       std::size_t max_size);

    std::size_t size() const { return id_to_token_.size(); }  // V
    std::optional<std::size_t> id_of(std::string_view token) const;
    const std::string& token_of(std::size_t id) const { return id_to_token_[id]; }
    std::size_t count_of(std::size_t id) const { return counts_[id]; }
    std::size_t min_count() const { return min_count_; }
    std::size_t max_size() const { return max_size_; }

    // sequence-encoder id space: [0, V) words, V = UNK, V+1 = CLS
    std::size_t unk_id() const { return size(); }
    std::size_t cls_id() const { return size() + 1; }
    std::size_t encoder_vocab_size() const { return size() + 2; }
    std::vector<std::size_t> encode_tokens(const std::vector<std::string>& tokens) const;

    /// Newline-delimited `token<TAB>count` in id order.
    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

    /// FNV-1a over the serialized form; used to pair checkpoints with vocabs.
    std::uint64_t hash() const;

private:
    std::unordered_map<std::string, std::size_t> token_to_id_;
    std::vector<std::string> id_to_token_;
    std::vector<std::size_t> counts_;
    std::size_t min_count_ = 1;
    std::size_t max_size_ = 0;
};

/// Sparse word-count vector over [0, vocab_size).
struct BowVector {
    std::vector<std::pair<std::size_t, std::uint32_t>> counts;  // sorted by id
    std::size_t vocab_size = 0;

    std::size_t total() const;
    nn::Tensor dense() const;
    bool empty() const { return counts.empty(); }
};

/// Out-of-vocabulary tokens are dropped; optional stopword set also drops.
BowVector to_bow(const Document& doc, const Vocab& vocab,
                 const std::unordered_set<std::string>* stopwords = nullptr);

const std::unordered_set<std::string>& builtin_stopwords();

enum class Split { train, val, test };
std::string_view split_name(Split s);

struct LabeledDataset {
    std::vector<Document> documents;
    std::vector<int> label_set;  // ordered
    Split split = Split::train;

    std::size_t size() const { return documents.size(); }
};

/// Reads `id<TAB>label<TAB>text` rows (UTF-8, no quoting; a literal tab in
/// text is a malformed row). An optional header is detected by a literal
/// "id" first field. Throws DataError with the offending line number.
LabeledDataset load_tsv(const std::filesystem::path& path,
                        const std::map<std::string, int>& label_map,
                        Split split = Split::train);

void save_tsv(const std::filesystem::path& path, const LabeledDataset& ds);

struct DatasetStats {
    std::map<int, std::size_t> per_label;
    std::size_t total = 0;
    Split split = Split::train;

    std::string table() const;
};

DatasetStats dataset_stats(const LabeledDataset& ds);

/// Exactly per_class documents per label, drawn without replacement by a
/// seeded generator. Throws DataError if any class is too small.
LabeledDataset balanced_subsample(const LabeledDataset& ds, std::size_t per_class,
                                  std::uint64_t seed);

/// Default label convention: non-counterfactual = 0, counterfactual = 1,
/// plus plain integer strings for synthetic data.
std::map<std::string, int> default_label_map(std::size_t n_labels = 2);

}  // namespace decfd::corpus
