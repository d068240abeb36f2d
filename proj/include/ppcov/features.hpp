#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ppcov::features {

/// Lowercases, strips punctuation except intra-word hyphens/apostrophes,
/// and splits on whitespace. Bytes >= 0x80 are treated as word characters.
std::vector<std::string> tokenize(const std::string& text);

// Token index table. Indices 0 and 1 are reserved for padding and
// out-of-vocabulary tokens; corpus tokens start at 2, ordered by
// descending frequency then lexicographically.
class Vocabulary {
public:
    static constexpr std::size_t kPadIndex = 0;
    static constexpr std::size_t kUnkIndex = 1;
    static constexpr const char* kPadToken = "<PAD>";
    static constexpr const char* kUnkToken = "<UNK>";

    Vocabulary() = default;

    std::size_t size() const { return index_to_token_.size(); }
    std::size_t min_count() const { return min_count_; }

    /// Index for a token; unknown tokens map to kUnkIndex.
    std::size_t index_of(const std::string& token) const;
    bool contains(const std::string& token) const;
    const std::string& token_at(std::size_t index) const;

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);
    /// Rebuilds a table from an ordered token list (first two entries must
    /// be the pad and unknown markers).
    static Vocabulary from_tokens(std::vector<std::string> tokens);
    const std::vector<std::string>& tokens() const { return index_to_token_; }

    friend Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& token_streams,
                                       std::size_t min_count);

private:
    std::unordered_map<std::string, std::size_t> token_to_index_;
    std::vector<std::string> index_to_token_ = {kPadToken, kUnkToken};
    std::size_t min_count_ = 1;
};

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& token_streams,
                            std::size_t min_count);

struct EncodedSequence {
    std::vector<std::size_t> indices;  // length == max_len
    std::size_t true_length = 0;       // token count before pad/truncate
};

/// Fixed-length index encoding: truncates past max_len, pads with kPadIndex.
EncodedSequence encode_sequence(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                                std::size_t max_len);

/// Inverse of encode_sequence over the first true_length positions.
std::vector<std::string> decode_sequence(const EncodedSequence& seq, const Vocabulary& vocab);

/// Nearest-rank percentile of tokenized lengths; the default sequence
/// length for neural models is the 95th percentile of the training split.
std::size_t length_percentile(const std::vector<std::vector<std::string>>& token_streams,
                              double percentile);

// Smoothed-IDF model: idf(t) = ln((1 + n) / (1 + df(t))) + 1.
struct TfidfModel {
    std::size_t n_docs = 0;
    std::vector<std::string> terms;             // column -> term
    std::unordered_map<std::string, std::size_t> term_index;
    std::vector<std::size_t> doc_freq;          // column -> df(t)
    std::vector<double> idf;                    // column -> weight

    std::size_t vocab_size() const { return terms.size(); }
};

// Sparse feature row, L2-normalized unless the document has no
// in-vocabulary terms. Entries sorted by column.
struct FeatureVector {
    std::vector<std::pair<std::size_t, double>> weights;

    double norm() const;
};

TfidfModel fit_tfidf(const std::vector<std::vector<std::string>>& documents);

FeatureVector transform_tfidf(const TfidfModel& model, const std::vector<std::string>& document);

/// Raw term-count row over the model's columns (no idf, no normalization).
FeatureVector count_vector(const TfidfModel& model, const std::vector<std::string>& document);

}  // namespace ppcov::features
