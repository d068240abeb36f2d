#include "ppcov/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>

#include "ppcov/errors.hpp"

namespace ppcov::features {

namespace {

bool is_word_char(unsigned char c) {
    return std::isalnum(c) || c >= 0x80;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    const std::size_t n = text.size();
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_word_char(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if ((c == '-' || c == '\'') && !cur.empty() && i + 1 < n &&
                   is_word_char(static_cast<unsigned char>(text[i + 1]))) {
            // Intra-word hyphen/apostrophe only.
            cur += static_cast<char>(c);
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::size_t Vocabulary::index_of(const std::string& token) const {
    auto it = token_to_index_.find(token);
    return it == token_to_index_.end() ? kUnkIndex : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
    return token_to_index_.count(token) > 0;
}

const std::string& Vocabulary::token_at(std::size_t index) const {
    if (index >= index_to_token_.size()) {
        throw std::out_of_range("vocabulary index out of range: " + std::to_string(index));
    }
    return index_to_token_[index];
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write vocabulary file: " + path);
    for (const std::string& tok : index_to_token_) out << tok << "\n";
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnkToken) {
        throw DataError("vocabulary must start with " + std::string(kPadToken) + " and " +
                        std::string(kUnkToken));
    }
    Vocabulary v;
    v.index_to_token_ = std::move(tokens);
    for (std::size_t i = 2; i < v.index_to_token_.size(); ++i) {
        v.token_to_index_[v.index_to_token_[i]] = i;
    }
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read vocabulary file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    try {
        return from_tokens(std::move(tokens));
    } catch (const DataError& e) {
        throw DataError(std::string(e.what()) + ": " + path);
    }
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& token_streams,
                            std::size_t min_count) {
    if (min_count < 1) throw UsageError("build_vocabulary: min_count must be >= 1");
    std::map<std::string, std::size_t> counts;
    for (const auto& stream : token_streams) {
        for (const auto& tok : stream) ++counts[tok];
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    kept.reserve(counts.size());
    for (const auto& [tok, cnt] : counts) {
        if (cnt >= min_count) kept.emplace_back(tok, cnt);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    v.min_count_ = min_count;
    for (const auto& [tok, cnt] : kept) {
        v.token_to_index_[tok] = v.index_to_token_.size();
        v.index_to_token_.push_back(tok);
    }
    return v;
}

EncodedSequence encode_sequence(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                                std::size_t max_len) {
    if (max_len < 1) throw UsageError("encode_sequence: max_len must be >= 1");
    EncodedSequence seq;
    seq.indices.assign(max_len, Vocabulary::kPadIndex);
    seq.true_length = std::min(tokens.size(), max_len);
    for (std::size_t i = 0; i < seq.true_length; ++i) {
        seq.indices[i] = vocab.index_of(tokens[i]);
    }
    return seq;
}

std::vector<std::string> decode_sequence(const EncodedSequence& seq, const Vocabulary& vocab) {
    std::vector<std::string> tokens;
    tokens.reserve(seq.true_length);
    for (std::size_t i = 0; i < seq.true_length; ++i) {
        tokens.push_back(vocab.token_at(seq.indices[i]));
    }
    return tokens;
}

std::size_t length_percentile(const std::vector<std::vector<std::string>>& token_streams,
                              double percentile) {
    std::vector<std::size_t> lengths;
    lengths.reserve(token_streams.size());
    for (const auto& s : token_streams) lengths.push_back(s.size());
    if (lengths.empty()) return 1;
    std::sort(lengths.begin(), lengths.end());
    const auto rank = static_cast<std::size_t>(
        std::ceil(percentile / 100.0 * static_cast<double>(lengths.size())));
    const std::size_t idx = rank == 0 ? 0 : rank - 1;
    return std::max<std::size_t>(1, lengths[std::min(idx, lengths.size() - 1)]);
}

TfidfModel fit_tfidf(const std::vector<std::vector<std::string>>& documents) {
    if (documents.empty()) throw DataError("fit_tfidf: empty document list");

    // Columns follow vocabulary order: total frequency descending, then
    // lexicographic.
    Vocabulary vocab = build_vocabulary(documents, 1);

    TfidfModel model;
    model.n_docs = documents.size();
    model.terms.reserve(vocab.size() - 2);
    for (std::size_t i = 2; i < vocab.size(); ++i) {
        const std::string& term = vocab.token_at(i);
        model.term_index[term] = model.terms.size();
        model.terms.push_back(term);
    }
    model.doc_freq.assign(model.terms.size(), 0);
    for (const auto& doc : documents) {
        std::vector<std::size_t> seen;
        for (const auto& tok : doc) {
            auto it = model.term_index.find(tok);
            if (it != model.term_index.end()) seen.push_back(it->second);
        }
        std::sort(seen.begin(), seen.end());
        seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
        for (std::size_t col : seen) ++model.doc_freq[col];
    }
    model.idf.resize(model.terms.size());
    const double n = static_cast<double>(model.n_docs);
    for (std::size_t col = 0; col < model.terms.size(); ++col) {
        model.idf[col] =
            std::log((1.0 + n) / (1.0 + static_cast<double>(model.doc_freq[col]))) + 1.0;
    }
    return model;
}

double FeatureVector::norm() const {
    double sq = 0.0;
    for (const auto& [col, w] : weights) sq += w * w;
    return std::sqrt(sq);
}

FeatureVector count_vector(const TfidfModel& model, const std::vector<std::string>& document) {
    std::map<std::size_t, double> counts;
    for (const auto& tok : document) {
        auto it = model.term_index.find(tok);
        if (it != model.term_index.end()) counts[it->second] += 1.0;
    }
    FeatureVector fv;
    fv.weights.assign(counts.begin(), counts.end());
    return fv;
}

FeatureVector transform_tfidf(const TfidfModel& model, const std::vector<std::string>& document) {
    FeatureVector fv = count_vector(model, document);
    double sq = 0.0;
    for (auto& [col, w] : fv.weights) {
        w *= model.idf[col];
        sq += w * w;
    }
    if (sq > 0.0) {
        const double inv = 1.0 / std::sqrt(sq);
        for (auto& [col, w] : fv.weights) w *= inv;
    }
    return fv;
}

}  // namespace ppcov::features
