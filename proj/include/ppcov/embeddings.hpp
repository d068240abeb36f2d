#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ppcov/features.hpp"
#include "ppcov/tensor.hpp"

namespace ppcov::emb {

enum class EmbeddingAlgorithm { kCbow, kSkipGram };
enum class EmbeddingSource { kTrainedCbow, kTrainedSkipGram, kPretrained, kRandom };

EmbeddingAlgorithm embedding_algorithm_from_string(const std::string& name);
std::string embedding_source_name(EmbeddingSource source);

struct EmbeddingTable {
    std::size_t dimension = 0;
    nd::Tensor vectors;  // |V| x dimension, row 0 (pad) all zeros
    EmbeddingSource source = EmbeddingSource::kRandom;
};

// Input vectors e (context side) and output vectors theta (target side).
struct SkipGramState {
    nd::Tensor input_vectors;
    nd::Tensor output_vectors;
};

struct EmbeddingConfig {
    std::size_t dimension = 300;
    std::size_t window = 5;
    std::size_t epochs = 30;
    EmbeddingAlgorithm algorithm = EmbeddingAlgorithm::kCbow;
    double learning_rate = 0.025;
    std::size_t negative_samples = 5;
    std::uint64_t seed = 1;
};

// Vocabulary size at or below which training uses the exact softmax
// instead of negative sampling.
inline constexpr std::size_t kFullSoftmaxVocabLimit = 20000;

/// P(target | context) under the full softmax over output vectors.
double skipgram_probability(const SkipGramState& state, std::size_t target, std::size_t context);

/// Full-softmax CBOW loss -ln P(center | mean of context vectors).
double cbow_example_loss(const SkipGramState& state, const std::vector<std::size_t>& context,
                         std::size_t center);

/// Dense gradients of cbow_example_loss, same shapes as the state matrices.
void cbow_example_gradients(const SkipGramState& state, const std::vector<std::size_t>& context,
                            std::size_t center, nd::Tensor& input_grad,
                            nd::Tensor& output_grad);

EmbeddingTable train_embeddings(const std::vector<std::vector<std::string>>& token_streams,
                                const features::Vocabulary& vocab, const EmbeddingConfig& config);

/// Reads word2vec text format ("count dim" header, then token + values per
/// line). Vocabulary tokens missing from the file get seeded uniform rows in
/// [-0.25, 0.25]; the pad row is zeroed.
EmbeddingTable load_pretrained(const std::filesystem::path& path, const features::Vocabulary& vocab,
                               std::uint64_t seed = 1);

void save_embeddings(const EmbeddingTable& table, const features::Vocabulary& vocab,
                     const std::filesystem::path& path);

/// Sentence matrix: row i is the table row for encoded.indices[i].
nd::Tensor lookup(const EmbeddingTable& table, const features::EncodedSequence& encoded);

}  // namespace ppcov::emb
