#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "textguard/corpus.hpp"
#include "textguard/tensor.hpp"
#include "textguard/textproc.hpp"

namespace textguard::features {

using numeric::Tensor;

/// FNV-1a 64-bit over raw bytes; fixed so subword bucket assignment is
/// identical across platforms and implementations.
std::uint64_t fnv1a64(const std::string& bytes);

/// (index, value) pairs with strictly increasing indices below dim.
struct SparseVector {
    std::vector<std::pair<std::size_t, double>> entries;
    std::size_t dim = 0;

    double value_at(std::size_t index) const;
};

/// Fitted TF-IDF state: idf[t] = ln(n_docs / df[t]) + 1 over the vocab.
struct TfidfModel {
    textproc::Vocabulary vocab;
    std::vector<double> idf;
    std::vector<std::size_t> df;
    std::size_t n_docs = 0;
    bool l2_normalize = false;  // off by default; the fitted equations carry no norm
};

TfidfModel fit_tfidf(const corpus::Corpus& corpus, const textproc::Vocabulary& vocab,
                     const textproc::NormalizationConfig& config,
                     std::pair<std::size_t, std::size_t> ngram_range);

/// Raw term count times idf for every vocab term in the document;
/// out-of-vocabulary terms are ignored.
SparseVector transform_tfidf(const TfidfModel& model, const textproc::TokenSequence& tokens,
                             std::pair<std::size_t, std::size_t> ngram_range);

enum class OovPolicy { Zero, Skip };

/// Static word -> row table (word2vec/GloVe style text files).
struct EmbeddingTable {
    std::map<std::string, std::size_t> word_to_row;
    Tensor matrix;  // (words x dim)
    std::size_t dim = 0;
    OovPolicy oov_policy = OovPolicy::Zero;

    bool contains(const std::string& word) const { return word_to_row.count(word) > 0; }
};

/// Parses "word v1 ... v_dim" lines; on duplicate words the last
/// occurrence wins. Errors carry the offending line number.
EmbeddingTable load_embeddings_text(const std::string& path, std::size_t dim);

/// Known word -> its row; unknown -> zero vector under OovPolicy::Zero.
std::vector<double> embed_word(const EmbeddingTable& table, const std::string& word);

/// Rows aligned to a vocabulary (zero rows for words the table lacks).
Tensor embedding_matrix(const EmbeddingTable& table, const textproc::Vocabulary& vocab);

/// Character n-grams of "<word>" for n in [n_low, n_high] (counted in
/// codepoints), ordered by n then position, deduplicated, with the
/// wrapped full form always included.
std::vector<std::string> subword_ngrams(const std::string& word, std::size_t n_low,
                                        std::size_t n_high);

/// Hashed-bucket subword table: any word gets a vector, so there is no
/// out-of-vocabulary failure mode.
struct SubwordEmbeddingTable {
    std::size_t bucket_count = 0;
    Tensor buckets;  // (bucket_count x dim)
    std::map<std::string, std::size_t> word_to_row;
    Tensor words;  // (known words x dim); may be empty
    std::size_t n_low = 3;
    std::size_t n_high = 6;
    std::size_t dim = 0;

    /// Deterministic random-bucket table (the desk-scale stand-in for a
    /// pretrained subword model).
    static SubwordEmbeddingTable random(std::uint64_t seed, std::size_t dim,
                                        std::size_t bucket_count = 4096, std::size_t n_low = 3,
                                        std::size_t n_high = 6);

    void save(const std::string& path) const;
    static SubwordEmbeddingTable load(const std::string& path);
};

/// Mean of the full-word row (when known) and every n-gram's bucket row,
/// bucket = fnv1a64(ngram) mod bucket_count.
std::vector<double> embed_word_subword(const SubwordEmbeddingTable& table, const std::string& word);

/// Zero-padded fixed-length batch of embedded token sequences.
struct SequenceBatch {
    Tensor tensor;  // (batch x max_len x dim)
    Tensor mask;    // (batch x max_len), 1 = real token
    std::vector<std::size_t> lengths;

    std::size_t batch() const { return tensor.dim(0); }
    std::size_t max_len() const { return tensor.dim(1); }
    std::size_t dim() const { return tensor.dim(2); }
};

/// Per-token embedder interface used by encode_batch. embed returning
/// nullopt drops the token (the Skip policy).
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::optional<std::vector<double>> embed(const std::string& word) const = 0;
    virtual std::size_t dim() const = 0;
};

class TableEmbedder : public Embedder {
public:
    explicit TableEmbedder(const EmbeddingTable& table) : table_(table) {}
    std::optional<std::vector<double>> embed(const std::string& word) const override;
    std::size_t dim() const override { return table_.dim; }

private:
    const EmbeddingTable& table_;
};

class SubwordEmbedder : public Embedder {
public:
    explicit SubwordEmbedder(const SubwordEmbeddingTable& table) : table_(table) {}
    std::optional<std::vector<double>> embed(const std::string& word) const override {
        return embed_word_subword(table_, word);
    }
    std::size_t dim() const override { return table_.dim; }

private:
    const SubwordEmbeddingTable& table_;
};

/// Embeds each document, truncates to max_len and right-pads with zero
/// vectors; the mask marks real tokens.
SequenceBatch encode_batch(const std::vector<textproc::TokenSequence>& docs, const Embedder& embedder,
                           std::size_t max_len, std::size_t dim);

}  // namespace textguard::features
