#include "textguard/features.hpp"

#include "textguard/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace textguard::features {

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

double SparseVector::value_at(std::size_t index) const {
    for (const auto& [i, v] : entries) {
        if (i == index) return v;
    }
    return 0.0;
}

TfidfModel fit_tfidf(const corpus::Corpus& corpus, const textproc::Vocabulary& vocab,
                     const textproc::NormalizationConfig& config,
                     std::pair<std::size_t, std::size_t> ngram_range) {
    if (corpus.empty()) throw std::invalid_argument("fit_tfidf: empty corpus");
    if (vocab.size() == 0) throw std::invalid_argument("fit_tfidf: empty vocabulary");

    TfidfModel model;
    model.vocab = vocab;
    model.n_docs = corpus.size();
    model.df.assign(vocab.size(), 0);

    for (const auto& post : corpus.posts) {
        auto toks = textproc::tokenize(textproc::normalize(post.text, config));
        std::set<std::size_t> seen;
        for (const auto& term : textproc::ngrams(toks, ngram_range.first, ngram_range.second)) {
            std::size_t idx = vocab.index_of(term);
            if (idx != textproc::Vocabulary::npos) seen.insert(idx);
        }
        for (std::size_t idx : seen) ++model.df[idx];
    }

    model.idf.resize(vocab.size());
    for (std::size_t t = 0; t < vocab.size(); ++t) {
        if (model.df[t] == 0) {
            throw std::runtime_error("fit_tfidf: stale vocabulary, term \"" + vocab.terms[t] +
                                     "\" appears in no document");
        }
        model.idf[t] = std::log(static_cast<double>(model.n_docs) /
                                static_cast<double>(model.df[t])) +
                       1.0;
    }
    return model;
}

SparseVector transform_tfidf(const TfidfModel& model, const textproc::TokenSequence& tokens,
                             std::pair<std::size_t, std::size_t> ngram_range) {
    std::map<std::size_t, std::size_t> counts;
    for (const auto& term : textproc::ngrams(tokens, ngram_range.first, ngram_range.second)) {
        std::size_t idx = model.vocab.index_of(term);
        if (idx != textproc::Vocabulary::npos) ++counts[idx];
    }
    SparseVector vec;
    vec.dim = model.vocab.size();
    vec.entries.reserve(counts.size());
    for (const auto& [idx, count] : counts) {
        vec.entries.emplace_back(idx, static_cast<double>(count) * model.idf[idx]);
    }
    if (model.l2_normalize && !vec.entries.empty()) {
        double norm = 0.0;
        for (const auto& [idx, v] : vec.entries) norm += v * v;
        norm = std::sqrt(norm);
        for (auto& [idx, v] : vec.entries) v /= norm;
    }
    return vec;
}

EmbeddingTable load_embeddings_text(const std::string& path, std::size_t dim) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_embeddings_text: no such file: " + path);
    if (dim == 0) throw std::invalid_argument("load_embeddings_text: dim must be positive");

    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        std::vector<double> values;
        values.reserve(dim);
        double v;
        while (ls >> v) values.push_back(v);
        if (!ls.eof()) {
            throw std::runtime_error("load_embeddings_text: non-numeric value at line " +
                                     std::to_string(line_no));
        }
        if (values.size() != dim) {
            throw std::runtime_error("load_embeddings_text: line " + std::to_string(line_no) +
                                     " has " + std::to_string(values.size()) + " values, expected " +
                                     std::to_string(dim));
        }
        if (rows.find(word) == rows.end()) order.push_back(word);
        rows[word] = std::move(values);  // last occurrence wins
    }

    EmbeddingTable table;
    table.dim = dim;
    table.matrix = Tensor({std::max<std::size_t>(order.size(), 1), dim});
    for (std::size_t r = 0; r < order.size(); ++r) {
        table.word_to_row[order[r]] = r;
        const auto& values = rows[order[r]];
        for (std::size_t j = 0; j < dim; ++j) table.matrix(r, j) = values[j];
    }
    return table;
}

std::vector<double> embed_word(const EmbeddingTable& table, const std::string& word) {
    std::vector<double> out(table.dim, 0.0);
    auto it = table.word_to_row.find(word);
    if (it == table.word_to_row.end()) return out;
    for (std::size_t j = 0; j < table.dim; ++j) out[j] = table.matrix(it->second, j);
    return out;
}

Tensor embedding_matrix(const EmbeddingTable& table, const textproc::Vocabulary& vocab) {
    Tensor out({std::max<std::size_t>(vocab.size(), 1), table.dim});
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        auto it = table.word_to_row.find(vocab.terms[i]);
        if (it == table.word_to_row.end()) continue;
        for (std::size_t j = 0; j < table.dim; ++j) out(i, j) = table.matrix(it->second, j);
    }
    return out;
}

std::vector<std::string> subword_ngrams(const std::string& word, std::size_t n_low,
                                        std::size_t n_high) {
    if (word.empty()) throw std::invalid_argument("subword_ngrams: empty word");
    if (n_low < 1 || n_low > n_high) throw std::invalid_argument("subword_ngrams: invalid range");

    auto cps = textproc::utf8_decode("<" + word + ">");
    std::vector<std::string> out;
    std::set<std::string> seen;
    auto emit = [&](const std::string& gram) {
        if (seen.insert(gram).second) out.push_back(gram);
    };
    for (std::size_t n = n_low; n <= n_high; ++n) {
        if (cps.size() < n) break;
        for (std::size_t i = 0; i + n <= cps.size(); ++i) {
            emit(textproc::utf8_encode({cps.begin() + i, cps.begin() + i + n}));
        }
    }
    emit(textproc::utf8_encode(cps));  // the wrapped full form
    return out;
}

SubwordEmbeddingTable SubwordEmbeddingTable::random(std::uint64_t seed, std::size_t dim,
                                                    std::size_t bucket_count, std::size_t n_low,
                                                    std::size_t n_high) {
    if (dim == 0 || bucket_count == 0) {
        throw std::invalid_argument("subword table: dim and bucket_count must be positive");
    }
    SubwordEmbeddingTable table;
    table.bucket_count = bucket_count;
    table.dim = dim;
    table.n_low = n_low;
    table.n_high = n_high;
    numeric::Prng prng(seed);
    table.buckets = Tensor({bucket_count, dim});
    double limit = 1.0 / std::sqrt(static_cast<double>(dim));
    for (std::size_t i = 0; i < table.buckets.size(); ++i) {
        table.buckets.flat(i) = prng.uniform(-limit, limit);
    }
    table.words = Tensor({1, dim});
    return table;
}

void SubwordEmbeddingTable::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("subword table: cannot write " + path);
    out << dim << ' ' << n_low << ' ' << n_high << ' ' << bucket_count << '\n';
    char buf[64];
    for (std::size_t i = 0; i < bucket_count; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", buckets(i, j));
            out << buf << (j + 1 == dim ? '\n' : ' ');
        }
    }
    for (const auto& [word, row] : word_to_row) {
        out << word;
        for (std::size_t j = 0; j < dim; ++j) {
            std::snprintf(buf, sizeof buf, " %.17g", words(row, j));
            out << buf;
        }
        out << '\n';
    }
}

SubwordEmbeddingTable SubwordEmbeddingTable::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("subword table: no such file: " + path);
    SubwordEmbeddingTable table;
    in >> table.dim >> table.n_low >> table.n_high >> table.bucket_count;
    if (!in || table.dim == 0 || table.bucket_count == 0) {
        throw std::runtime_error("subword table: malformed header in " + path);
    }
    table.buckets = Tensor({table.bucket_count, table.dim});
    for (std::size_t i = 0; i < table.buckets.size(); ++i) {
        if (!(in >> table.buckets.flat(i))) {
            throw std::runtime_error("subword table: truncated bucket matrix in " + path);
        }
    }
    std::vector<std::pair<std::string, std::vector<double>>> words;
    std::string word;
    while (in >> word) {
        std::vector<double> row(table.dim);
        for (std::size_t j = 0; j < table.dim; ++j) {
            if (!(in >> row[j])) throw std::runtime_error("subword table: truncated word row in " + path);
        }
        words.emplace_back(word, std::move(row));
    }
    table.words = Tensor({std::max<std::size_t>(words.size(), 1), table.dim});
    for (std::size_t r = 0; r < words.size(); ++r) {
        table.word_to_row[words[r].first] = r;
        for (std::size_t j = 0; j < table.dim; ++j) table.words(r, j) = words[r].second[j];
    }
    return table;
}

std::vector<double> embed_word_subword(const SubwordEmbeddingTable& table, const std::string& word) {
    if (table.bucket_count == 0) throw std::logic_error("embed_word_subword: uninitialized table");
    std::vector<double> sum(table.dim, 0.0);
    std::size_t parts = 0;

    auto it = table.word_to_row.find(word);
    if (it != table.word_to_row.end()) {
        for (std::size_t j = 0; j < table.dim; ++j) sum[j] += table.words(it->second, j);
        ++parts;
    }
    for (const auto& gram : subword_ngrams(word, table.n_low, table.n_high)) {
        std::size_t bucket = static_cast<std::size_t>(fnv1a64(gram) % table.bucket_count);
        for (std::size_t j = 0; j < table.dim; ++j) sum[j] += table.buckets(bucket, j);
        ++parts;
    }
    for (double& v : sum) v /= static_cast<double>(parts);
    return sum;
}

std::optional<std::vector<double>> TableEmbedder::embed(const std::string& word) const {
    if (!table_.contains(word) && table_.oov_policy == OovPolicy::Skip) return std::nullopt;
    return embed_word(table_, word);
}

SequenceBatch encode_batch(const std::vector<textproc::TokenSequence>& docs, const Embedder& embedder,
                           std::size_t max_len, std::size_t dim) {
    if (max_len < 1) throw std::invalid_argument("encode_batch: max_len must be positive");
    if (dim != embedder.dim()) throw std::invalid_argument("encode_batch: dim mismatch with embedder");

    SequenceBatch batch;
    batch.tensor = Tensor({docs.size(), max_len, dim});
    batch.mask = Tensor({docs.size(), max_len});
    batch.lengths.resize(docs.size(), 0);

    for (std::size_t d = 0; d < docs.size(); ++d) {
        std::size_t pos = 0;
        for (const auto& token : docs[d].tokens) {
            if (pos == max_len) break;
            auto vec = embedder.embed(token);
            if (!vec) continue;  // Skip policy drops the token
            for (std::size_t j = 0; j < dim; ++j) batch.tensor(d, pos, j) = (*vec)[j];
            batch.mask(d, pos) = 1.0;
            ++pos;
        }
        batch.lengths[d] = pos;
    }
    return batch;
}

}  // namespace textguard::features
