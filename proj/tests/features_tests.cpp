#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "textguard/features.hpp"
#include "textguard/numeric.hpp"

using namespace textguard;
using features::SparseVector;
using numeric::Tensor;
using textproc::NormalizationConfig;
using textproc::TokenSequence;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content) : path(name) {
        std::ofstream out(path, std::ios::binary);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

// Brute-force TF-IDF straight from the definitions: df by scanning
// every document for the term, value = count(term, doc) * (ln(n/df)+1).
std::map<std::string, double> tfidf_oracle(const std::vector<std::vector<std::string>>& docs,
                                           const std::vector<std::string>& vocab_terms,
                                           const std::vector<std::string>& doc) {
    std::map<std::string, double> out;
    for (const auto& term : vocab_terms) {
        std::size_t df = 0;
        for (const auto& d : docs) {
            for (const auto& t : d) {
                if (t == term) {
                    ++df;
                    break;
                }
            }
        }
        if (df == 0) continue;
        double idf = std::log(static_cast<double>(docs.size()) / static_cast<double>(df)) + 1.0;
        std::size_t count = 0;
        for (const auto& t : doc) count += t == term;
        if (count > 0) out[term] = static_cast<double>(count) * idf;
    }
    return out;
}

NormalizationConfig keep_digits() {
    NormalizationConfig cfg;
    cfg.strip_non_letter = false;
    return cfg;
}

}  // namespace

TEST_CASE("fit_tfidf: hand-evaluated idf fixture") {
    corpus::Corpus c;
    c.posts = {{"a b a", 0}, {"b c", 1}};
    NormalizationConfig cfg;
    textproc::Vocabulary vocab;
    vocab.terms = {"a", "b"};
    vocab.term_to_index = {{"a", 0}, {"b", 1}};
    vocab.max_features = 2;

    auto model = features::fit_tfidf(c, vocab, cfg, {1, 1});
    CHECK(model.n_docs == 2);
    CHECK(model.df[0] == 1);
    CHECK(model.df[1] == 2);
    CHECK(model.idf[0] == doctest::Approx(1.6931471805599454).epsilon(1e-15));
    CHECK(model.idf[1] == doctest::Approx(1.0).epsilon(1e-15));

    auto vec = features::transform_tfidf(model, TokenSequence{{"a", "b", "a"}}, {1, 1});
    CHECK(vec.value_at(0) == doctest::Approx(3.386294361119891).epsilon(1e-15));
    CHECK(vec.value_at(1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("fit_tfidf: single-doc and everywhere-term identities") {
    corpus::Corpus single;
    single.posts = {{"a", 0}};
    textproc::Vocabulary vocab;
    vocab.terms = {"a"};
    vocab.term_to_index = {{"a", 0}};
    auto model = features::fit_tfidf(single, vocab, NormalizationConfig{}, {1, 1});
    CHECK(model.idf[0] == 1.0);  // ln(1/1) + 1

    corpus::Corpus c;
    c.posts = {{"a b", 0}, {"a c", 0}, {"a d", 1}};
    auto m2 = features::fit_tfidf(c, vocab, NormalizationConfig{}, {1, 1});
    CHECK(m2.idf[0] == 1.0);  // term in every doc
}

TEST_CASE("fit_tfidf rejects stale vocabularies") {
    corpus::Corpus c;
    c.posts = {{"a b", 0}};
    textproc::Vocabulary vocab;
    vocab.terms = {"a", "zzz"};
    vocab.term_to_index = {{"a", 0}, {"zzz", 1}};
    CHECK_THROWS_WITH_AS(features::fit_tfidf(c, vocab, NormalizationConfig{}, {1, 1}),
                         doctest::Contains("stale vocabulary"), std::runtime_error);
}

TEST_CASE("transform_tfidf: no vocab terms and doubling linearity") {
    corpus::Corpus c;
    c.posts = {{"a b", 0}, {"b b", 1}};
    auto vocab = textproc::build_vocab(c, NormalizationConfig{}, {1, 1}, 10);
    auto model = features::fit_tfidf(c, vocab, NormalizationConfig{}, {1, 1});

    CHECK(features::transform_tfidf(model, TokenSequence{{"zzz"}}, {1, 1}).entries.empty());

    auto once = features::transform_tfidf(model, TokenSequence{{"a", "b"}}, {1, 1});
    auto twice = features::transform_tfidf(model, TokenSequence{{"a", "b", "a", "b"}}, {1, 1});
    REQUIRE(once.entries.size() == twice.entries.size());
    for (std::size_t i = 0; i < once.entries.size(); ++i) {
        CHECK(twice.entries[i].second == doctest::Approx(2.0 * once.entries[i].second));
    }
}

TEST_CASE("tfidf matches brute force on seeded corpora up to 10 docs x 20 terms") {
    numeric::Prng prng(2024);
    NormalizationConfig cfg = keep_digits();
    for (int trial = 0; trial < 30; ++trial) {
        std::size_t n_docs = 2 + prng.next_below(9);   // 2..10
        std::size_t n_terms = 1 + prng.next_below(20);  // term pool
        corpus::Corpus c;
        std::vector<std::vector<std::string>> docs;
        for (std::size_t d = 0; d < n_docs; ++d) {
            std::size_t len = 1 + prng.next_below(12);
            std::vector<std::string> doc;
            std::string text;
            for (std::size_t k = 0; k < len; ++k) {
                std::string term = "w" + std::to_string(prng.next_below(n_terms));
                doc.push_back(term);
                if (!text.empty()) text += ' ';
                text += term;
            }
            docs.push_back(doc);
            c.posts.push_back({text, static_cast<int>(d % 2)});
        }
        auto vocab = textproc::build_vocab(c, cfg, {1, 1}, 20);
        auto model = features::fit_tfidf(c, vocab, cfg, {1, 1});

        for (std::size_t d = 0; d < n_docs; ++d) {
            auto vec = features::transform_tfidf(model, TokenSequence{docs[d]}, {1, 1});
            auto want = tfidf_oracle(docs, vocab.terms, docs[d]);
            std::size_t nonzero = 0;
            for (const auto& [term, value] : want) {
                ++nonzero;
                std::size_t idx = vocab.index_of(term);
                REQUIRE(idx != textproc::Vocabulary::npos);
                CHECK(std::fabs(vec.value_at(idx) - value) < 1e-12);
            }
            CHECK(vec.entries.size() == nonzero);
        }
    }
}

TEST_CASE("transform_tfidf: optional l2 normalization flag") {
    corpus::Corpus c;
    c.posts = {{"a b", 0}, {"b b", 1}};
    auto vocab = textproc::build_vocab(c, NormalizationConfig{}, {1, 1}, 10);
    auto model = features::fit_tfidf(c, vocab, NormalizationConfig{}, {1, 1});
    model.l2_normalize = true;
    auto vec = features::transform_tfidf(model, TokenSequence{{"a", "b", "a"}}, {1, 1});
    double norm = 0.0;
    for (const auto& [idx, v] : vec.entries) norm += v * v;
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("idf monotonicity: rarer terms weigh more") {
    corpus::Corpus c;
    c.posts = {{"a b", 0}, {"a b", 0}, {"a c", 0}, {"a d", 1}};
    auto vocab = textproc::build_vocab(c, NormalizationConfig{}, {1, 1}, 10);
    auto model = features::fit_tfidf(c, vocab, NormalizationConfig{}, {1, 1});
    for (std::size_t t1 = 0; t1 < vocab.size(); ++t1) {
        for (std::size_t t2 = 0; t2 < vocab.size(); ++t2) {
            if (model.df[t1] < model.df[t2]) CHECK(model.idf[t1] > model.idf[t2]);
        }
    }
}

TEST_CASE("load_embeddings_text: parsing, duplicates, errors") {
    TempFile good("emb_good.txt", "dog 1 2 3\ncat 4 5 6\n");
    auto table = features::load_embeddings_text(good.path, 3);
    CHECK(table.word_to_row.size() == 2);
    CHECK(features::embed_word(table, "dog") == std::vector<double>{1, 2, 3});
    CHECK(features::embed_word(table, "mouse") == std::vector<double>{0, 0, 0});

    TempFile dup("emb_dup.txt", "dog 1 2 3\ndog 7 8 9\n");
    auto table2 = features::load_embeddings_text(dup.path, 3);
    CHECK(table2.word_to_row.size() == 1);
    CHECK(features::embed_word(table2, "dog") == std::vector<double>{7, 8, 9});  // last wins

    TempFile short_line("emb_short.txt", "dog 1 2 3\ncat 4 5\n");
    CHECK_THROWS_WITH_AS(features::load_embeddings_text(short_line.path, 3),
                         doctest::Contains("line 2"), std::runtime_error);
    TempFile bad_num("emb_badnum.txt", "dog 1 x 3\n");
    CHECK_THROWS(features::load_embeddings_text(bad_num.path, 3));
    CHECK_THROWS(features::load_embeddings_text("missing_emb.txt", 3));
}

TEST_CASE("embedding_matrix aligns rows to the vocabulary") {
    TempFile f("emb_matrix.txt", "b 1 1\na 2 2\n");
    auto table = features::load_embeddings_text(f.path, 2);
    textproc::Vocabulary vocab;
    vocab.terms = {"a", "b", "c"};
    for (std::size_t i = 0; i < vocab.terms.size(); ++i) vocab.term_to_index[vocab.terms[i]] = i;
    Tensor m = features::embedding_matrix(table, vocab);
    CHECK(m(0, 0) == 2.0);
    CHECK(m(1, 0) == 1.0);
    CHECK(m(2, 0) == 0.0);  // missing word -> zero row
}

TEST_CASE("subword_ngrams: enumeration fixtures") {
    CHECK(features::subword_ngrams("ab", 3, 3) == std::vector<std::string>{"<ab", "ab>", "<ab>"});
    CHECK(features::subword_ngrams("a", 3, 6) == std::vector<std::string>{"<a>"});
    // n_low = n_high = wrapped length -> only the full form
    CHECK(features::subword_ngrams("ab", 4, 4) == std::vector<std::string>{"<ab>"});
    CHECK_THROWS(features::subword_ngrams("", 3, 6));
    CHECK_THROWS(features::subword_ngrams("ab", 4, 3));
}

TEST_CASE("subword_ngrams count codepoints, not bytes") {
    // two Arabic letters wrap to 4 codepoints
    auto grams = features::subword_ngrams("غب", 3, 3);
    REQUIRE(grams.size() == 3);
    CHECK(grams[0] == "<غب");
    CHECK(grams[1] == "غب>");
    CHECK(grams[2] == "<غب>");
}

TEST_CASE("embed_word_subword equals the brute-force mean over the ngram set") {
    auto table = features::SubwordEmbeddingTable::random(5, 8, 64, 3, 6);
    numeric::Prng prng(6);
    for (const std::string& word : {"hello", "غبي", "a", "التطبيقات"}) {
        auto got = features::embed_word_subword(table, word);
        auto grams = features::subword_ngrams(word, 3, 6);
        std::vector<double> want(8, 0.0);
        for (const auto& g : grams) {
            std::size_t bucket = features::fnv1a64(g) % table.bucket_count;
            for (std::size_t j = 0; j < 8; ++j) want[j] += table.buckets(bucket, j);
        }
        for (std::size_t j = 0; j < 8; ++j) {
            CHECK(std::fabs(got[j] - want[j] / static_cast<double>(grams.size())) < 1e-15);
        }
    }
}

TEST_CASE("embed_word_subword: known word row joins the mean") {
    auto table = features::SubwordEmbeddingTable::random(5, 4, 16, 3, 6);
    table.word_to_row["ab"] = 0;
    table.words = Tensor::matrix(1, 4, {10, 10, 10, 10});
    auto got = features::embed_word_subword(table, "ab");
    auto grams = features::subword_ngrams("ab", 3, 6);
    std::vector<double> want(4, 10.0);
    for (const auto& g : grams) {
        std::size_t bucket = features::fnv1a64(g) % table.bucket_count;
        for (std::size_t j = 0; j < 4; ++j) want[j] += table.buckets(bucket, j);
    }
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(got[j] == doctest::Approx(want[j] / static_cast<double>(grams.size() + 1)));
    }
}

TEST_CASE("embed_word_subword: single-ngram word hits one bucket exactly") {
    auto table = features::SubwordEmbeddingTable::random(5, 4, 16, 3, 6);
    std::size_t bucket = features::fnv1a64("<a>") % table.bucket_count;
    auto got = features::embed_word_subword(table, "a");
    for (std::size_t j = 0; j < 4; ++j) CHECK(got[j] == table.buckets(bucket, j));

    // zeroed buckets give the zero vector
    features::SubwordEmbeddingTable zeros = table;
    zeros.buckets.fill(0.0);
    auto z = features::embed_word_subword(zeros, "anything");
    for (double v : z) CHECK(v == 0.0);
}

TEST_CASE("embed_word_subword is deterministic across table rebuilds") {
    auto t1 = features::SubwordEmbeddingTable::random(42, 16, 4096, 3, 6);
    auto t2 = features::SubwordEmbeddingTable::random(42, 16, 4096, 3, 6);
    for (const std::string& word : {"متخلف", "يوم", "xyz"}) {
        CHECK(features::embed_word_subword(t1, word) == features::embed_word_subword(t2, word));
    }
}

TEST_CASE("subword table save/load round trip is exact") {
    auto table = features::SubwordEmbeddingTable::random(9, 6, 32, 3, 5);
    table.word_to_row["قط"] = 0;
    table.words = Tensor({1, 6});
    table.words(0, 2) = 1.0 / 3.0;
    std::string path = "subword_roundtrip.table";
    table.save(path);
    auto back = features::SubwordEmbeddingTable::load(path);
    CHECK(back.dim == table.dim);
    CHECK(back.n_low == table.n_low);
    CHECK(back.n_high == table.n_high);
    CHECK(back.bucket_count == table.bucket_count);
    for (std::size_t i = 0; i < table.buckets.size(); ++i) {
        CHECK(back.buckets.flat(i) == table.buckets.flat(i));
    }
    CHECK(back.word_to_row == table.word_to_row);
    CHECK(back.words(0, 2) == table.words(0, 2));
    std::remove(path.c_str());
}

TEST_CASE("encode_batch: shapes, masks, truncation, oov policies") {
    TempFile f("emb_enc.txt", "a 1 0\nb 0 1\n");
    auto table = features::load_embeddings_text(f.path, 2);
    features::TableEmbedder embedder(table);

    std::vector<TokenSequence> docs = {{{"a", "b", "a"}}, {{}}, {{"zzz", "a"}}};
    auto batch = features::encode_batch(docs, embedder, 5, 2);
    CHECK(batch.tensor.shape() == std::vector<std::size_t>{3, 5, 2});
    CHECK(batch.lengths == std::vector<std::size_t>{3, 0, 2});
    CHECK(batch.mask(0, 2) == 1.0);
    CHECK(batch.mask(0, 3) == 0.0);
    for (std::size_t j = 0; j < 2; ++j) CHECK(batch.tensor(1, 0, j) == 0.0);  // empty doc
    CHECK(batch.tensor(2, 0, 0) == 0.0);  // oov zero vector keeps its slot
    CHECK(batch.mask(2, 0) == 1.0);

    // skip policy drops the unknown token instead
    features::EmbeddingTable skip_table = table;
    skip_table.oov_policy = features::OovPolicy::Skip;
    features::TableEmbedder skipper(skip_table);
    auto skipped = features::encode_batch(docs, skipper, 5, 2);
    CHECK(skipped.lengths == std::vector<std::size_t>{3, 0, 1});

    // truncation to max_len
    std::vector<TokenSequence> long_doc = {{{"a", "a", "a", "a", "a", "a", "a"}}};
    auto truncated = features::encode_batch(long_doc, embedder, 3, 2);
    CHECK(truncated.lengths == std::vector<std::size_t>{3});

    // masked positions are exactly zero
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t t = 0; t < 5; ++t) {
            if (batch.mask(i, t) == 0.0) {
                for (std::size_t j = 0; j < 2; ++j) CHECK(batch.tensor(i, t, j) == 0.0);
            }
        }
    }
    CHECK_THROWS(features::encode_batch(docs, embedder, 0, 2));
    CHECK_THROWS(features::encode_batch(docs, embedder, 5, 3));
}

TEST_CASE("fnv1a64 reference value") {
    // pinned so bucket assignment can never drift between platforms
    CHECK(features::fnv1a64("<a>") == 8075387443342670384ULL);
    CHECK(features::fnv1a64("") == 14695981039346656037ULL);
}
