#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace textguard::corpus {

/// One social-media comment with its binary label (1 = bullying).
struct LabeledPost {
    std::string text;
    int label = 0;
};

struct Corpus {
    std::vector<LabeledPost> posts;
    std::string source;

    std::size_t size() const { return posts.size(); }
    bool empty() const { return posts.empty(); }
    std::vector<int> labels() const;
};

/// Two annotators' labels over the same items.
struct AnnotationPair {
    std::vector<int> labels_a;
    std::vector<int> labels_b;
};

struct KappaResult {
    double kappa = 0.0;
    double observed_agreement = 0.0;  // p_o
    double expected_agreement = 0.0;  // p_e
    std::size_t n_items = 0;
};

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 42;
    bool shuffle = true;
};

struct SplitResult {
    Corpus train;
    Corpus test;
};

/// CSV dialect: comma-separated, double-quote escaping ("" inside a
/// quoted field), UTF-8, records of exactly two fields (text,label).
/// A single header row is auto-detected by a non-integer second field.
Corpus load_csv(const std::string& path);
void save_csv(const Corpus& corpus, const std::string& path);

/// Keyword list file: one term per line, UTF-8; blank lines ignored.
std::vector<std::string> load_keywords(const std::string& path);

/// Keeps posts whose normalized text contains at least one keyword as a
/// substring (keywords are normalized the same way). Order preserved.
Corpus keyword_filter(const Corpus& corpus, const std::vector<std::string>& keywords);

/// Deterministic train/test partition. Train size is floor(fraction*N),
/// so the test side takes the remainder (10662 posts at 0.8 gives the
/// 2133-item test set reported for this kind of pipeline).
SplitResult split(const Corpus& corpus, const SplitSpec& spec);

/// Chance-corrected agreement (p_o - p_e) / (1 - p_e).
KappaResult cohen_kappa(const AnnotationPair& pair);

/// Deterministic synthetic stand-in corpus: label-1 posts contain at
/// least one term from a built-in bully lexicon, label-0 posts contain
/// none. Same seed, byte-identical corpus.
Corpus synth_corpus(std::uint64_t seed, std::size_t n, double bully_fraction);

/// The lexicon used by synth_corpus; exposed for tests and filtering.
const std::vector<std::string>& bully_lexicon();

}  // namespace textguard::corpus
