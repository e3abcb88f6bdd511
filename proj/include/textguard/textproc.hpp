#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace textguard::corpus {
struct Corpus;
}

namespace textguard::textproc {

// UTF-8 <-> codepoint helpers. Invalid byte sequences decode to U+FFFD
// one byte at a time, so decoding never fails.
std::vector<char32_t> utf8_decode(const std::string& text);
std::string utf8_encode(const std::vector<char32_t>& codepoints);
bool is_unicode_space(char32_t cp);

/// Which cleaning transforms run; all on by default. The fixed order is
/// URL/mention/hashtag removal, tatweel, diacritics, alef/ta-marbuta
/// folding, non-letter stripping, Latin lowercasing, whitespace collapse.
struct NormalizationConfig {
    bool strip_diacritics = true;
    bool strip_tatweel = true;
    bool normalize_alef = true;
    bool normalize_ta_marbuta = true;
    bool strip_urls_mentions_hashtags = true;
    bool strip_non_letter = true;
    bool lowercase_latin = true;
};

/// Idempotent for every config: normalize(normalize(x)) == normalize(x).
std::string normalize(const std::string& text, const NormalizationConfig& config = {});

struct TokenSequence {
    std::vector<std::string> tokens;

    std::size_t size() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }
};

/// Split on Unicode whitespace, dropping empty fragments.
TokenSequence tokenize(const std::string& text);

/// All contiguous n-grams for n in [n_low, n_high], joined by a single
/// space, grouped by n and then by position.
std::vector<std::string> ngrams(const TokenSequence& tokens, std::size_t n_low, std::size_t n_high);

/// Term <-> contiguous index bijection, capped at max_features.
struct Vocabulary {
    std::map<std::string, std::size_t> term_to_index;
    std::vector<std::string> terms;  // index -> term
    std::size_t max_features = 0;

    std::size_t size() const { return terms.size(); }
    bool contains(const std::string& term) const { return term_to_index.count(term) > 0; }
    /// Index of term, or npos when absent.
    std::size_t index_of(const std::string& term) const;
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

/// Selects the max_features most frequent terms over the normalized,
/// tokenized corpus (frequency = total occurrence count). Ties break
/// lexicographically; indices are assigned in lexicographic term order
/// so fitted models are byte-reproducible.
Vocabulary build_vocab(const corpus::Corpus& corpus, const NormalizationConfig& config,
                       std::pair<std::size_t, std::size_t> ngram_range, std::size_t max_features);

/// One "index<TAB>term" line per entry, UTF-8.
void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

}  // namespace textguard::textproc
