#include "textguard/textproc.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "textguard/corpus.hpp"

namespace textguard::textproc {

std::vector<char32_t> utf8_decode(const std::string& text) {
    std::vector<char32_t> out;
    out.reserve(text.size());
    std::size_t i = 0;
    const auto* bytes = reinterpret_cast<const unsigned char*>(text.data());
    while (i < text.size()) {
        unsigned char b = bytes[i];
        std::size_t len;
        char32_t cp;
        if (b < 0x80) {
            len = 1;
            cp = b;
        } else if ((b & 0xE0) == 0xC0) {
            len = 2;
            cp = b & 0x1F;
        } else if ((b & 0xF0) == 0xE0) {
            len = 3;
            cp = b & 0x0F;
        } else if ((b & 0xF8) == 0xF0) {
            len = 4;
            cp = b & 0x07;
        } else {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        if (i + len > text.size()) {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        bool ok = true;
        for (std::size_t k = 1; k < len; ++k) {
            if ((bytes[i + k] & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (bytes[i + k] & 0x3F);
        }
        if (!ok) {
            out.push_back(0xFFFD);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

std::string utf8_encode(const std::vector<char32_t>& codepoints) {
    std::string out;
    out.reserve(codepoints.size() * 2);
    for (char32_t cp : codepoints) {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }
    return out;
}

bool is_unicode_space(char32_t cp) {
    switch (cp) {
        case U' ': case U'\t': case U'\n': case U'\r': case U'\f': case U'\v':
        case 0x00A0: case 0x1680: case 0x2028: case 0x2029: case 0x202F:
        case 0x205F: case 0x3000: case 0x0085:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

namespace {

// Arabic tashkeel range plus the dagger alef.
bool is_diacritic(char32_t cp) { return (cp >= 0x064B && cp <= 0x0652) || cp == 0x0670; }

bool is_letter(char32_t cp) {
    if ((cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z')) return true;
    // Arabic letters, including the extended block used by dialect spellings.
    if (cp >= 0x0621 && cp <= 0x064A) return true;
    if (cp >= 0x0660 && cp <= 0x0669) return false;  // Arabic-Indic digits
    if (cp >= 0x066E && cp <= 0x06D3) return true;
    return false;
}

bool segment_is_noise(const std::vector<char32_t>& seg) {
    if (seg.empty()) return false;
    if (seg[0] == U'@' || seg[0] == U'#') return true;
    std::string s = utf8_encode(seg);
    return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0 || s.rfind("www.", 0) == 0;
}

}  // namespace

namespace {

std::string normalize_pass(const std::string& text, const NormalizationConfig& config) {
    std::vector<char32_t> cps = utf8_decode(text);

    if (config.strip_urls_mentions_hashtags) {
        std::vector<char32_t> kept;
        std::vector<char32_t> seg;
        auto flush = [&](char32_t sep) {
            if (!seg.empty() && !segment_is_noise(seg)) {
                kept.insert(kept.end(), seg.begin(), seg.end());
            }
            seg.clear();
            if (sep != 0) kept.push_back(sep);
        };
        for (char32_t cp : cps) {
            if (is_unicode_space(cp)) {
                flush(cp);
            } else {
                seg.push_back(cp);
            }
        }
        flush(0);
        cps = std::move(kept);
    }

    std::vector<char32_t> out;
    out.reserve(cps.size());
    for (char32_t cp : cps) {
        if (config.strip_tatweel && cp == 0x0640) continue;
        if (config.strip_diacritics && is_diacritic(cp)) continue;
        if (config.normalize_alef && (cp == 0x0622 || cp == 0x0623 || cp == 0x0625)) cp = 0x0627;
        if (config.normalize_ta_marbuta) {
            if (cp == 0x0629) cp = 0x0647;
            if (cp == 0x0649) cp = 0x064A;
        }
        if (config.strip_non_letter && !is_letter(cp) && !is_unicode_space(cp)) continue;
        if (config.lowercase_latin && cp >= U'A' && cp <= U'Z') cp = cp - U'A' + U'a';
        out.push_back(cp);
    }

    // collapse whitespace runs and trim
    std::vector<char32_t> collapsed;
    bool pending_space = false;
    for (char32_t cp : out) {
        if (is_unicode_space(cp)) {
            pending_space = !collapsed.empty();
        } else {
            if (pending_space) collapsed.push_back(U' ');
            pending_space = false;
            collapsed.push_back(cp);
        }
    }
    return utf8_encode(collapsed);
}

}  // namespace

std::string normalize(const std::string& text, const NormalizationConfig& config) {
    // Character folding can expose a noise prefix ("ً@user" loses its
    // diacritic and becomes a mention), so the pass runs to a fixpoint.
    // Each extra pass only ever shortens the text, so this terminates.
    std::string current = normalize_pass(text, config);
    for (int i = 0; i < 8; ++i) {
        std::string next = normalize_pass(current, config);
        if (next == current) break;
        current = std::move(next);
    }
    return current;
}

TokenSequence tokenize(const std::string& text) {
    TokenSequence seq;
    std::vector<char32_t> cps = utf8_decode(text);
    std::vector<char32_t> current;
    for (char32_t cp : cps) {
        if (is_unicode_space(cp)) {
            if (!current.empty()) {
                seq.tokens.push_back(utf8_encode(current));
                current.clear();
            }
        } else {
            current.push_back(cp);
        }
    }
    if (!current.empty()) seq.tokens.push_back(utf8_encode(current));
    return seq;
}

std::vector<std::string> ngrams(const TokenSequence& tokens, std::size_t n_low, std::size_t n_high) {
    if (n_low < 1 || n_low > n_high) throw std::invalid_argument("ngrams: invalid range");
    std::vector<std::string> out;
    for (std::size_t n = n_low; n <= n_high; ++n) {
        if (tokens.size() < n) continue;
        for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
            std::string gram = tokens.tokens[i];
            for (std::size_t k = 1; k < n; ++k) {
                gram += ' ';
                gram += tokens.tokens[i + k];
            }
            out.push_back(std::move(gram));
        }
    }
    return out;
}

std::size_t Vocabulary::index_of(const std::string& term) const {
    auto it = term_to_index.find(term);
    return it == term_to_index.end() ? npos : it->second;
}

Vocabulary build_vocab(const corpus::Corpus& corpus, const NormalizationConfig& config,
                       std::pair<std::size_t, std::size_t> ngram_range, std::size_t max_features) {
    if (corpus.posts.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    if (max_features < 1) throw std::invalid_argument("build_vocab: max_features must be at least 1");

    std::map<std::string, std::size_t> freq;  // ordered map fixes tie-break order
    for (const auto& post : corpus.posts) {
        TokenSequence toks = tokenize(normalize(post.text, config));
        for (auto& term : ngrams(toks, ngram_range.first, ngram_range.second)) {
            ++freq[term];
        }
    }
    if (freq.empty()) throw std::runtime_error("build_vocab: empty vocabulary after normalization");

    std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (items.size() > max_features) items.resize(max_features);

    Vocabulary vocab;
    vocab.max_features = max_features;
    std::vector<std::string> selected;
    selected.reserve(items.size());
    for (auto& [term, count] : items) selected.push_back(term);
    std::sort(selected.begin(), selected.end());
    vocab.terms = selected;
    for (std::size_t i = 0; i < selected.size(); ++i) vocab.term_to_index[selected[i]] = i;
    return vocab;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_vocab: cannot write " + path);
    for (std::size_t i = 0; i < vocab.terms.size(); ++i) {
        out << i << '\t' << vocab.terms[i] << '\n';
    }
}

Vocabulary load_vocab(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_vocab: cannot open " + path);
    Vocabulary vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("load_vocab: malformed line in " + path);
        std::size_t index = std::stoul(line.substr(0, tab));
        std::string term = line.substr(tab + 1);
        if (index != vocab.terms.size()) throw std::runtime_error("load_vocab: non-contiguous indices");
        vocab.terms.push_back(term);
        vocab.term_to_index[term] = index;
    }
    vocab.max_features = vocab.terms.size();
    return vocab;
}

}  // namespace textguard::textproc
