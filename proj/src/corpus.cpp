#include "textguard/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "textguard/numeric.hpp"
#include "textguard/textproc.hpp"

namespace textguard::corpus {

std::vector<int> Corpus::labels() const {
    std::vector<int> out;
    out.reserve(posts.size());
    for (const auto& p : posts) out.push_back(p.label);
    return out;
}

namespace {

// Reads one CSV record (may span lines when a quoted field contains a
// newline). Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line_no) {
    fields.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line_no;
                field.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            ++line_no;
            if (!field.empty() && field.back() == '\r') field.pop_back();
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(c);
        }
    }
    if (!any) return false;
    if (!field.empty() && field.back() == '\r') field.pop_back();
    fields.push_back(std::move(field));
    ++line_no;
    return true;
}

bool field_is_integer(const std::string& s) {
    std::string t = s;
    t.erase(0, t.find_first_not_of(" \t"));
    t.erase(t.find_last_not_of(" \t") + 1);
    if (t.empty()) return false;
    std::size_t start = (t[0] == '-' || t[0] == '+') ? 1 : 0;
    if (start == t.size()) return false;
    for (std::size_t i = start; i < t.size(); ++i) {
        if (t[i] < '0' || t[i] > '9') return false;
    }
    return true;
}

bool parse_binary_label(const std::string& s, int& out) {
    std::string t = s;
    t.erase(0, t.find_first_not_of(" \t"));
    t.erase(t.find_last_not_of(" \t") + 1);
    if (t == "0") {
        out = 0;
        return true;
    }
    if (t == "1") {
        out = 1;
        return true;
    }
    return false;
}

std::string trim_unicode(const std::string& s) {
    auto cps = textproc::utf8_decode(s);
    std::size_t b = 0, e = cps.size();
    while (b < e && textproc::is_unicode_space(cps[b])) ++b;
    while (e > b && textproc::is_unicode_space(cps[e - 1])) --e;
    return textproc::utf8_encode({cps.begin() + b, cps.begin() + e});
}

}  // namespace

Corpus load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_csv: no such file: " + path);

    Corpus corpus;
    corpus.source = path;
    std::vector<std::string> fields;
    std::size_t line_no = 0;
    std::size_t record_no = 0;
    while (read_record(in, fields, line_no)) {
        ++record_no;
        if (fields.size() == 1 && trim_unicode(fields[0]).empty()) continue;  // blank line
        if (fields.size() != 2) {
            throw std::runtime_error("load_csv: row " + std::to_string(record_no) + " has " +
                                     std::to_string(fields.size()) + " fields, expected 2");
        }
        int label;
        if (!parse_binary_label(fields[1], label)) {
            // a first row with a non-integer second field is a header;
            // an integer outside {0,1} is bad data even on row 1
            if (record_no == 1 && !field_is_integer(fields[1])) continue;
            throw std::runtime_error("load_csv: row " + std::to_string(record_no) +
                                     " label must be 0 or 1, got \"" + fields[1] + "\"");
        }
        std::string text = trim_unicode(fields[0]);
        if (text.empty()) {
            throw std::runtime_error("load_csv: row " + std::to_string(record_no) + " has empty text");
        }
        corpus.posts.push_back({std::move(text), label});
    }
    if (corpus.posts.empty()) throw std::runtime_error("load_csv: empty corpus: " + path);
    return corpus;
}

void save_csv(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_csv: cannot write " + path);
    out << "text,label\n";
    for (const auto& post : corpus.posts) {
        bool needs_quotes = post.text.find_first_of(",\"\n") != std::string::npos;
        if (needs_quotes) {
            out << '"';
            for (char c : post.text) {
                if (c == '"') out << "\"\"";
                else out << c;
            }
            out << '"';
        } else {
            out << post.text;
        }
        out << ',' << post.label << '\n';
    }
}

std::vector<std::string> load_keywords(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_keywords: no such file: " + path);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string t = trim_unicode(line);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

Corpus keyword_filter(const Corpus& corpus, const std::vector<std::string>& keywords) {
    if (keywords.empty()) throw std::invalid_argument("keyword_filter: empty keyword list");
    textproc::NormalizationConfig cfg;
    std::vector<std::string> normed;
    normed.reserve(keywords.size());
    for (const auto& k : keywords) normed.push_back(textproc::normalize(k, cfg));

    Corpus out;
    out.source = corpus.source + " (filtered)";
    for (const auto& post : corpus.posts) {
        std::string text = textproc::normalize(post.text, cfg);
        for (const auto& k : normed) {
            if (!k.empty() && text.find(k) != std::string::npos) {
                out.posts.push_back(post);
                break;
            }
        }
    }
    return out;
}

SplitResult split(const Corpus& corpus, const SplitSpec& spec) {
    if (corpus.size() < 2) throw std::invalid_argument("split: corpus must have at least 2 posts");
    if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0) {
        throw std::invalid_argument("split: train_fraction must be in (0,1)");
    }
    std::size_t n = corpus.size();
    // floor with a tiny guard so exact products are not lost to fp error
    auto train_n = static_cast<std::size_t>(
        std::floor(spec.train_fraction * static_cast<double>(n) + 1e-9));
    if (train_n == 0 || train_n >= n) {
        throw std::invalid_argument("split: fraction leaves an empty train or test set");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (spec.shuffle) {
        numeric::Prng prng(spec.seed);
        prng.shuffle(order);
    }

    SplitResult result;
    result.train.source = corpus.source + " (train)";
    result.test.source = corpus.source + " (test)";
    for (std::size_t i = 0; i < n; ++i) {
        (i < train_n ? result.train : result.test).posts.push_back(corpus.posts[order[i]]);
    }
    return result;
}

KappaResult cohen_kappa(const AnnotationPair& pair) {
    const auto& a = pair.labels_a;
    const auto& b = pair.labels_b;
    if (a.size() != b.size()) throw std::invalid_argument("cohen_kappa: label vectors differ in length");
    if (a.empty()) throw std::invalid_argument("cohen_kappa: no items");

    std::size_t n = a.size();
    std::size_t agree = 0, a1 = 0, b1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (a[i] != 0 && a[i] != 1) throw std::invalid_argument("cohen_kappa: labels must be 0 or 1");
        if (b[i] != 0 && b[i] != 1) throw std::invalid_argument("cohen_kappa: labels must be 0 or 1");
        if (a[i] == b[i]) ++agree;
        a1 += static_cast<std::size_t>(a[i]);
        b1 += static_cast<std::size_t>(b[i]);
    }

    KappaResult r;
    r.n_items = n;
    double dn = static_cast<double>(n);
    r.observed_agreement = static_cast<double>(agree) / dn;
    double pa1 = static_cast<double>(a1) / dn, pb1 = static_cast<double>(b1) / dn;
    r.expected_agreement = pa1 * pb1 + (1.0 - pa1) * (1.0 - pb1);

    if (r.expected_agreement >= 1.0) {
        // only reachable when both annotators are constant and identical
        if (r.observed_agreement == 1.0) {
            r.kappa = 1.0;
            return r;
        }
        throw std::runtime_error("cohen_kappa: degenerate marginals");
    }
    r.kappa = (r.observed_agreement - r.expected_agreement) / (1.0 - r.expected_agreement);
    return r;
}

const std::vector<std::string>& bully_lexicon() {
    // Seeded from the key terms reported for this kind of dataset.
    static const std::vector<std::string> lexicon = {
        "متخلف", "مقرف", "غبي", "حقير", "تافه", "فاشل",
    };
    return lexicon;
}

namespace {

const std::vector<std::string>& neutral_lexicon() {
    static const std::vector<std::string> words = {
        "صباح", "الخير", "يوم",  "جميل", "شكرا", "الحمد", "لله",   "اهلا",
        "سعيد", "عمل",   "رائع", "كتاب", "قهوة", "صديق", "مبروك", "الله",
        "مساء", "النور", "بيت",  "سماء", "بحر",  "شمس",  "قمر",   "ورد",
    };
    return words;
}

}  // namespace

Corpus synth_corpus(std::uint64_t seed, std::size_t n, double bully_fraction) {
    if (n < 2) throw std::invalid_argument("synth_corpus: n must be at least 2");
    if (bully_fraction <= 0.0 || bully_fraction >= 1.0) {
        throw std::invalid_argument("synth_corpus: bully_fraction must be in (0,1)");
    }
    // round-half-up on the bullying count
    auto n_bully = static_cast<std::size_t>(
        std::floor(bully_fraction * static_cast<double>(n) + 0.5 + 1e-9));

    numeric::Prng prng(seed);
    std::vector<int> labels(n, 0);
    for (std::size_t i = 0; i < n_bully; ++i) labels[i] = 1;
    prng.shuffle(labels);

    const auto& bully = bully_lexicon();
    const auto& neutral = neutral_lexicon();

    Corpus corpus;
    corpus.source = "synth(seed=" + std::to_string(seed) + ")";
    corpus.posts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t len = 3 + prng.next_below(6);
        std::vector<std::string> tokens;
        tokens.reserve(len);
        for (std::size_t k = 0; k < len; ++k) {
            tokens.push_back(neutral[prng.next_below(neutral.size())]);
        }
        if (labels[i] == 1) {
            std::size_t insertions = 1 + prng.next_below(2);
            for (std::size_t k = 0; k < insertions; ++k) {
                tokens[prng.next_below(tokens.size())] = bully[prng.next_below(bully.size())];
            }
        }
        std::string text = tokens[0];
        for (std::size_t k = 1; k < tokens.size(); ++k) {
            text += ' ';
            text += tokens[k];
        }
        corpus.posts.push_back({std::move(text), labels[i]});
    }
    return corpus;
}

}  // namespace textguard::corpus
