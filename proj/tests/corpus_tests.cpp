#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "textguard/corpus.hpp"
#include "textguard/numeric.hpp"

using namespace textguard;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content) : path(name) {
        std::ofstream out(path, std::ios::binary);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

// direct 2x2 contingency computation, independent of the implementation
double kappa_oracle(const std::vector<int>& a, const std::vector<int>& b) {
    double n = static_cast<double>(a.size());
    double agree = 0, a1 = 0, b1 = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        agree += a[i] == b[i];
        a1 += a[i];
        b1 += b[i];
    }
    double po = agree / n;
    double pe = (a1 / n) * (b1 / n) + (1 - a1 / n) * (1 - b1 / n);
    return (po - pe) / (1 - pe);
}

std::multiset<std::pair<std::string, int>> as_multiset(const corpus::Corpus& c) {
    std::multiset<std::pair<std::string, int>> out;
    for (const auto& p : c.posts) out.insert({p.text, p.label});
    return out;
}

}  // namespace

TEST_CASE("load_csv parses ordered rows") {
    TempFile f("corpus_basic.csv", "انت غبي,1\nيوم جميل,0\n");
    auto c = corpus::load_csv(f.path);
    REQUIRE(c.size() == 2);
    CHECK(c.posts[0].text == "انت غبي");
    CHECK(c.posts[0].label == 1);
    CHECK(c.posts[1].label == 0);
}

TEST_CASE("load_csv errors: missing file, empty corpus, bad labels, bad fields") {
    CHECK_THROWS_WITH_AS(corpus::load_csv("no_such_file.csv"),
                         doctest::Contains("no such file"), std::runtime_error);
    TempFile empty("corpus_empty.csv", "");
    CHECK_THROWS_WITH_AS(corpus::load_csv(empty.path), doctest::Contains("empty corpus"),
                         std::runtime_error);
    TempFile bad_label("corpus_badlabel.csv", "ok,1\nbad,2\n");
    CHECK_THROWS_WITH_AS(corpus::load_csv(bad_label.path), doctest::Contains("row 2"),
                         std::runtime_error);
    TempFile bad_fields("corpus_badfields.csv", "a,b,1\n");
    CHECK_THROWS_WITH_AS(corpus::load_csv(bad_fields.path), doctest::Contains("row 1"),
                         std::runtime_error);
}

TEST_CASE("load_csv auto-detects a header and handles quoting") {
    TempFile f("corpus_header.csv",
               "text,label\n\"قال: \"\"anta, ghabi\"\"\",1\nsecond line,0\n");
    auto c = corpus::load_csv(f.path);
    REQUIRE(c.size() == 2);
    CHECK(c.posts[0].text == "قال: \"anta, ghabi\"");
    CHECK(c.posts[0].label == 1);

    // an integer label outside {0,1} on row 1 is bad data, not a header
    TempFile bad1("corpus_badrow1.csv", "some text,2\nok,1\n");
    CHECK_THROWS_WITH_AS(corpus::load_csv(bad1.path), doctest::Contains("row 1"),
                         std::runtime_error);
}

TEST_CASE("load_keywords reads one trimmed term per line") {
    TempFile f("keywords.txt", "متخلف\n\n  غبي  \r\nمقرف\n");
    auto words = corpus::load_keywords(f.path);
    REQUIRE(words.size() == 3);
    CHECK(words[0] == "متخلف");
    CHECK(words[1] == "غبي");
    CHECK(words[2] == "مقرف");
    CHECK_THROWS(corpus::load_keywords("no_such_keywords.txt"));
}

TEST_CASE("save/load csv round trip") {
    corpus::Corpus c;
    c.posts = {{"comma, inside", 1}, {"quote \" inside", 0}, {"عادي", 1}};
    TempFile f("corpus_roundtrip.csv", "");
    corpus::save_csv(c, f.path);
    auto back = corpus::load_csv(f.path);
    REQUIRE(back.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        CHECK(back.posts[i].text == c.posts[i].text);
        CHECK(back.posts[i].label == c.posts[i].label);
    }
}

TEST_CASE("keyword_filter keeps substring matches in order") {
    corpus::Corpus c;
    c.posts = {{"انت متخلف", 1}, {"صباح الخير", 0}, {"متخلف", 1}};
    auto kept = corpus::keyword_filter(c, {"متخلف"});
    REQUIRE(kept.size() == 2);
    CHECK(kept.posts[0].text == "انت متخلف");
    CHECK(kept.posts[1].text == "متخلف");  // keyword equal to the whole post

    auto none = corpus::keyword_filter(c, {"جامعه"});
    CHECK(none.empty());
    CHECK_THROWS(corpus::keyword_filter(c, {}));
}

TEST_CASE("keyword_filter matches through normalization") {
    corpus::Corpus c;
    c.posts = {{"أنت مـتخلف!", 1}};  // alef-hamza + tatweel spelling
    auto kept = corpus::keyword_filter(c, {"متخلف"});
    CHECK(kept.size() == 1);
}

TEST_CASE("split: sizes, determinism, conservation") {
    corpus::Corpus c;
    for (int i = 0; i < 10; ++i) c.posts.push_back({"post " + std::to_string(i), i % 2});
    corpus::SplitSpec spec{0.8, 7, true};
    auto s1 = corpus::split(c, spec);
    CHECK(s1.train.size() == 8);
    CHECK(s1.test.size() == 2);

    auto s2 = corpus::split(c, spec);
    CHECK(as_multiset(s1.train) == as_multiset(s2.train));
    CHECK(as_multiset(s1.test) == as_multiset(s2.test));

    auto whole = as_multiset(c);
    auto merged = as_multiset(s1.train);
    for (const auto& p : s1.test.posts) merged.insert({p.text, p.label});
    CHECK(merged == whole);
}

TEST_CASE("split: 10662 posts at 0.8 leave the 2133-item test side") {
    corpus::Corpus c;
    c.posts.resize(10662, {"x", 0});
    auto s = corpus::split(c, {0.8, 1, false});
    CHECK(s.train.size() == 8529);
    CHECK(s.test.size() == 2133);
}

TEST_CASE("split: fraction rounding does not drift on awkward fractions") {
    corpus::Corpus c;
    c.posts.resize(10, {"x", 0});
    CHECK(corpus::split(c, {0.7, 1, false}).train.size() == 7);
    CHECK(corpus::split(c, {0.3, 1, false}).train.size() == 3);
    CHECK(corpus::split(c, {0.5, 1, false}).train.size() == 5);
    CHECK_THROWS(corpus::split(c, {1.0, 1, false}));
    corpus::Corpus tiny;
    tiny.posts.resize(1, {"x", 0});
    CHECK_THROWS(corpus::split(tiny, {0.8, 1, false}));
}

TEST_CASE("cohen_kappa: perfect and inverse agreement") {
    corpus::AnnotationPair same{{1, 0, 1, 0}, {1, 0, 1, 0}};
    auto r = corpus::cohen_kappa(same);
    CHECK(r.kappa == doctest::Approx(1.0));
    CHECK(r.observed_agreement == 1.0);

    corpus::AnnotationPair inverse{{1, 0, 1, 0, 1}, {0, 1, 0, 1, 0}};
    auto ri = corpus::cohen_kappa(inverse);
    CHECK(ri.observed_agreement == 0.0);
    CHECK(ri.kappa < 0.0);
}

TEST_CASE("cohen_kappa: hand-computed 2x2 fixture") {
    // counts: both-1 50, a1/b0 5, a0/b1 5, both-0 40
    corpus::AnnotationPair pair;
    for (int i = 0; i < 50; ++i) {
        pair.labels_a.push_back(1);
        pair.labels_b.push_back(1);
    }
    for (int i = 0; i < 5; ++i) {
        pair.labels_a.push_back(1);
        pair.labels_b.push_back(0);
    }
    for (int i = 0; i < 5; ++i) {
        pair.labels_a.push_back(0);
        pair.labels_b.push_back(1);
    }
    for (int i = 0; i < 40; ++i) {
        pair.labels_a.push_back(0);
        pair.labels_b.push_back(0);
    }
    auto r = corpus::cohen_kappa(pair);
    CHECK(r.observed_agreement == doctest::Approx(0.90));
    CHECK(r.expected_agreement == doctest::Approx(0.505));
    CHECK(r.kappa == doctest::Approx(0.797979797979798));
    CHECK(r.n_items == 100);
}

TEST_CASE("cohen_kappa: exhaustive oracle over all 2x2 tables with N <= 20") {
    for (int n11 = 0; n11 <= 20; ++n11) {
        for (int n10 = 0; n10 + n11 <= 20; ++n10) {
            for (int n01 = 0; n01 + n10 + n11 <= 20; ++n01) {
                for (int n00 = (n11 + n10 + n01 == 0) ? 1 : 0; n00 + n01 + n10 + n11 <= 20; ++n00) {
                    std::vector<int> a, b;
                    for (int i = 0; i < n11; ++i) { a.push_back(1); b.push_back(1); }
                    for (int i = 0; i < n10; ++i) { a.push_back(1); b.push_back(0); }
                    for (int i = 0; i < n01; ++i) { a.push_back(0); b.push_back(1); }
                    for (int i = 0; i < n00; ++i) { a.push_back(0); b.push_back(0); }
                    corpus::AnnotationPair pair{a, b};

                    bool pe_one = (n10 + n01 + ((n11 > 0 && n00 > 0) ? 1 : 0)) == 0;
                    if (pe_one) {
                        auto r = corpus::cohen_kappa(pair);
                        CHECK(r.kappa == 1.0);  // constant identical annotators
                        continue;
                    }
                    auto r = corpus::cohen_kappa(pair);
                    double want = kappa_oracle(a, b);
                    CHECK(r.kappa == doctest::Approx(want).epsilon(1e-12));
                    CHECK(r.kappa >= -1.0 - 1e-12);
                    CHECK(r.kappa <= 1.0 + 1e-12);
                    if (r.expected_agreement < 1.0) {
                        CHECK((r.kappa == doctest::Approx(1.0)) == (r.observed_agreement == 1.0));
                    }
                    // symmetry
                    auto rs = corpus::cohen_kappa({b, a});
                    CHECK(rs.kappa == doctest::Approx(r.kappa).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("cohen_kappa errors") {
    CHECK_THROWS(corpus::cohen_kappa({{1, 0}, {1}}));
    CHECK_THROWS(corpus::cohen_kappa({{}, {}}));
    CHECK_THROWS(corpus::cohen_kappa({{2}, {1}}));
}

TEST_CASE("synth_corpus: label counts and lexicon containment") {
    auto c = corpus::synth_corpus(7, 100, 0.5);
    REQUIRE(c.size() == 100);
    int ones = 0;
    for (const auto& post : c.posts) {
        bool has_bully = false;
        for (const auto& term : corpus::bully_lexicon()) {
            if (post.text.find(term) != std::string::npos) has_bully = true;
        }
        if (post.label == 1) {
            ++ones;
            CHECK(has_bully);
        } else {
            CHECK(!has_bully);
        }
    }
    CHECK(ones == 50);

    auto c3 = corpus::synth_corpus(9, 10, 0.3);
    int ones3 = 0;
    for (const auto& post : c3.posts) ones3 += post.label;
    CHECK(ones3 == 3);
}

TEST_CASE("synth_corpus is byte-identical per seed") {
    auto a = corpus::synth_corpus(123, 50, 0.4);
    auto b = corpus::synth_corpus(123, 50, 0.4);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.posts[i].text == b.posts[i].text);
        CHECK(a.posts[i].label == b.posts[i].label);
    }
    auto c = corpus::synth_corpus(124, 50, 0.4);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) any_diff |= a.posts[i].text != c.posts[i].text;
    CHECK(any_diff);

    CHECK_THROWS(corpus::synth_corpus(1, 1, 0.5));
    CHECK_THROWS(corpus::synth_corpus(1, 10, 0.0));
    CHECK_THROWS(corpus::synth_corpus(1, 10, 1.0));
}
