#include "textguard/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

namespace textguard::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// config

namespace {

const std::set<std::string> kRoutes = {"tfidf", "static_word", "subword", "encoder"};
const std::set<std::string> kModels = {"logistic",     "lstm",        "bilstm",
                                       "encoder_only", "hybrid_lstm", "hybrid_bilstm"};

bool route_model_compatible(const std::string& route, const std::string& model) {
    if (route == "tfidf") return model == "logistic";
    if (route == "static_word" || route == "subword") return model == "lstm" || model == "bilstm";
    if (route == "encoder") {
        return model == "encoder_only" || model == "hybrid_lstm" || model == "hybrid_bilstm";
    }
    return false;
}

std::optional<std::uint64_t> env_seed() {
    const char* value = std::getenv("TEXTGUARD_SEED");
    if (!value || !*value) return std::nullopt;
    return std::strtoull(value, nullptr, 10);
}

std::uint64_t derive_seed(std::uint64_t seed, const std::string& salt) {
    return seed ^ features::fnv1a64(salt);
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw std::runtime_error("config: unknown key \"" + it.key() + "\" in " + where);
        }
    }
}

}  // namespace

std::size_t RunConfig::resolved_max_len() const {
    if (max_len > 0) return max_len;
    return feature_route == "subword" ? 90 : 100;
}

void RunConfig::validate() const {
    if (!kRoutes.count(feature_route)) {
        throw std::runtime_error("config: unknown feature_route \"" + feature_route + "\"");
    }
    if (!kModels.count(model_kind)) {
        throw std::runtime_error("config: unknown model_kind \"" + model_kind + "\"");
    }
    if (!route_model_compatible(feature_route, model_kind)) {
        throw std::runtime_error("config: feature_route \"" + feature_route +
                                 "\" is incompatible with model_kind \"" + model_kind +
                                 "\" (tfidf pairs with logistic, static_word/subword with "
                                 "lstm/bilstm, encoder with encoder_only/hybrid_*)");
    }
    if (feature_route == "static_word" && embeddings_path.empty()) {
        throw std::runtime_error("config: static_word route requires an embeddings path");
    }
    if (train_fraction <= 0.0 || train_fraction >= 1.0) {
        throw std::runtime_error("config: train_fraction must be in (0,1)");
    }
    if (threshold <= 0.0 || threshold >= 1.0) {
        throw std::runtime_error("config: threshold must be in (0,1)");
    }
    if (vocab_max_features == 0) throw std::runtime_error("config: vocab_max_features must be positive");
    if (embedding_dim == 0) throw std::runtime_error("config: embedding_dim must be positive");
    if (hidden_dim == 0 || dense_dim == 0) {
        throw std::runtime_error("config: hidden_dim and dense_dim must be positive");
    }
    if (ngram_low < 1 || ngram_low > ngram_high) {
        throw std::runtime_error("config: invalid ngram range");
    }
    if (subword_ngram_low < 1 || subword_ngram_low > subword_ngram_high) {
        throw std::runtime_error("config: invalid subword ngram range");
    }
    if (encoder_hidden % encoder_heads != 0) {
        throw std::runtime_error("config: encoder_hidden must be divisible by encoder_heads");
    }
    if (train.epochs < 1 || train.batch_size < 1) {
        throw std::runtime_error("config: train.epochs and train.batch_size must be positive");
    }
    if (train.val_fraction < 0.0 || train.val_fraction >= 1.0) {
        throw std::runtime_error("config: train.val_fraction must be in [0,1)");
    }
}

RunConfig parse_config_text(const std::string& text) {
    json root = json::parse(text);
    if (!root.is_object()) throw std::runtime_error("config: top level must be an object");
    check_keys(root,
               {"corpus", "feature_route", "model_kind", "seed", "output_dir", "embeddings",
                "normalization", "vocab_max_features", "ngram_low", "ngram_high",
                "subword_ngram_low", "subword_ngram_high", "subword_buckets", "embedding_dim",
                "max_len", "train_fraction", "shuffle_split", "hidden_dim", "dense_dim",
                "encoder_layers", "encoder_heads", "encoder_hidden", "encoder_ff", "train",
                "threshold"},
               "top level");

    RunConfig cfg;
    auto get = [&](const char* key, auto& out) {
        if (root.contains(key)) out = root.at(key).get<std::decay_t<decltype(out)>>();
    };
    get("corpus", cfg.corpus_path);
    get("feature_route", cfg.feature_route);
    get("model_kind", cfg.model_kind);
    get("output_dir", cfg.output_dir);
    get("embeddings", cfg.embeddings_path);
    get("vocab_max_features", cfg.vocab_max_features);
    get("ngram_low", cfg.ngram_low);
    get("ngram_high", cfg.ngram_high);
    get("subword_ngram_low", cfg.subword_ngram_low);
    get("subword_ngram_high", cfg.subword_ngram_high);
    get("subword_buckets", cfg.subword_buckets);
    get("embedding_dim", cfg.embedding_dim);
    get("max_len", cfg.max_len);
    get("train_fraction", cfg.train_fraction);
    get("shuffle_split", cfg.shuffle_split);
    get("hidden_dim", cfg.hidden_dim);
    get("dense_dim", cfg.dense_dim);
    get("encoder_layers", cfg.encoder_layers);
    get("encoder_heads", cfg.encoder_heads);
    get("encoder_hidden", cfg.encoder_hidden);
    get("encoder_ff", cfg.encoder_ff);
    get("threshold", cfg.threshold);

    if (root.contains("seed")) {
        cfg.seed = root.at("seed").get<std::uint64_t>();
    } else if (auto es = env_seed()) {
        cfg.seed = *es;
    }

    if (root.contains("normalization")) {
        const json& n = root.at("normalization");
        check_keys(n,
                   {"strip_diacritics", "strip_tatweel", "normalize_alef", "normalize_ta_marbuta",
                    "strip_urls_mentions_hashtags", "strip_non_letter", "lowercase_latin"},
                   "normalization");
        auto getn = [&](const char* key, bool& out) {
            if (n.contains(key)) out = n.at(key).get<bool>();
        };
        getn("strip_diacritics", cfg.normalization.strip_diacritics);
        getn("strip_tatweel", cfg.normalization.strip_tatweel);
        getn("normalize_alef", cfg.normalization.normalize_alef);
        getn("normalize_ta_marbuta", cfg.normalization.normalize_ta_marbuta);
        getn("strip_urls_mentions_hashtags", cfg.normalization.strip_urls_mentions_hashtags);
        getn("strip_non_letter", cfg.normalization.strip_non_letter);
        getn("lowercase_latin", cfg.normalization.lowercase_latin);
    }

    if (root.contains("train")) {
        const json& t = root.at("train");
        check_keys(t,
                   {"epochs", "batch_size", "lr", "early_stop_patience", "early_stop_metric",
                    "val_fraction"},
                   "train");
        auto gett = [&](const char* key, auto& out) {
            if (t.contains(key)) out = t.at(key).get<std::decay_t<decltype(out)>>();
        };
        gett("epochs", cfg.train.epochs);
        gett("batch_size", cfg.train.batch_size);
        gett("lr", cfg.train.lr);
        gett("early_stop_patience", cfg.train.early_stop_patience);
        gett("val_fraction", cfg.train.val_fraction);
        if (t.contains("early_stop_metric")) {
            std::string m = t.at("early_stop_metric").get<std::string>();
            if (m == "val_accuracy") {
                cfg.train.early_stop_metric = models::EarlyStopMetric::ValAccuracy;
            } else if (m == "val_loss") {
                cfg.train.early_stop_metric = models::EarlyStopMetric::ValLoss;
            } else {
                throw std::runtime_error("config: early_stop_metric must be val_accuracy or val_loss");
            }
        }
    }
    cfg.train.seed = cfg.seed;  // all randomness flows from the run seed
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_config: no such file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

std::string config_to_text(const RunConfig& config) {
    json root;
    root["corpus"] = config.corpus_path;
    root["feature_route"] = config.feature_route;
    root["model_kind"] = config.model_kind;
    root["seed"] = config.seed;
    root["output_dir"] = config.output_dir;
    root["embeddings"] = config.embeddings_path;
    root["normalization"] = {
        {"strip_diacritics", config.normalization.strip_diacritics},
        {"strip_tatweel", config.normalization.strip_tatweel},
        {"normalize_alef", config.normalization.normalize_alef},
        {"normalize_ta_marbuta", config.normalization.normalize_ta_marbuta},
        {"strip_urls_mentions_hashtags", config.normalization.strip_urls_mentions_hashtags},
        {"strip_non_letter", config.normalization.strip_non_letter},
        {"lowercase_latin", config.normalization.lowercase_latin},
    };
    root["vocab_max_features"] = config.vocab_max_features;
    root["ngram_low"] = config.ngram_low;
    root["ngram_high"] = config.ngram_high;
    root["subword_ngram_low"] = config.subword_ngram_low;
    root["subword_ngram_high"] = config.subword_ngram_high;
    root["subword_buckets"] = config.subword_buckets;
    root["embedding_dim"] = config.embedding_dim;
    root["max_len"] = config.resolved_max_len();
    root["train_fraction"] = config.train_fraction;
    root["shuffle_split"] = config.shuffle_split;
    root["hidden_dim"] = config.hidden_dim;
    root["dense_dim"] = config.dense_dim;
    root["encoder_layers"] = config.encoder_layers;
    root["encoder_heads"] = config.encoder_heads;
    root["encoder_hidden"] = config.encoder_hidden;
    root["encoder_ff"] = config.encoder_ff;
    root["train"] = {
        {"epochs", config.train.epochs},
        {"batch_size", config.train.batch_size},
        {"lr", config.train.lr},
        {"early_stop_patience", config.train.early_stop_patience},
        {"early_stop_metric",
         config.train.early_stop_metric == models::EarlyStopMetric::ValAccuracy ? "val_accuracy"
                                                                                : "val_loss"},
        {"val_fraction", config.train.val_fraction},
    };
    root["threshold"] = config.threshold;
    return root.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// pipeline

FeatureState fit_features(const RunConfig& config, const corpus::Corpus& train) {
    FeatureState state;
    state.route = config.feature_route;
    state.max_len = config.resolved_max_len();
    if (config.feature_route == "tfidf") {
        state.vocab = textproc::build_vocab(train, config.normalization,
                                            {config.ngram_low, config.ngram_high},
                                            config.vocab_max_features);
        state.tfidf = features::fit_tfidf(train, state.vocab, config.normalization,
                                          {config.ngram_low, config.ngram_high});
    } else if (config.feature_route == "static_word") {
        state.table = features::load_embeddings_text(config.embeddings_path, config.embedding_dim);
    } else if (config.feature_route == "subword") {
        state.subword = features::SubwordEmbeddingTable::random(
            derive_seed(config.seed, "subword-table"), config.embedding_dim, config.subword_buckets,
            config.subword_ngram_low, config.subword_ngram_high);
    } else if (config.feature_route == "encoder") {
        // token ids need unigram terms
        state.vocab = textproc::build_vocab(train, config.normalization, {1, 1},
                                            config.vocab_max_features);
    } else {
        throw std::runtime_error("fit_features: unknown route " + config.feature_route);
    }
    return state;
}

models::Dataset make_dataset(const RunConfig& config, const FeatureState& state,
                             const corpus::Corpus& corpus) {
    std::vector<textproc::TokenSequence> docs;
    docs.reserve(corpus.size());
    for (const auto& post : corpus.posts) {
        docs.push_back(textproc::tokenize(textproc::normalize(post.text, config.normalization)));
    }

    if (state.route == "tfidf") {
        std::vector<features::SparseVector> rows;
        rows.reserve(docs.size());
        for (const auto& doc : docs) {
            rows.push_back(features::transform_tfidf(state.tfidf, doc,
                                                     {config.ngram_low, config.ngram_high}));
        }
        return models::densify(rows, corpus.labels());
    }
    if (state.route == "static_word") {
        features::TableEmbedder embedder(state.table);
        models::SequenceData data;
        data.batch = features::encode_batch(docs, embedder, state.max_len, config.embedding_dim);
        data.labels = corpus.labels();
        return data;
    }
    if (state.route == "subword") {
        features::SubwordEmbedder embedder(state.subword);
        models::SequenceData data;
        data.batch = features::encode_batch(docs, embedder, state.max_len, config.embedding_dim);
        data.labels = corpus.labels();
        return data;
    }
    if (state.route == "encoder") {
        models::TokenData data;
        data.ids.reserve(docs.size());
        for (const auto& doc : docs) {
            std::vector<std::size_t> ids;
            for (const auto& token : doc.tokens) {
                if (ids.size() == state.max_len) break;
                std::size_t v = state.vocab.index_of(token);
                ids.push_back(v == textproc::Vocabulary::npos ? FeatureState::kUnkId : v + 2);
            }
            if (ids.empty()) ids.push_back(FeatureState::kUnkId);  // empty docs become one UNK
            data.ids.push_back(std::move(ids));
        }
        data.labels = corpus.labels();
        return data;
    }
    throw std::runtime_error("make_dataset: unknown route " + state.route);
}

namespace {

models::EncoderConfig encoder_config_for(const RunConfig& config, const FeatureState& state) {
    models::EncoderConfig ec;
    ec.n_layers = config.encoder_layers;
    ec.n_heads = config.encoder_heads;
    ec.hidden_dim = config.encoder_hidden;
    ec.ff_dim = config.encoder_ff;
    ec.max_positions = state.max_len + 2;
    ec.vocab_size = state.vocab.size() + 2;  // CLS and UNK ids
    ec.cls_index = FeatureState::kClsId;
    return ec;
}

}  // namespace

std::unique_ptr<models::Classifier> build_model(const RunConfig& config, const FeatureState& state) {
    std::uint64_t seed = derive_seed(config.seed, "model-init");
    if (config.model_kind == "logistic") {
        return std::make_unique<models::LogisticModel>(state.vocab.size(), seed);
    }
    if (config.model_kind == "lstm" || config.model_kind == "bilstm") {
        auto kind = config.model_kind == "lstm" ? models::RecurrentKind::Lstm
                                                : models::RecurrentKind::Bilstm;
        std::size_t input_dim = state.route == "static_word" ? state.table.dim : state.subword.dim;
        return std::make_unique<models::RecurrentClassifier>(kind, input_dim, config.hidden_dim,
                                                             config.dense_dim, seed);
    }
    if (config.model_kind == "encoder_only") {
        return std::make_unique<models::EncoderClassifier>(encoder_config_for(config, state),
                                                           config.dense_dim, seed);
    }
    if (config.model_kind == "hybrid_lstm" || config.model_kind == "hybrid_bilstm") {
        auto kind = config.model_kind == "hybrid_lstm" ? models::RecurrentKind::Lstm
                                                       : models::RecurrentKind::Bilstm;
        return std::make_unique<models::HybridClassifier>(encoder_config_for(config, state), kind,
                                                          config.hidden_dim, config.dense_dim, seed);
    }
    throw std::runtime_error("build_model: unknown model_kind " + config.model_kind);
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr const char* kCkptMagic = "textguard-ckpt 1";

std::vector<models::ParamRef> feature_param_refs(FeatureState& state) {
    std::vector<models::ParamRef> refs;
    if (state.route == "static_word") {
        refs.push_back({"feature.matrix", &state.table.matrix});
    } else if (state.route == "subword") {
        refs.push_back({"feature.buckets", &state.subword.buckets});
        if (!state.subword.word_to_row.empty()) {
            refs.push_back({"feature.words", &state.subword.words});
        }
    }
    return refs;
}

json vocab_to_json(const textproc::Vocabulary& vocab) {
    json terms = json::array();
    for (const auto& t : vocab.terms) terms.push_back(t);
    return terms;
}

textproc::Vocabulary vocab_from_json(const json& terms) {
    textproc::Vocabulary vocab;
    for (const auto& t : terms) {
        vocab.term_to_index[t.get<std::string>()] = vocab.terms.size();
        vocab.terms.push_back(t.get<std::string>());
    }
    vocab.max_features = vocab.terms.size();
    return vocab;
}

}  // namespace

void save_checkpoint(const std::string& path, const RunConfig& config, const FeatureState& state,
                     models::Classifier& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);

    json meta;
    meta["config"] = json::parse(config_to_text(config));
    json feature;
    feature["route"] = state.route;
    feature["max_len"] = state.max_len;
    if (state.route == "tfidf") {
        feature["vocab"] = vocab_to_json(state.vocab);
        feature["df"] = state.tfidf.df;
        feature["n_docs"] = state.tfidf.n_docs;
        feature["l2"] = state.tfidf.l2_normalize;
    } else if (state.route == "static_word") {
        json words = json::array();
        std::vector<std::string> ordered(state.table.word_to_row.size());
        for (const auto& [word, row] : state.table.word_to_row) ordered[row] = word;
        for (const auto& w : ordered) words.push_back(w);
        feature["words"] = words;
        feature["dim"] = state.table.dim;
    } else if (state.route == "subword") {
        feature["dim"] = state.subword.dim;
        feature["bucket_count"] = state.subword.bucket_count;
        feature["n_low"] = state.subword.n_low;
        feature["n_high"] = state.subword.n_high;
        json words = json::array();
        std::vector<std::string> ordered(state.subword.word_to_row.size());
        for (const auto& [word, row] : state.subword.word_to_row) ordered[row] = word;
        for (const auto& w : ordered) words.push_back(w);
        feature["words"] = words;
    } else if (state.route == "encoder") {
        feature["vocab"] = vocab_to_json(state.vocab);
    }
    meta["feature"] = feature;

    out << kCkptMagic << '\n';
    out << meta.dump() << '\n';

    FeatureState& mstate = const_cast<FeatureState&>(state);
    std::vector<models::ParamRef> refs = feature_param_refs(mstate);
    for (auto& p : model.parameters()) refs.push_back({"model." + p.name, p.tensor});
    models::save_params(out, refs);
}

LoadedRun load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: no such file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kCkptMagic) {
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    }
    if (!std::getline(in, line)) throw std::runtime_error("load_checkpoint: missing metadata");
    json meta = json::parse(line);

    LoadedRun run;
    run.config = parse_config_text(meta.at("config").dump());
    const json& feature = meta.at("feature");
    FeatureState& state = run.features;
    state.route = feature.at("route").get<std::string>();
    state.max_len = feature.at("max_len").get<std::size_t>();

    if (state.route == "tfidf") {
        state.vocab = vocab_from_json(feature.at("vocab"));
        state.tfidf.vocab = state.vocab;
        state.tfidf.df = feature.at("df").get<std::vector<std::size_t>>();
        state.tfidf.n_docs = feature.at("n_docs").get<std::size_t>();
        state.tfidf.l2_normalize = feature.at("l2").get<bool>();
        state.tfidf.idf.resize(state.tfidf.df.size());
        for (std::size_t t = 0; t < state.tfidf.df.size(); ++t) {
            state.tfidf.idf[t] = std::log(static_cast<double>(state.tfidf.n_docs) /
                                          static_cast<double>(state.tfidf.df[t])) +
                                 1.0;
        }
    } else if (state.route == "static_word") {
        state.table.dim = feature.at("dim").get<std::size_t>();
        auto words = feature.at("words").get<std::vector<std::string>>();
        for (std::size_t r = 0; r < words.size(); ++r) state.table.word_to_row[words[r]] = r;
        state.table.matrix =
            numeric::Tensor({std::max<std::size_t>(words.size(), 1), state.table.dim});
    } else if (state.route == "subword") {
        state.subword.dim = feature.at("dim").get<std::size_t>();
        state.subword.bucket_count = feature.at("bucket_count").get<std::size_t>();
        state.subword.n_low = feature.at("n_low").get<std::size_t>();
        state.subword.n_high = feature.at("n_high").get<std::size_t>();
        auto words = feature.at("words").get<std::vector<std::string>>();
        for (std::size_t r = 0; r < words.size(); ++r) state.subword.word_to_row[words[r]] = r;
        state.subword.buckets = numeric::Tensor({state.subword.bucket_count, state.subword.dim});
        state.subword.words =
            numeric::Tensor({std::max<std::size_t>(words.size(), 1), state.subword.dim});
    } else if (state.route == "encoder") {
        state.vocab = vocab_from_json(feature.at("vocab"));
    }

    run.model = build_model(run.config, state);
    std::vector<models::ParamRef> refs = feature_param_refs(state);
    for (auto& p : run.model->parameters()) refs.push_back({"model." + p.name, p.tensor});
    models::load_params(in, refs);
    return run;
}

// ---------------------------------------------------------------------------
// training runs

namespace {

json metrics_kv(const eval::MetricsReport& report, const eval::RocCurve& roc, bool roc_valid,
                const models::TrainReport& train_report) {
    json kv;
    kv["accuracy"] = report.accuracy;
    kv["precision_0"] = report.class0.precision;
    kv["recall_0"] = report.class0.recall;
    kv["f1_0"] = report.class0.f1;
    kv["support_0"] = report.class0.support;
    kv["precision_1"] = report.class1.precision;
    kv["recall_1"] = report.class1.recall;
    kv["f1_1"] = report.class1.f1;
    kv["support_1"] = report.class1.support;
    kv["macro_precision"] = report.macro_avg.precision;
    kv["macro_recall"] = report.macro_avg.recall;
    kv["macro_f1"] = report.macro_avg.f1;
    kv["weighted_precision"] = report.weighted_avg.precision;
    kv["weighted_recall"] = report.weighted_avg.recall;
    kv["weighted_f1"] = report.weighted_avg.f1;
    if (roc_valid) kv["auc"] = roc.auc;
    kv["stopped_epoch"] = train_report.stopped_epoch;
    kv["best_epoch"] = train_report.best_epoch;
    return kv;
}

}  // namespace

RunResult run_training(const RunConfig& config) {
    config.validate();
    corpus::Corpus data = corpus::load_csv(config.corpus_path);
    corpus::SplitSpec spec{config.train_fraction, config.seed, config.shuffle_split};
    corpus::SplitResult parts = corpus::split(data, spec);

    FeatureState state = fit_features(config, parts.train);
    models::Dataset train_data = make_dataset(config, state, parts.train);
    models::Dataset test_data = make_dataset(config, state, parts.test);
    auto model = build_model(config, state);

    models::TrainConfig tc = config.train;
    tc.seed = config.seed;
    RunResult result;
    result.train_report = models::train(*model, train_data, tc);

    models::Predictions preds = models::predict(*model, test_data, config.threshold);
    const auto& truth = models::dataset_labels(test_data);
    result.test_report = eval::classification_report(preds.labels, truth);

    bool has_pos = false, has_neg = false;
    for (int t : truth) (t == 1 ? has_pos : has_neg) = true;
    bool roc_valid = has_pos && has_neg;
    if (roc_valid) result.roc = eval::roc_auc(preds.probabilities, truth);

    if (!config.output_dir.empty()) {
        fs::create_directories(config.output_dir);
        result.output_dir = config.output_dir;
        {
            std::ofstream out(config.output_dir + "/config.json");
            out << config_to_text(config);
        }
        {
            std::ofstream out(config.output_dir + "/metrics.txt");
            out << eval::format_report(result.test_report);
            if (roc_valid) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "\nAUC: %.4f\n", result.roc.auc);
                out << buf;
            }
        }
        {
            std::ofstream out(config.output_dir + "/metrics.kv");
            out << metrics_kv(result.test_report, result.roc, roc_valid, result.train_report).dump(2)
                << '\n';
        }
        eval::emit_curves(result.train_report, config.output_dir + "/curves.csv");
        save_checkpoint(config.output_dir + "/model.ckpt", config, state, *model);
    }
    return result;
}

std::string GridSummary::format() const {
    std::string out =
        "Model                              Recall (%)  Precision (%)  F1-score (%)  Accuracy (%)\n";
    char line[160];
    for (const auto& cell : cells) {
        std::string name = cell.model + "+" + cell.route;
        std::snprintf(line, sizeof line, "%-34s %10.1f %14.1f %13.1f %13.1f\n", name.c_str(),
                      cell.recall * 100.0, cell.precision * 100.0, cell.f1 * 100.0,
                      cell.accuracy * 100.0);
        out += line;
    }
    return out;
}

GridSummary experiment_grid(const RunConfig& base, const std::vector<std::string>& routes,
                            const std::vector<std::string>& model_kinds) {
    std::vector<RunConfig> cells;
    for (const auto& route : routes) {
        for (const auto& model : model_kinds) {
            RunConfig cfg = base;
            cfg.feature_route = route;
            cfg.model_kind = model;
            if (!base.output_dir.empty()) {
                cfg.output_dir = base.output_dir + "/" + route + "_" + model;
            }
            cfg.validate();  // any invalid combination aborts before training starts
            cells.push_back(std::move(cfg));
        }
    }

    GridSummary summary;
    for (const auto& cfg : cells) {
        RunResult r = run_training(cfg);
        GridCell cell;
        cell.route = cfg.feature_route;
        cell.model = cfg.model_kind;
        cell.recall = r.test_report.class1.recall;
        cell.precision = r.test_report.class1.precision;
        cell.f1 = r.test_report.class1.f1;
        cell.accuracy = r.test_report.accuracy;
        summary.cells.push_back(cell);
    }
    return summary;
}

// ---------------------------------------------------------------------------
// subcommands

namespace {

std::vector<int> load_label_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("no such file: " + path);
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line == "0") {
            labels.push_back(0);
        } else if (line == "1") {
            labels.push_back(1);
        } else {
            throw std::runtime_error("label file " + path + ": expected 0 or 1, got \"" + line + "\"");
        }
    }
    return labels;
}

void apply_override(RunConfig& cfg, const std::string& corpus_path,
                    const std::optional<std::uint64_t>& seed, const std::string& out_dir) {
    if (!corpus_path.empty()) cfg.corpus_path = corpus_path;
    if (seed) {
        cfg.seed = *seed;
        cfg.train.seed = *seed;
    }
    if (!out_dir.empty()) cfg.output_dir = out_dir;
}

int cmd_synth(std::uint64_t seed, std::size_t n, double fraction, const std::string& out_path) {
    corpus::Corpus corpus = corpus::synth_corpus(seed, n, fraction);
    corpus::save_csv(corpus, out_path);
    std::cout << "wrote " << corpus.size() << " posts to " << out_path << "\n";
    return 0;
}

int cmd_kappa(const std::string& path_a, const std::string& path_b) {
    corpus::AnnotationPair pair{load_label_file(path_a), load_label_file(path_b)};
    corpus::KappaResult r = corpus::cohen_kappa(pair);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "kappa %.4f\nobserved_agreement %.4f\nexpected_agreement %.4f\nn_items %zu\n",
                  r.kappa, r.observed_agreement, r.expected_agreement, r.n_items);
    std::cout << buf;
    return 0;
}

int cmd_featurize(const std::string& config_path, const std::string& out_dir) {
    RunConfig cfg = load_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (cfg.output_dir.empty()) throw std::runtime_error("featurize: no output directory configured");
    cfg.validate();
    corpus::Corpus data = corpus::load_csv(cfg.corpus_path);
    FeatureState state = fit_features(cfg, data);
    fs::create_directories(cfg.output_dir);

    if (state.route == "tfidf" || state.route == "encoder") {
        textproc::save_vocab(state.vocab, cfg.output_dir + "/vocab.tsv");
        std::cout << "vocab: " << state.vocab.size() << " terms -> " << cfg.output_dir
                  << "/vocab.tsv\n";
    }
    if (state.route == "tfidf") {
        std::ofstream out(cfg.output_dir + "/idf.txt");
        numeric::Tensor idf = numeric::Tensor::vector(state.tfidf.idf);
        idf.write_text(out);
        std::cout << "idf vector -> " << cfg.output_dir << "/idf.txt\n";
    }
    if (state.route == "static_word") {
        textproc::Vocabulary vocab =
            textproc::build_vocab(data, cfg.normalization, {1, 1}, cfg.vocab_max_features);
        textproc::save_vocab(vocab, cfg.output_dir + "/vocab.tsv");
        numeric::Tensor matrix = features::embedding_matrix(state.table, vocab);
        std::ofstream out(cfg.output_dir + "/matrix.txt");
        matrix.write_text(out);
        std::cout << "embedding matrix " << matrix.rows() << "x" << matrix.cols() << " -> "
                  << cfg.output_dir << "/matrix.txt\n";
    }
    if (state.route == "subword") {
        state.subword.save(cfg.output_dir + "/subword.table");
        std::cout << "subword table (" << state.subword.bucket_count << " buckets, dim "
                  << state.subword.dim << ") -> " << cfg.output_dir << "/subword.table\n";
    }
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& corpus_path,
              const std::optional<std::uint64_t>& seed, const std::string& out_dir) {
    RunConfig cfg = load_config(config_path);
    apply_override(cfg, corpus_path, seed, out_dir);
    RunResult result = run_training(cfg);
    std::cout << eval::format_report(result.test_report);
    char buf[160];
    if (!result.roc.points.empty()) {
        std::snprintf(buf, sizeof buf, "\nAUC: %.4f\n", result.roc.auc);
        std::cout << buf;
    }
    std::snprintf(buf, sizeof buf, "epochs run: %zu (best %zu), wall %.1fs\n",
                  result.train_report.stopped_epoch, result.train_report.best_epoch,
                  result.train_report.wall_seconds);
    std::cout << buf;
    if (!result.output_dir.empty()) std::cout << "outputs in " << result.output_dir << "\n";
    return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& corpus_path, double threshold) {
    LoadedRun run = load_checkpoint(ckpt_path);
    corpus::Corpus data = corpus::load_csv(corpus_path);
    models::Dataset dataset = make_dataset(run.config, run.features, data);
    models::Predictions preds = models::predict(*run.model, dataset, threshold);
    const auto& truth = models::dataset_labels(dataset);
    eval::MetricsReport report = eval::classification_report(preds.labels, truth);
    std::cout << eval::format_report(report);
    bool has_pos = false, has_neg = false;
    for (int t : truth) (t == 1 ? has_pos : has_neg) = true;
    if (has_pos && has_neg) {
        eval::RocCurve roc = eval::roc_auc(preds.probabilities, truth);
        char buf[64];
        std::snprintf(buf, sizeof buf, "\nAUC: %.4f\n", roc.auc);
        std::cout << buf;
    }
    return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& in_path,
                const std::string& out_path, double threshold) {
    LoadedRun run = load_checkpoint(ckpt_path);
    std::ifstream in(in_path);
    if (!in) throw std::runtime_error("predict: no such file: " + in_path);

    corpus::Corpus data;
    data.source = in_path;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        data.posts.push_back({line, 0});
    }
    if (data.empty()) throw std::runtime_error("predict: no input texts in " + in_path);

    models::Dataset dataset = make_dataset(run.config, run.features, data);
    models::Predictions preds = models::predict(*run.model, dataset, threshold);

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw std::runtime_error("predict: cannot write " + out_path);
        out = &file;
    }
    char buf[64];
    for (std::size_t i = 0; i < preds.labels.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.6f,%d\n", preds.probabilities[i], preds.labels[i]);
        *out << buf;
    }
    if (!out_path.empty()) std::cout << "wrote " << preds.labels.size() << " predictions to "
                                     << out_path << "\n";
    return 0;
}

int cmd_check_table4(const std::string& fixture_path) {
    std::vector<eval::Table4Row> rows =
        fixture_path.empty() ? eval::table4_rows() : eval::load_table4_csv(fixture_path);
    auto checks = eval::table4_consistency(rows);
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-26s %-12s %9s %11s %9s  %s\n", "model", "group", "f1",
                  "recomputed", "delta", "flag");
    std::cout << buf;
    std::size_t flagged = 0;
    for (const auto& c : checks) {
        std::snprintf(buf, sizeof buf, "%-26s %-12s %9.1f %11.3f %9.3f  %s\n", c.row.name.c_str(),
                      c.row.group.c_str(), c.row.f1, c.recomputed_f1, c.deviation,
                      c.flagged ? "INCONSISTENT" : "ok");
        std::cout << buf;
        if (c.flagged) ++flagged;
    }
    std::snprintf(buf, sizeof buf, "%zu of %zu rows deviate from the harmonic-mean identity\n",
                  flagged, checks.size());
    std::cout << buf;
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"textguard: Arabic cyberbullying detection pipeline"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus CSV");
    std::uint64_t synth_seed = env_seed().value_or(42);
    std::size_t synth_n = 200;
    double synth_fraction = 0.5;
    std::string synth_out;
    synth->add_option("--seed", synth_seed, "PRNG seed");
    synth->add_option("--n", synth_n, "number of posts")->required();
    synth->add_option("--fraction", synth_fraction, "bullying fraction in (0,1)");
    synth->add_option("--out", synth_out, "output CSV path")->required();

    // kappa
    auto* kappa = app.add_subcommand("kappa", "inter-annotator agreement of two label files");
    std::string kappa_a, kappa_b;
    kappa->add_option("--a", kappa_a, "first annotator labels, one 0/1 per line")->required();
    kappa->add_option("--b", kappa_b, "second annotator labels, one 0/1 per line")->required();

    // featurize
    auto* featurize = app.add_subcommand("featurize", "fit the feature route and write artifacts");
    std::string feat_config, feat_out;
    featurize->add_option("--config", feat_config, "run config JSON")->required();
    featurize->add_option("--out", feat_out, "output directory (overrides config)");

    // train
    auto* train = app.add_subcommand("train", "train a model per the run config");
    std::string train_config, train_corpus, train_out;
    std::optional<std::uint64_t> train_seed;
    train->add_option("--config", train_config, "run config JSON")->required();
    train->add_option("--corpus", train_corpus, "corpus CSV (overrides config)");
    train->add_option("--seed", train_seed, "seed (overrides config)");
    train->add_option("--out", train_out, "output directory (overrides config)");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a labeled corpus");
    std::string eval_ckpt, eval_corpus;
    double eval_threshold = 0.5;
    evaluate->add_option("--checkpoint", eval_ckpt, "model.ckpt path")->required();
    evaluate->add_option("--corpus", eval_corpus, "corpus CSV")->required();
    evaluate->add_option("--threshold", eval_threshold, "decision threshold");

    // predict
    auto* predict = app.add_subcommand("predict", "score raw texts with a checkpoint");
    std::string pred_ckpt, pred_in, pred_out;
    double pred_threshold = 0.5;
    predict->add_option("--checkpoint", pred_ckpt, "model.ckpt path")->required();
    predict->add_option("--in", pred_in, "input texts, one per line")->required();
    predict->add_option("--out", pred_out, "output path (default stdout)");
    predict->add_option("--threshold", pred_threshold, "decision threshold");

    // check-table4
    auto* table4 = app.add_subcommand("check-table4",
                                      "recompute published F1 scores from recall and precision");
    std::string table4_fixture;
    table4->add_option("--fixture", table4_fixture, "fixture CSV (default: built-in rows)");

    std::vector<const char*> argv;
    argv.push_back("textguard");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_seed, synth_n, synth_fraction, synth_out);
        if (kappa->parsed()) return cmd_kappa(kappa_a, kappa_b);
        if (featurize->parsed()) return cmd_featurize(feat_config, feat_out);
        if (train->parsed()) return cmd_train(train_config, train_corpus, train_seed, train_out);
        if (evaluate->parsed()) return cmd_evaluate(eval_ckpt, eval_corpus, eval_threshold);
        if (predict->parsed()) return cmd_predict(pred_ckpt, pred_in, pred_out, pred_threshold);
        if (table4->parsed()) return cmd_check_table4(table4_fixture);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::cerr << "no subcommand given\n";
    return 1;
}

}  // namespace textguard::cli
