#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "textguard/corpus.hpp"
#include "textguard/eval.hpp"
#include "textguard/features.hpp"
#include "textguard/models.hpp"
#include "textguard/textproc.hpp"

namespace textguard::cli {

/// One experiment: a feature route paired with a model kind plus every
/// knob the pipeline needs. Route/model compatibility is enforced:
/// tfidf -> logistic, static_word/subword -> lstm/bilstm, encoder ->
/// encoder_only/hybrid_lstm/hybrid_bilstm.
struct RunConfig {
    std::string corpus_path;
    std::string feature_route = "subword";
    std::string model_kind = "bilstm";
    std::uint64_t seed = 42;
    std::string output_dir;
    std::string embeddings_path;  // static_word route

    textproc::NormalizationConfig normalization;
    std::size_t vocab_max_features = 100;
    std::size_t ngram_low = 1;
    std::size_t ngram_high = 2;
    std::size_t subword_ngram_low = 3;
    std::size_t subword_ngram_high = 6;
    std::size_t subword_buckets = 4096;
    std::size_t embedding_dim = 16;  // subword route vector width
    std::size_t max_len = 0;         // 0 = route default (90 subword, 100 otherwise)
    double train_fraction = 0.8;
    bool shuffle_split = true;

    std::size_t hidden_dim = 16;
    std::size_t dense_dim = 16;
    std::size_t encoder_layers = 2;
    std::size_t encoder_heads = 2;
    std::size_t encoder_hidden = 32;
    std::size_t encoder_ff = 64;

    models::TrainConfig train;
    double threshold = 0.5;

    std::size_t resolved_max_len() const;
    void validate() const;
};

/// Strict parse: unknown keys are errors, so config typos cannot
/// silently misconfigure an experiment.
RunConfig load_config(const std::string& path);
RunConfig parse_config_text(const std::string& text);
std::string config_to_text(const RunConfig& config);

/// Fitted feature-extraction state for one route.
struct FeatureState {
    std::string route;
    std::size_t max_len = 0;
    textproc::Vocabulary vocab;                  // tfidf + encoder routes
    features::TfidfModel tfidf;                  // tfidf route
    features::EmbeddingTable table;              // static_word route
    features::SubwordEmbeddingTable subword;     // subword route
    // encoder route token ids: 0 = CLS, 1 = UNK, vocab index + 2 otherwise
    static constexpr std::size_t kClsId = 0;
    static constexpr std::size_t kUnkId = 1;
};

FeatureState fit_features(const RunConfig& config, const corpus::Corpus& train);
models::Dataset make_dataset(const RunConfig& config, const FeatureState& state,
                             const corpus::Corpus& corpus);
std::unique_ptr<models::Classifier> build_model(const RunConfig& config, const FeatureState& state);

struct LoadedRun {
    RunConfig config;
    FeatureState features;
    std::unique_ptr<models::Classifier> model;
};

void save_checkpoint(const std::string& path, const RunConfig& config, const FeatureState& state,
                     models::Classifier& model);
LoadedRun load_checkpoint(const std::string& path);

/// Outcome of one trained run (the contents of its output directory).
struct RunResult {
    eval::MetricsReport test_report;
    eval::RocCurve roc;
    models::TrainReport train_report;
    std::string output_dir;
};

/// The full pipeline: load corpus, split, fit features on the train
/// side, train, evaluate on the test side, and (when output_dir is
/// set) write config.json, metrics.txt, metrics.kv, curves.csv and
/// model.ckpt into it.
RunResult run_training(const RunConfig& config);

struct GridCell {
    std::string route;
    std::string model;
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
};

struct GridSummary {
    std::vector<GridCell> cells;
    std::string format() const;  // Table-4-shaped, percentages at one decimal
};

/// Trains every route x model combination with the shared seed. All
/// combinations are validated before any training starts.
GridSummary experiment_grid(const RunConfig& base, const std::vector<std::string>& routes,
                            const std::vector<std::string>& model_kinds);

/// Subcommand dispatch; args excludes the program name. Exit codes:
/// 0 success, 1 usage error, 2 data/validation error.
int run(const std::vector<std::string>& args);

}  // namespace textguard::cli
