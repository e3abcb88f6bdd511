#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "textguard/autodiff.hpp"
#include "textguard/features.hpp"
#include "textguard/numeric.hpp"
#include "textguard/tensor.hpp"

namespace textguard::models {

using autodiff::Tape;
using autodiff::Var;
using numeric::Tensor;

// ---------------------------------------------------------------------------
// parameter containers

/// Gate parameters for one LSTM direction. Weight rows are hidden-major:
/// W_* is (hidden x input_dim), U_* is (hidden x hidden), b_* is (hidden).
struct LSTMParams {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    Tensor w_input, w_forget, w_output, w_cand;
    Tensor u_input, u_forget, u_output, u_cand;
    Tensor b_input, b_forget, b_output, b_cand;

    static LSTMParams init(std::size_t input_dim, std::size_t hidden_dim, numeric::Prng& prng);
    static LSTMParams zeros(std::size_t input_dim, std::size_t hidden_dim);
};

struct LSTMState {
    Tensor h;
    Tensor c;
    static LSTMState zero(std::size_t hidden_dim);
};

/// Two LSTMs over the same sequence, one reversed; outputs concatenate
/// to 2 x hidden.
struct BiLSTMParams {
    LSTMParams forward;
    LSTMParams backward;
    static BiLSTMParams init(std::size_t input_dim, std::size_t hidden_dim, numeric::Prng& prng);
};

struct EncoderConfig {
    std::size_t n_layers = 2;
    std::size_t n_heads = 2;
    std::size_t hidden_dim = 32;
    std::size_t ff_dim = 64;
    std::size_t max_positions = 128;
    std::size_t vocab_size = 0;
    std::size_t cls_index = 0;

    void validate() const;
};

struct EncoderLayerParams {
    Tensor wq, wk, wv, wo;      // (hidden x hidden)
    Tensor ff1_w, ff1_b;        // (hidden x ff), (ff)
    Tensor ff2_w, ff2_b;        // (ff x hidden), (hidden)
    Tensor ln1_gain, ln1_bias;  // (hidden)
    Tensor ln2_gain, ln2_bias;
};

struct EncoderParams {
    Tensor token_embedding;     // (vocab_size x hidden)
    Tensor position_embedding;  // (max_positions x hidden)
    std::vector<EncoderLayerParams> layers;

    static EncoderParams init(const EncoderConfig& cfg, numeric::Prng& prng);
};

/// dense (ReLU) layer followed by a scalar sigmoid output.
struct DenseHead {
    Tensor dense_w;  // (input x dense_dim)
    Tensor dense_b;  // (dense_dim)
    Tensor out_w;    // (dense_dim x 1)
    Tensor out_b;    // (1)

    static DenseHead init(std::size_t input_dim, std::size_t dense_dim, numeric::Prng& prng);
};

// ---------------------------------------------------------------------------
// graph builders (shared by the public forwards and the trainer)

struct LstmStepVars {
    Var h;
    Var c;
};

/// Parameter nodes for one LSTM direction on a tape, transposed once so
/// steps can right-multiply.
struct LstmVars {
    Var wt_i, wt_f, wt_o, wt_c;  // (input x hidden)
    Var ut_i, ut_f, ut_o, ut_c;  // (hidden x hidden)
    Var b_i, b_f, b_o, b_c;
};

LstmVars bind_lstm(Tape& tape, LSTMParams& p);

/// One cell step over a (batch x input) node. step_mask has one entry
/// per batch row; masked rows pass state through unchanged.
LstmStepVars lstm_step(Tape& tape, const LstmVars& lv, Var x_t, LstmStepVars prev,
                       const Tensor& step_mask);

/// Runs a whole sequence; x_steps[t] is (batch x input) and
/// step_masks[t] is (batch). Returns the final state node and, when
/// all_h is non-null, every step's h node.
Var lstm_sequence(Tape& tape, LSTMParams& p, const std::vector<Var>& x_steps,
                  const std::vector<Tensor>& step_masks, std::vector<Var>* all_h = nullptr);

/// Attention weights captured per layer and head, for inspection.
struct EncoderProbe {
    std::vector<std::vector<Tensor>> attention;  // [layer][head], (S x S)
};

/// Multi-head self-attention + residual/layer-norm, then GELU
/// feed-forward + residual/layer-norm (post-norm). key_mask has one
/// entry per position; masked keys receive exactly zero weight.
Var encoder_layer_graph(Tape& tape, Var x, EncoderLayerParams& lp, std::size_t n_heads,
                        const Tensor& key_mask, std::vector<Tensor>* attention_out = nullptr);

/// Full encoder over ids (CLS already prepended); returns the
/// (S x hidden) node of final hidden states.
Var encoder_graph(Tape& tape, const EncoderConfig& cfg, EncoderParams& p,
                  const std::vector<std::size_t>& ids_with_cls,
                  const std::vector<double>& mask_with_cls, EncoderProbe* probe = nullptr);

/// features (batch x in) -> dense+ReLU -> sigmoid, as (batch x 1).
Var dense_head_graph(Tape& tape, DenseHead& head, Var features);

// ---------------------------------------------------------------------------
// public forwards

LSTMState lstm_cell_forward(const LSTMParams& p, const std::vector<double>& x, const LSTMState& s);

struct LstmForwardResult {
    Tensor final_h;  // (batch x hidden)
    Tensor all_h;    // (batch x len x hidden); masked steps carry the passed-through state
};

LstmForwardResult lstm_forward(const LSTMParams& p, const features::SequenceBatch& batch);

/// concat(final state of the forward pass, final state of the backward
/// pass over each row's reversed unpadded prefix): (batch x 2*hidden).
Tensor bilstm_forward(const BiLSTMParams& p, const features::SequenceBatch& batch);

/// Reverses each row's unpadded prefix in place (pads stay right).
features::SequenceBatch reverse_sequences(const features::SequenceBatch& batch);

/// token_ids/mask without CLS; CLS is prepended internally. Returns
/// ((len+1) x hidden) final hidden states.
Tensor encoder_forward(const EncoderConfig& cfg, const EncoderParams& p,
                       const std::vector<std::size_t>& token_ids, const std::vector<double>& mask,
                       EncoderProbe* probe = nullptr);

// ---------------------------------------------------------------------------
// datasets and classifiers

struct DenseData {
    Tensor rows;  // (n x features)
    std::vector<int> labels;
};

struct SequenceData {
    features::SequenceBatch batch;
    std::vector<int> labels;
};

struct TokenData {
    std::vector<std::vector<std::size_t>> ids;  // per example, truncated, no CLS
    std::vector<int> labels;
};

using Dataset = std::variant<DenseData, SequenceData, TokenData>;

std::size_t dataset_size(const Dataset& data);
const std::vector<int>& dataset_labels(const Dataset& data);
DenseData densify(const std::vector<features::SparseVector>& rows, std::vector<int> labels);

struct ParamRef {
    std::string name;
    Tensor* tensor;
};

class Classifier {
public:
    virtual ~Classifier() = default;
    virtual std::string kind() const = 0;
    virtual std::vector<ParamRef> parameters() = 0;
    /// Builds the probability column (|idx| x 1) for the chosen examples.
    virtual Var build_probs(Tape& tape, const Dataset& data, const std::vector<std::size_t>& idx) = 0;

    std::vector<double> predict_probs(const Dataset& data, const std::vector<std::size_t>& idx);
    std::vector<double> predict_probs(const Dataset& data);
};

class LogisticModel : public Classifier {
public:
    LogisticModel(std::size_t n_features, std::uint64_t seed);
    std::string kind() const override { return "logistic"; }
    std::vector<ParamRef> parameters() override;
    Var build_probs(Tape& tape, const Dataset& data, const std::vector<std::size_t>& idx) override;

    Tensor weights;  // (features x 1)
    Tensor bias;     // (1)
};

enum class RecurrentKind { Lstm, Bilstm };

class RecurrentClassifier : public Classifier {
public:
    RecurrentClassifier(RecurrentKind kind, std::size_t input_dim, std::size_t hidden_dim,
                        std::size_t dense_dim, std::uint64_t seed);
    std::string kind() const override;
    std::vector<ParamRef> parameters() override;
    Var build_probs(Tape& tape, const Dataset& data, const std::vector<std::size_t>& idx) override;

    RecurrentKind recurrent_kind;
    LSTMParams fwd;
    LSTMParams bwd;  // unused for plain LSTM
    DenseHead head;
};

class EncoderClassifier : public Classifier {
public:
    EncoderClassifier(const EncoderConfig& cfg, std::size_t dense_dim, std::uint64_t seed);
    std::string kind() const override { return "encoder_only"; }
    std::vector<ParamRef> parameters() override;
    Var build_probs(Tape& tape, const Dataset& data, const std::vector<std::size_t>& idx) override;

    /// CLS-vector head on one sequence.
    double forward(const std::vector<std::size_t>& token_ids, const std::vector<double>& mask);

    EncoderConfig config;
    EncoderParams params;
    DenseHead head;
};

/// BERT-style encoder feeding a recurrent head over the per-token
/// hidden states (CLS excluded by default).
class HybridClassifier : public Classifier {
public:
    HybridClassifier(const EncoderConfig& cfg, RecurrentKind head_kind, std::size_t hidden_dim,
                     std::size_t dense_dim, std::uint64_t seed);
    std::string kind() const override;
    std::vector<ParamRef> parameters() override;
    Var build_probs(Tape& tape, const Dataset& data, const std::vector<std::size_t>& idx) override;

    double forward(const std::vector<std::size_t>& token_ids, const std::vector<double>& mask);
    Var example_graph(Tape& tape, const std::vector<std::size_t>& token_ids,
                      const std::vector<double>& mask);

    EncoderConfig config;
    EncoderParams encoder;
    RecurrentKind head_kind;
    LSTMParams fwd;
    LSTMParams bwd;
    DenseHead head;
    bool feed_cls = false;  // flag: include the CLS row in the head input
};

double hybrid_forward(HybridClassifier& model, const std::vector<std::size_t>& token_ids,
                      const std::vector<double>& mask);

std::vector<double> deep_forward(RecurrentClassifier& model, const features::SequenceBatch& batch);

// ---------------------------------------------------------------------------
// training

enum class EarlyStopMetric { ValAccuracy, ValLoss };

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    std::size_t early_stop_patience = 3;  // 0 disables early stopping
    EarlyStopMetric early_stop_metric = EarlyStopMetric::ValAccuracy;
    std::uint64_t seed = 42;
    double val_fraction = 0.1;
};

struct EpochRecord {
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t stopped_epoch = 0;  // == epochs.size()
    std::size_t best_epoch = 0;
    double wall_seconds = 0.0;
};

/// Mini-batch Adam on BCE. A val slice of val_fraction is carved from
/// the shuffled data; early stopping watches the configured metric and
/// restores the best epoch's parameters. Fully deterministic per seed.
TrainReport train(Classifier& model, const Dataset& data, const TrainConfig& config);

/// Mean loss and accuracy (threshold 0.5) over the chosen examples.
std::pair<double, double> evaluate(Classifier& model, const Dataset& data,
                                   const std::vector<std::size_t>& idx, std::size_t batch_size = 64);

struct Predictions {
    std::vector<double> probabilities;
    std::vector<int> labels;
};

/// label = 1 iff probability >= threshold (ties go to class 1).
Predictions predict(Classifier& model, const Dataset& docs, double threshold = 0.5);

std::unique_ptr<LogisticModel> train_logistic_baseline(const std::vector<features::SparseVector>& rows,
                                                       const std::vector<int>& labels,
                                                       const TrainConfig& config,
                                                       TrainReport* report = nullptr);

// checkpoint building blocks: named tensors in fixed order
void save_params(std::ostream& out, const std::vector<ParamRef>& params);
void load_params(std::istream& in, const std::vector<ParamRef>& params);

}  // namespace textguard::models
