#include "textguard/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace textguard::models {

// ---------------------------------------------------------------------------
// parameter containers

LSTMParams LSTMParams::init(std::size_t input_dim, std::size_t hidden_dim, numeric::Prng& prng) {
    if (input_dim == 0 || hidden_dim == 0) throw std::invalid_argument("lstm: zero dimension");
    LSTMParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    for (Tensor* w : {&p.w_input, &p.w_forget, &p.w_output, &p.w_cand}) {
        *w = numeric::xavier_init({hidden_dim, input_dim}, prng);
    }
    for (Tensor* u : {&p.u_input, &p.u_forget, &p.u_output, &p.u_cand}) {
        *u = numeric::xavier_init({hidden_dim, hidden_dim}, prng);
    }
    for (Tensor* b : {&p.b_input, &p.b_forget, &p.b_output, &p.b_cand}) {
        *b = Tensor::zeros({hidden_dim});
    }
    // forget gate starts open so the cell can carry state early in training
    p.b_forget.fill(1.0);
    return p;
}

LSTMParams LSTMParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
    LSTMParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    for (Tensor* w : {&p.w_input, &p.w_forget, &p.w_output, &p.w_cand}) {
        *w = Tensor::zeros({hidden_dim, input_dim});
    }
    for (Tensor* u : {&p.u_input, &p.u_forget, &p.u_output, &p.u_cand}) {
        *u = Tensor::zeros({hidden_dim, hidden_dim});
    }
    for (Tensor* b : {&p.b_input, &p.b_forget, &p.b_output, &p.b_cand}) {
        *b = Tensor::zeros({hidden_dim});
    }
    return p;
}

LSTMState LSTMState::zero(std::size_t hidden_dim) {
    return {Tensor::zeros({hidden_dim}), Tensor::zeros({hidden_dim})};
}

BiLSTMParams BiLSTMParams::init(std::size_t input_dim, std::size_t hidden_dim, numeric::Prng& prng) {
    BiLSTMParams p;
    p.forward = LSTMParams::init(input_dim, hidden_dim, prng);
    p.backward = LSTMParams::init(input_dim, hidden_dim, prng);
    return p;
}

void EncoderConfig::validate() const {
    if (n_layers == 0 || n_heads == 0 || hidden_dim == 0 || ff_dim == 0) {
        throw std::invalid_argument("encoder config: zero dimension");
    }
    if (hidden_dim % n_heads != 0) {
        throw std::invalid_argument("encoder config: hidden_dim must be divisible by n_heads");
    }
    if (vocab_size == 0) throw std::invalid_argument("encoder config: vocab_size unset");
    if (cls_index >= vocab_size) throw std::invalid_argument("encoder config: cls_index out of range");
    if (max_positions < 2) throw std::invalid_argument("encoder config: max_positions too small");
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, numeric::Prng& prng) {
    cfg.validate();
    EncoderParams p;
    p.token_embedding = numeric::xavier_init({cfg.vocab_size, cfg.hidden_dim}, prng);
    p.position_embedding = numeric::xavier_init({cfg.max_positions, cfg.hidden_dim}, prng);
    p.layers.resize(cfg.n_layers);
    for (auto& layer : p.layers) {
        layer.wq = numeric::xavier_init({cfg.hidden_dim, cfg.hidden_dim}, prng);
        layer.wk = numeric::xavier_init({cfg.hidden_dim, cfg.hidden_dim}, prng);
        layer.wv = numeric::xavier_init({cfg.hidden_dim, cfg.hidden_dim}, prng);
        layer.wo = numeric::xavier_init({cfg.hidden_dim, cfg.hidden_dim}, prng);
        layer.ff1_w = numeric::xavier_init({cfg.hidden_dim, cfg.ff_dim}, prng);
        layer.ff1_b = Tensor::zeros({cfg.ff_dim});
        layer.ff2_w = numeric::xavier_init({cfg.ff_dim, cfg.hidden_dim}, prng);
        layer.ff2_b = Tensor::zeros({cfg.hidden_dim});
        layer.ln1_gain = Tensor::full({cfg.hidden_dim}, 1.0);
        layer.ln1_bias = Tensor::zeros({cfg.hidden_dim});
        layer.ln2_gain = Tensor::full({cfg.hidden_dim}, 1.0);
        layer.ln2_bias = Tensor::zeros({cfg.hidden_dim});
    }
    return p;
}

DenseHead DenseHead::init(std::size_t input_dim, std::size_t dense_dim, numeric::Prng& prng) {
    if (input_dim == 0 || dense_dim == 0) throw std::invalid_argument("dense head: zero dimension");
    DenseHead h;
    h.dense_w = numeric::xavier_init({input_dim, dense_dim}, prng);
    h.dense_b = Tensor::zeros({dense_dim});
    h.out_w = numeric::xavier_init({dense_dim, 1}, prng);
    h.out_b = Tensor::zeros({1});
    return h;
}

// ---------------------------------------------------------------------------
// graph builders

LstmVars bind_lstm(Tape& tape, LSTMParams& p) {
    LstmVars v;
    v.wt_i = tape.transpose(tape.param(&p.w_input));
    v.wt_f = tape.transpose(tape.param(&p.w_forget));
    v.wt_o = tape.transpose(tape.param(&p.w_output));
    v.wt_c = tape.transpose(tape.param(&p.w_cand));
    v.ut_i = tape.transpose(tape.param(&p.u_input));
    v.ut_f = tape.transpose(tape.param(&p.u_forget));
    v.ut_o = tape.transpose(tape.param(&p.u_output));
    v.ut_c = tape.transpose(tape.param(&p.u_cand));
    v.b_i = tape.param(&p.b_input);
    v.b_f = tape.param(&p.b_forget);
    v.b_o = tape.param(&p.b_output);
    v.b_c = tape.param(&p.b_cand);
    return v;
}

LstmStepVars lstm_step(Tape& tape, const LstmVars& lv, Var x_t, LstmStepVars prev,
                       const Tensor& step_mask) {
    auto gate = [&](Var wt, Var ut, Var b) {
        return tape.add_row(tape.add(tape.matmul(x_t, wt), tape.matmul(prev.h, ut)), b);
    };
    Var i = tape.sigmoid(gate(lv.wt_i, lv.ut_i, lv.b_i));
    Var f = tape.sigmoid(gate(lv.wt_f, lv.ut_f, lv.b_f));
    Var o = tape.sigmoid(gate(lv.wt_o, lv.ut_o, lv.b_o));
    Var cand = tape.tanh(gate(lv.wt_c, lv.ut_c, lv.b_c));

    Var c_new = tape.add(tape.mul(f, prev.c), tape.mul(i, cand));
    Var h_new = tape.mul(o, tape.tanh(c_new));

    // masked rows keep the previous state exactly
    Tensor inv_mask = step_mask;
    for (std::size_t r = 0; r < inv_mask.size(); ++r) inv_mask.flat(r) = 1.0 - inv_mask.flat(r);
    LstmStepVars next;
    next.c = tape.add(tape.scale_rows(c_new, step_mask), tape.scale_rows(prev.c, inv_mask));
    next.h = tape.add(tape.scale_rows(h_new, step_mask), tape.scale_rows(prev.h, inv_mask));
    return next;
}

Var lstm_sequence(Tape& tape, LSTMParams& p, const std::vector<Var>& x_steps,
                  const std::vector<Tensor>& step_masks, std::vector<Var>* all_h) {
    if (x_steps.empty()) throw std::invalid_argument("lstm_sequence: no steps");
    if (x_steps.size() != step_masks.size()) {
        throw std::invalid_argument("lstm_sequence: step/mask count mismatch");
    }
    std::size_t batch = tape.value(x_steps[0]).rows();
    if (tape.value(x_steps[0]).cols() != p.input_dim) {
        throw std::invalid_argument("lstm_sequence: input dim mismatch");
    }
    LstmVars lv = bind_lstm(tape, p);
    LstmStepVars state;
    state.h = tape.constant(Tensor({batch, p.hidden_dim}));
    state.c = tape.constant(Tensor({batch, p.hidden_dim}));
    for (std::size_t t = 0; t < x_steps.size(); ++t) {
        state = lstm_step(tape, lv, x_steps[t], state, step_masks[t]);
        if (all_h) all_h->push_back(state.h);
    }
    return state.h;
}

Var encoder_layer_graph(Tape& tape, Var x, EncoderLayerParams& lp, std::size_t n_heads,
                        const Tensor& key_mask, std::vector<Tensor>* attention_out) {
    std::size_t seq = tape.value(x).rows();
    std::size_t hidden = tape.value(x).cols();
    std::size_t head_dim = hidden / n_heads;

    Var q = tape.matmul(x, tape.param(&lp.wq));
    Var k = tape.matmul(x, tape.param(&lp.wk));
    Var v = tape.matmul(x, tape.param(&lp.wv));

    Tensor mask_matrix({seq, seq});
    for (std::size_t i = 0; i < seq; ++i) {
        for (std::size_t j = 0; j < seq; ++j) mask_matrix(i, j) = key_mask(j);
    }

    std::vector<Var> contexts;
    for (std::size_t h = 0; h < n_heads; ++h) {
        Var qh = tape.slice_cols(q, h * head_dim, (h + 1) * head_dim);
        Var kh = tape.slice_cols(k, h * head_dim, (h + 1) * head_dim);
        Var vh = tape.slice_cols(v, h * head_dim, (h + 1) * head_dim);
        Var scores = tape.scale(tape.matmul(qh, tape.transpose(kh)),
                                1.0 / std::sqrt(static_cast<double>(head_dim)));
        Var attn = tape.softmax_rows_masked(scores, mask_matrix);
        if (attention_out) attention_out->push_back(tape.value(attn));
        contexts.push_back(tape.matmul(attn, vh));
    }
    Var ctx = contexts.size() == 1 ? contexts[0] : tape.concat_cols(contexts);
    Var attended = tape.matmul(ctx, tape.param(&lp.wo));
    Var normed1 = tape.layer_norm_rows(tape.add(x, attended), tape.param(&lp.ln1_gain),
                                       tape.param(&lp.ln1_bias));

    Var ff = tape.add_row(tape.matmul(normed1, tape.param(&lp.ff1_w)), tape.param(&lp.ff1_b));
    ff = tape.gelu(ff);
    ff = tape.add_row(tape.matmul(ff, tape.param(&lp.ff2_w)), tape.param(&lp.ff2_b));
    return tape.layer_norm_rows(tape.add(normed1, ff), tape.param(&lp.ln2_gain),
                                tape.param(&lp.ln2_bias));
}

Var encoder_graph(Tape& tape, const EncoderConfig& cfg, EncoderParams& p,
                  const std::vector<std::size_t>& ids_with_cls,
                  const std::vector<double>& mask_with_cls, EncoderProbe* probe) {
    std::size_t seq = ids_with_cls.size();
    if (seq == 0) throw std::invalid_argument("encoder: empty sequence");
    if (seq > cfg.max_positions) throw std::invalid_argument("encoder: sequence too long");
    for (std::size_t id : ids_with_cls) {
        if (id >= cfg.vocab_size) throw std::out_of_range("encoder: token id out of range");
    }
    if (mask_with_cls.size() != seq) throw std::invalid_argument("encoder: mask length mismatch");

    Var tokens = tape.gather_rows(tape.param(&p.token_embedding), ids_with_cls);
    Var positions = tape.slice_rows(tape.param(&p.position_embedding), 0, seq);
    Var x = tape.add(tokens, positions);

    Tensor key_mask({seq});
    for (std::size_t i = 0; i < seq; ++i) key_mask(i) = mask_with_cls[i];

    for (std::size_t layer = 0; layer < cfg.n_layers; ++layer) {
        std::vector<Tensor>* attn_sink = nullptr;
        if (probe) {
            probe->attention.emplace_back();
            attn_sink = &probe->attention.back();
        }
        x = encoder_layer_graph(tape, x, p.layers[layer], cfg.n_heads, key_mask, attn_sink);
    }
    return x;
}

Var dense_head_graph(Tape& tape, DenseHead& head, Var features) {
    Var hidden = tape.relu(
        tape.add_row(tape.matmul(features, tape.param(&head.dense_w)), tape.param(&head.dense_b)));
    Var logits = tape.add_row(tape.matmul(hidden, tape.param(&head.out_w)), tape.param(&head.out_b));
    return tape.sigmoid(logits);
}

// ---------------------------------------------------------------------------
// public forwards

namespace {

// Step inputs for a slice of a SequenceBatch, trimmed to the longest
// row in the slice (masked steps pass state through, so trimming does
// not change results).
struct SteppedBatch {
    std::vector<Var> x_steps;
    std::vector<Tensor> masks;
};

SteppedBatch step_inputs(Tape& tape, const features::SequenceBatch& batch,
                         const std::vector<std::size_t>& idx, bool reversed) {
    std::size_t max_needed = 1;
    for (std::size_t r : idx) {
        if (r >= batch.batch()) throw std::out_of_range("batch index out of range");
        max_needed = std::max(max_needed, std::max<std::size_t>(batch.lengths[r], 1));
    }
    max_needed = std::min(max_needed, batch.max_len());

    SteppedBatch out;
    std::size_t dim = batch.dim();
    for (std::size_t t = 0; t < max_needed; ++t) {
        Tensor x({idx.size(), dim});
        Tensor m({idx.size()});
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::size_t row = idx[i];
            std::size_t len = batch.lengths[row];
            std::size_t src = t;
            if (reversed) {
                if (t >= len) {
                    // leave zeros, mask 0
                    continue;
                }
                src = len - 1 - t;
            }
            m(i) = batch.mask(row, src);
            for (std::size_t j = 0; j < dim; ++j) x(i, j) = batch.tensor(row, src, j);
        }
        out.x_steps.push_back(tape.constant(std::move(x)));
        out.masks.push_back(std::move(m));
    }
    return out;
}

std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

}  // namespace

LSTMState lstm_cell_forward(const LSTMParams& p, const std::vector<double>& x, const LSTMState& s) {
    if (x.size() != p.input_dim) throw std::invalid_argument("lstm_cell_forward: input dim mismatch");
    if (s.h.size() != p.hidden_dim || s.c.size() != p.hidden_dim) {
        throw std::invalid_argument("lstm_cell_forward: state dim mismatch");
    }
    Tape tape;
    LSTMParams& mp = const_cast<LSTMParams&>(p);
    LstmVars lv = bind_lstm(tape, mp);
    Tensor xt({1, p.input_dim});
    for (std::size_t j = 0; j < x.size(); ++j) xt(0, j) = x[j];
    Tensor h0({1, p.hidden_dim}), c0({1, p.hidden_dim});
    for (std::size_t j = 0; j < p.hidden_dim; ++j) {
        h0(0, j) = s.h(j);
        c0(0, j) = s.c(j);
    }
    LstmStepVars prev{tape.constant(h0), tape.constant(c0)};
    LstmStepVars next = lstm_step(tape, lv, tape.constant(xt), prev, Tensor::full({1}, 1.0));

    LSTMState out = LSTMState::zero(p.hidden_dim);
    for (std::size_t j = 0; j < p.hidden_dim; ++j) {
        out.h(j) = tape.value(next.h)(0, j);
        out.c(j) = tape.value(next.c)(0, j);
    }
    return out;
}

LstmForwardResult lstm_forward(const LSTMParams& p, const features::SequenceBatch& batch) {
    if (batch.dim() != p.input_dim) throw std::invalid_argument("lstm_forward: input dim mismatch");
    Tape tape;
    LSTMParams& mp = const_cast<LSTMParams&>(p);
    auto idx = all_indices(batch.batch());
    // all_h must cover every position, so no trimming here
    SteppedBatch stepped;
    std::size_t dim = batch.dim();
    for (std::size_t t = 0; t < batch.max_len(); ++t) {
        Tensor x({idx.size(), dim});
        Tensor m({idx.size()});
        for (std::size_t i = 0; i < idx.size(); ++i) {
            m(i) = batch.mask(i, t);
            for (std::size_t j = 0; j < dim; ++j) x(i, j) = batch.tensor(i, t, j);
        }
        stepped.x_steps.push_back(tape.constant(std::move(x)));
        stepped.masks.push_back(std::move(m));
    }
    std::vector<Var> all_h;
    Var final_h = lstm_sequence(tape, mp, stepped.x_steps, stepped.masks, &all_h);

    LstmForwardResult result;
    result.final_h = tape.value(final_h);
    result.all_h = Tensor({batch.batch(), batch.max_len(), p.hidden_dim});
    for (std::size_t t = 0; t < all_h.size(); ++t) {
        const Tensor& ht = tape.value(all_h[t]);
        for (std::size_t i = 0; i < batch.batch(); ++i) {
            for (std::size_t j = 0; j < p.hidden_dim; ++j) result.all_h(i, t, j) = ht(i, j);
        }
    }
    return result;
}

features::SequenceBatch reverse_sequences(const features::SequenceBatch& batch) {
    features::SequenceBatch out = batch;
    for (std::size_t i = 0; i < batch.batch(); ++i) {
        std::size_t len = batch.lengths[i];
        for (std::size_t t = 0; t < len; ++t) {
            std::size_t src = len - 1 - t;
            out.mask(i, t) = batch.mask(i, src);
            for (std::size_t j = 0; j < batch.dim(); ++j) out.tensor(i, t, j) = batch.tensor(i, src, j);
        }
    }
    return out;
}

Tensor bilstm_forward(const BiLSTMParams& p, const features::SequenceBatch& batch) {
    if (p.forward.hidden_dim != p.backward.hidden_dim) {
        throw std::invalid_argument("bilstm_forward: direction hidden dims differ");
    }
    LstmForwardResult f = lstm_forward(p.forward, batch);
    LstmForwardResult b = lstm_forward(p.backward, reverse_sequences(batch));
    std::size_t hidden = p.forward.hidden_dim;
    Tensor out({batch.batch(), 2 * hidden});
    for (std::size_t i = 0; i < batch.batch(); ++i) {
        for (std::size_t j = 0; j < hidden; ++j) {
            out(i, j) = f.final_h(i, j);
            out(i, hidden + j) = b.final_h(i, j);
        }
    }
    return out;
}

Tensor encoder_forward(const EncoderConfig& cfg, const EncoderParams& p,
                       const std::vector<std::size_t>& token_ids, const std::vector<double>& mask,
                       EncoderProbe* probe) {
    if (mask.size() != token_ids.size()) throw std::invalid_argument("encoder_forward: mask mismatch");
    std::vector<std::size_t> ids{cfg.cls_index};
    ids.insert(ids.end(), token_ids.begin(), token_ids.end());
    std::vector<double> full_mask{1.0};
    full_mask.insert(full_mask.end(), mask.begin(), mask.end());

    Tape tape;
    EncoderParams& mp = const_cast<EncoderParams&>(p);
    Var out = encoder_graph(tape, cfg, mp, ids, full_mask, probe);
    return tape.value(out);
}

// ---------------------------------------------------------------------------
// datasets

std::size_t dataset_size(const Dataset& data) {
    return std::visit([](const auto& d) { return d.labels.size(); }, data);
}

const std::vector<int>& dataset_labels(const Dataset& data) {
    return std::visit([](const auto& d) -> const std::vector<int>& { return d.labels; }, data);
}

DenseData densify(const std::vector<features::SparseVector>& rows, std::vector<int> labels) {
    if (rows.size() != labels.size()) throw std::invalid_argument("densify: row/label count mismatch");
    std::size_t dim = rows.empty() ? 0 : rows[0].dim;
    DenseData data;
    data.rows = Tensor({std::max<std::size_t>(rows.size(), 1), std::max<std::size_t>(dim, 1)});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].dim != dim) throw std::invalid_argument("densify: inconsistent dimensions");
        for (const auto& [idx, v] : rows[i].entries) data.rows(i, idx) = v;
    }
    data.labels = std::move(labels);
    return data;
}

// ---------------------------------------------------------------------------
// classifiers

std::vector<double> Classifier::predict_probs(const Dataset& data, const std::vector<std::size_t>& idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    // chunked so huge inputs do not build one giant graph
    const std::size_t chunk = 128;
    for (std::size_t start = 0; start < idx.size(); start += chunk) {
        std::vector<std::size_t> part(idx.begin() + start,
                                      idx.begin() + std::min(idx.size(), start + chunk));
        Tape tape;
        Var probs = build_probs(tape, data, part);
        const Tensor& p = tape.value(probs);
        for (std::size_t i = 0; i < part.size(); ++i) out.push_back(p(i, 0));
    }
    return out;
}

std::vector<double> Classifier::predict_probs(const Dataset& data) {
    return predict_probs(data, all_indices(dataset_size(data)));
}

LogisticModel::LogisticModel(std::size_t n_features, std::uint64_t seed) {
    if (n_features == 0) throw std::invalid_argument("logistic: zero features");
    numeric::Prng prng(seed);
    weights = numeric::xavier_init({n_features, 1}, prng);
    bias = Tensor::zeros({1});
}

std::vector<ParamRef> LogisticModel::parameters() {
    return {{"weights", &weights}, {"bias", &bias}};
}

Var LogisticModel::build_probs(Tape& tape, const Dataset& data, const std::vector<std::size_t>& idx) {
    const auto* dense = std::get_if<DenseData>(&data);
    if (!dense) throw std::invalid_argument("logistic model needs dense feature rows");
    if (dense->rows.cols() != weights.rows()) {
        throw std::invalid_argument("logistic model: feature dimension mismatch");
    }
    Tensor x({idx.size(), dense->rows.cols()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < dense->rows.cols(); ++j) x(i, j) = dense->rows(idx[i], j);
    }
    Var logits = tape.add_row(tape.matmul(tape.constant(std::move(x)), tape.param(&weights)),
                              tape.param(&bias));
    return tape.sigmoid(logits);
}

RecurrentClassifier::RecurrentClassifier(RecurrentKind kind, std::size_t input_dim,
                                         std::size_t hidden_dim, std::size_t dense_dim,
                                         std::uint64_t seed)
    : recurrent_kind(kind) {
    numeric::Prng prng(seed);
    fwd = LSTMParams::init(input_dim, hidden_dim, prng);
    if (kind == RecurrentKind::Bilstm) {
        bwd = LSTMParams::init(input_dim, hidden_dim, prng);
        head = DenseHead::init(2 * hidden_dim, dense_dim, prng);
    } else {
        head = DenseHead::init(hidden_dim, dense_dim, prng);
    }
}

std::string RecurrentClassifier::kind() const {
    return recurrent_kind == RecurrentKind::Lstm ? "lstm" : "bilstm";
}

std::vector<ParamRef> RecurrentClassifier::parameters() {
    std::vector<ParamRef> out;
    auto push_lstm = [&](const std::string& prefix, LSTMParams& p) {
        out.push_back({prefix + ".w_input", &p.w_input});
        out.push_back({prefix + ".w_forget", &p.w_forget});
        out.push_back({prefix + ".w_output", &p.w_output});
        out.push_back({prefix + ".w_cand", &p.w_cand});
        out.push_back({prefix + ".u_input", &p.u_input});
        out.push_back({prefix + ".u_forget", &p.u_forget});
        out.push_back({prefix + ".u_output", &p.u_output});
        out.push_back({prefix + ".u_cand", &p.u_cand});
        out.push_back({prefix + ".b_input", &p.b_input});
        out.push_back({prefix + ".b_forget", &p.b_forget});
        out.push_back({prefix + ".b_output", &p.b_output});
        out.push_back({prefix + ".b_cand", &p.b_cand});
    };
    push_lstm("fwd", fwd);
    if (recurrent_kind == RecurrentKind::Bilstm) push_lstm("bwd", bwd);
    out.push_back({"head.dense_w", &head.dense_w});
    out.push_back({"head.dense_b", &head.dense_b});
    out.push_back({"head.out_w", &head.out_w});
    out.push_back({"head.out_b", &head.out_b});
    return out;
}

Var RecurrentClassifier::build_probs(Tape& tape, const Dataset& data,
                                     const std::vector<std::size_t>& idx) {
    const auto* seq = std::get_if<SequenceData>(&data);
    if (!seq) throw std::invalid_argument("recurrent model needs sequence data");
    SteppedBatch fwd_in = step_inputs(tape, seq->batch, idx, false);
    Var features;
    if (recurrent_kind == RecurrentKind::Bilstm) {
        SteppedBatch bwd_in = step_inputs(tape, seq->batch, idx, true);
        Var f = lstm_sequence(tape, fwd, fwd_in.x_steps, fwd_in.masks);
        Var b = lstm_sequence(tape, bwd, bwd_in.x_steps, bwd_in.masks);
        features = tape.concat_cols({f, b});
    } else {
        features = lstm_sequence(tape, fwd, fwd_in.x_steps, fwd_in.masks);
    }
    return dense_head_graph(tape, head, features);
}

EncoderClassifier::EncoderClassifier(const EncoderConfig& cfg, std::size_t dense_dim,
                                     std::uint64_t seed)
    : config(cfg) {
    numeric::Prng prng(seed);
    params = EncoderParams::init(cfg, prng);
    head = DenseHead::init(cfg.hidden_dim, dense_dim, prng);
}

std::vector<ParamRef> encoder_param_refs(EncoderParams& p, const std::string& prefix) {
    std::vector<ParamRef> out;
    out.push_back({prefix + ".token_embedding", &p.token_embedding});
    out.push_back({prefix + ".position_embedding", &p.position_embedding});
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto& layer = p.layers[l];
        std::string lp = prefix + ".layer" + std::to_string(l);
        out.push_back({lp + ".wq", &layer.wq});
        out.push_back({lp + ".wk", &layer.wk});
        out.push_back({lp + ".wv", &layer.wv});
        out.push_back({lp + ".wo", &layer.wo});
        out.push_back({lp + ".ff1_w", &layer.ff1_w});
        out.push_back({lp + ".ff1_b", &layer.ff1_b});
        out.push_back({lp + ".ff2_w", &layer.ff2_w});
        out.push_back({lp + ".ff2_b", &layer.ff2_b});
        out.push_back({lp + ".ln1_gain", &layer.ln1_gain});
        out.push_back({lp + ".ln1_bias", &layer.ln1_bias});
        out.push_back({lp + ".ln2_gain", &layer.ln2_gain});
        out.push_back({lp + ".ln2_bias", &layer.ln2_bias});
    }
    return out;
}

std::vector<ParamRef> EncoderClassifier::parameters() {
    std::vector<ParamRef> out = encoder_param_refs(params, "encoder");
    out.push_back({"head.dense_w", &head.dense_w});
    out.push_back({"head.dense_b", &head.dense_b});
    out.push_back({"head.out_w", &head.out_w});
    out.push_back({"head.out_b", &head.out_b});
    return out;
}

namespace {

// CLS-prepended ids and mask for one raw example.
void with_cls(const EncoderConfig& cfg, const std::vector<std::size_t>& ids,
              const std::vector<double>& mask, std::vector<std::size_t>& out_ids,
              std::vector<double>& out_mask) {
    out_ids.assign(1, cfg.cls_index);
    out_ids.insert(out_ids.end(), ids.begin(), ids.end());
    out_mask.assign(1, 1.0);
    out_mask.insert(out_mask.end(), mask.begin(), mask.end());
}

}  // namespace

Var EncoderClassifier::build_probs(Tape& tape, const Dataset& data,
                                   const std::vector<std::size_t>& idx) {
    const auto* tok = std::get_if<TokenData>(&data);
    if (!tok) throw std::invalid_argument("encoder model needs token-id data");
    std::vector<Var> probs;
    probs.reserve(idx.size());
    for (std::size_t i : idx) {
        const auto& ids = tok->ids.at(i);
        std::vector<double> mask(ids.size(), 1.0);
        std::vector<std::size_t> full_ids;
        std::vector<double> full_mask;
        with_cls(config, ids, mask, full_ids, full_mask);
        Var hidden = encoder_graph(tape, config, params, full_ids, full_mask);
        Var cls = tape.slice_rows(hidden, 0, 1);
        probs.push_back(dense_head_graph(tape, head, cls));
    }
    return probs.size() == 1 ? probs[0] : tape.concat_rows(probs);
}

double EncoderClassifier::forward(const std::vector<std::size_t>& token_ids,
                                  const std::vector<double>& mask) {
    Tape tape;
    std::vector<std::size_t> full_ids;
    std::vector<double> full_mask;
    with_cls(config, token_ids, mask, full_ids, full_mask);
    Var hidden = encoder_graph(tape, config, params, full_ids, full_mask);
    Var prob = dense_head_graph(tape, head, tape.slice_rows(hidden, 0, 1));
    return tape.value(prob)(0, 0);
}

HybridClassifier::HybridClassifier(const EncoderConfig& cfg, RecurrentKind head_kind,
                                   std::size_t hidden_dim, std::size_t dense_dim, std::uint64_t seed)
    : config(cfg), head_kind(head_kind) {
    numeric::Prng prng(seed);
    encoder = EncoderParams::init(cfg, prng);
    fwd = LSTMParams::init(cfg.hidden_dim, hidden_dim, prng);
    if (head_kind == RecurrentKind::Bilstm) {
        bwd = LSTMParams::init(cfg.hidden_dim, hidden_dim, prng);
        head = DenseHead::init(2 * hidden_dim, dense_dim, prng);
    } else {
        head = DenseHead::init(hidden_dim, dense_dim, prng);
    }
}

std::string HybridClassifier::kind() const {
    return head_kind == RecurrentKind::Lstm ? "hybrid_lstm" : "hybrid_bilstm";
}

std::vector<ParamRef> HybridClassifier::parameters() {
    std::vector<ParamRef> out = encoder_param_refs(encoder, "encoder");
    auto push_lstm = [&](const std::string& prefix, LSTMParams& p) {
        out.push_back({prefix + ".w_input", &p.w_input});
        out.push_back({prefix + ".w_forget", &p.w_forget});
        out.push_back({prefix + ".w_output", &p.w_output});
        out.push_back({prefix + ".w_cand", &p.w_cand});
        out.push_back({prefix + ".u_input", &p.u_input});
        out.push_back({prefix + ".u_forget", &p.u_forget});
        out.push_back({prefix + ".u_output", &p.u_output});
        out.push_back({prefix + ".u_cand", &p.u_cand});
        out.push_back({prefix + ".b_input", &p.b_input});
        out.push_back({prefix + ".b_forget", &p.b_forget});
        out.push_back({prefix + ".b_output", &p.b_output});
        out.push_back({prefix + ".b_cand", &p.b_cand});
    };
    push_lstm("fwd", fwd);
    if (head_kind == RecurrentKind::Bilstm) push_lstm("bwd", bwd);
    out.push_back({"head.dense_w", &head.dense_w});
    out.push_back({"head.dense_b", &head.dense_b});
    out.push_back({"head.out_w", &head.out_w});
    out.push_back({"head.out_b", &head.out_b});
    return out;
}

Var HybridClassifier::example_graph(Tape& tape, const std::vector<std::size_t>& token_ids,
                                    const std::vector<double>& mask) {
    if (token_ids.empty()) throw std::invalid_argument("hybrid: empty token sequence");
    std::vector<std::size_t> full_ids;
    std::vector<double> full_mask;
    with_cls(config, token_ids, mask, full_ids, full_mask);
    Var hidden = encoder_graph(tape, config, encoder, full_ids, full_mask);

    std::size_t start = feed_cls ? 0 : 1;
    std::size_t seq = full_ids.size();
    std::vector<Var> x_steps;
    std::vector<Tensor> masks;
    for (std::size_t t = start; t < seq; ++t) {
        x_steps.push_back(tape.slice_rows(hidden, t, t + 1));
        masks.push_back(Tensor::full({1}, full_mask[t]));
    }

    Var features;
    if (head_kind == RecurrentKind::Bilstm) {
        // the reversed pass walks the same rows back to front
        std::vector<Var> rev_steps(x_steps.rbegin(), x_steps.rend());
        std::vector<Tensor> rev_masks(masks.rbegin(), masks.rend());
        Var f = lstm_sequence(tape, fwd, x_steps, masks);
        Var b = lstm_sequence(tape, bwd, rev_steps, rev_masks);
        features = tape.concat_cols({f, b});
    } else {
        features = lstm_sequence(tape, fwd, x_steps, masks);
    }
    return dense_head_graph(tape, head, features);
}

Var HybridClassifier::build_probs(Tape& tape, const Dataset& data,
                                  const std::vector<std::size_t>& idx) {
    const auto* tok = std::get_if<TokenData>(&data);
    if (!tok) throw std::invalid_argument("hybrid model needs token-id data");
    std::vector<Var> probs;
    probs.reserve(idx.size());
    for (std::size_t i : idx) {
        const auto& ids = tok->ids.at(i);
        std::vector<double> mask(ids.size(), 1.0);
        probs.push_back(example_graph(tape, ids, mask));
    }
    return probs.size() == 1 ? probs[0] : tape.concat_rows(probs);
}

double HybridClassifier::forward(const std::vector<std::size_t>& token_ids,
                                 const std::vector<double>& mask) {
    Tape tape;
    Var prob = example_graph(tape, token_ids, mask);
    return tape.value(prob)(0, 0);
}

double hybrid_forward(HybridClassifier& model, const std::vector<std::size_t>& token_ids,
                      const std::vector<double>& mask) {
    return model.forward(token_ids, mask);
}

std::vector<double> deep_forward(RecurrentClassifier& model, const features::SequenceBatch& batch) {
    SequenceData data;
    data.batch = batch;
    data.labels.assign(batch.batch(), 0);
    Dataset ds = std::move(data);
    return model.predict_probs(ds);
}

// ---------------------------------------------------------------------------
// training

namespace {

double improvement_sign(EarlyStopMetric metric) {
    return metric == EarlyStopMetric::ValAccuracy ? 1.0 : -1.0;
}

std::vector<Tensor> snapshot(const std::vector<ParamRef>& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(*p.tensor);
    return out;
}

void restore(const std::vector<ParamRef>& params, const std::vector<Tensor>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) *params[i].tensor = snap[i];
}

}  // namespace

std::pair<double, double> evaluate(Classifier& model, const Dataset& data,
                                   const std::vector<std::size_t>& idx, std::size_t batch_size) {
    if (idx.empty()) throw std::invalid_argument("evaluate: no examples");
    const auto& labels = dataset_labels(data);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
        std::vector<std::size_t> part(idx.begin() + start,
                                      idx.begin() + std::min(idx.size(), start + batch_size));
        Tape tape;
        Var probs = model.build_probs(tape, data, part);
        Tensor y({part.size(), 1});
        for (std::size_t i = 0; i < part.size(); ++i) y(i, 0) = labels[part[i]];
        Var loss = tape.bce_loss(probs, y);
        loss_sum += tape.value(loss).flat(0) * static_cast<double>(part.size());
        const Tensor& p = tape.value(probs);
        for (std::size_t i = 0; i < part.size(); ++i) {
            int pred = p(i, 0) >= 0.5 ? 1 : 0;
            if (pred == labels[part[i]]) ++correct;
        }
    }
    double n = static_cast<double>(idx.size());
    return {loss_sum / n, static_cast<double>(correct) / n};
}

TrainReport train(Classifier& model, const Dataset& data, const TrainConfig& config) {
    std::size_t n = dataset_size(data);
    if (n == 0) throw std::invalid_argument("train: empty dataset");
    if (config.epochs < 1) throw std::invalid_argument("train: epochs must be at least 1");
    if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be at least 1");
    if (config.val_fraction < 0.0 || config.val_fraction >= 1.0) {
        throw std::invalid_argument("train: val_fraction must be in [0,1)");
    }

    auto started = std::chrono::steady_clock::now();
    numeric::Prng prng(config.seed);

    std::vector<std::size_t> order = all_indices(n);
    prng.shuffle(order);
    auto val_n = static_cast<std::size_t>(
        std::floor(config.val_fraction * static_cast<double>(n) + 1e-9));
    if (val_n >= n) val_n = n - 1;
    std::vector<std::size_t> train_idx(order.begin(), order.end() - val_n);
    std::vector<std::size_t> val_idx(order.end() - val_n, order.end());

    const auto& labels = dataset_labels(data);
    auto params = model.parameters();
    std::vector<numeric::AdamState> states;
    states.reserve(params.size());
    for (const auto& p : params) states.push_back(numeric::AdamState::for_param(*p.tensor, config.lr));

    TrainReport report;
    double best_metric = 0.0;
    bool have_best = false;
    std::vector<Tensor> best_params;
    std::size_t bad_epochs = 0;
    double sign = improvement_sign(config.early_stop_metric);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        prng.shuffle(train_idx);
        for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
            std::vector<std::size_t> batch(
                train_idx.begin() + start,
                train_idx.begin() + std::min(train_idx.size(), start + config.batch_size));
            Tape tape;
            Var probs = model.build_probs(tape, data, batch);
            Tensor y({batch.size(), 1});
            for (std::size_t i = 0; i < batch.size(); ++i) y(i, 0) = labels[batch[i]];
            Var loss = tape.bce_loss(probs, y);
            double loss_value = tape.value(loss).flat(0);
            if (!std::isfinite(loss_value)) {
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
            }
            tape.backward(loss);
            for (std::size_t i = 0; i < params.size(); ++i) {
                Tensor grad = tape.grad_for(params[i].tensor);
                numeric::adam_step(*params[i].tensor, grad, states[i]);
            }
        }

        EpochRecord rec;
        std::tie(rec.train_loss, rec.train_acc) = evaluate(model, data, train_idx, config.batch_size);
        if (val_idx.empty()) {
            rec.val_loss = rec.train_loss;
            rec.val_acc = rec.train_acc;
        } else {
            std::tie(rec.val_loss, rec.val_acc) = evaluate(model, data, val_idx, config.batch_size);
        }
        report.epochs.push_back(rec);

        double metric = config.early_stop_metric == EarlyStopMetric::ValAccuracy ? rec.val_acc
                                                                                 : rec.val_loss;
        bool improved = !have_best || sign * metric > sign * best_metric;
        if (improved) {
            best_metric = metric;
            best_params = snapshot(params);
            report.best_epoch = epoch;
            have_best = true;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
        }
        if (config.early_stop_patience > 0 && bad_epochs >= config.early_stop_patience) break;
    }

    if (config.early_stop_patience > 0 && have_best) restore(params, best_params);
    report.stopped_epoch = report.epochs.size();
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

Predictions predict(Classifier& model, const Dataset& docs, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0) {
        throw std::invalid_argument("predict: threshold must be in (0,1)");
    }
    Predictions out;
    out.probabilities = model.predict_probs(docs);
    out.labels.reserve(out.probabilities.size());
    for (double p : out.probabilities) out.labels.push_back(p >= threshold ? 1 : 0);
    return out;
}

std::unique_ptr<LogisticModel> train_logistic_baseline(const std::vector<features::SparseVector>& rows,
                                                       const std::vector<int>& labels,
                                                       const TrainConfig& config,
                                                       TrainReport* report) {
    if (rows.empty()) throw std::invalid_argument("train_logistic_baseline: empty data");
    auto model = std::make_unique<LogisticModel>(rows[0].dim, config.seed);
    Dataset data = densify(rows, labels);
    TrainReport r = train(*model, data, config);
    if (report) *report = std::move(r);
    return model;
}

// ---------------------------------------------------------------------------
// checkpoint building blocks

void save_params(std::ostream& out, const std::vector<ParamRef>& params) {
    out << params.size() << '\n';
    for (const auto& p : params) {
        out << p.name << '\n';
        p.tensor->write_text(out);
    }
}

void load_params(std::istream& in, const std::vector<ParamRef>& params) {
    std::size_t count = 0;
    if (!(in >> count)) throw std::runtime_error("load_params: missing tensor count");
    if (count != params.size()) {
        throw std::runtime_error("load_params: checkpoint has " + std::to_string(count) +
                                 " tensors, model expects " + std::to_string(params.size()));
    }
    std::string name;
    for (const auto& p : params) {
        if (!(in >> name)) throw std::runtime_error("load_params: missing tensor name");
        if (name != p.name) {
            throw std::runtime_error("load_params: expected tensor \"" + p.name + "\", found \"" +
                                     name + "\"");
        }
        Tensor t = Tensor::read_text(in);
        if (!t.same_shape(*p.tensor)) {
            throw std::runtime_error("load_params: shape mismatch for tensor \"" + name + "\"");
        }
        *p.tensor = std::move(t);
    }
}

}  // namespace textguard::models
