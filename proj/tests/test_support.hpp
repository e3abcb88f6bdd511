#pragma once

// Shared fixtures for the model test suites: random batches, random
// token datasets, and the model-level finite-difference gradient check.

#include <cmath>
#include <string>
#include <vector>

#include "textguard/models.hpp"

namespace textguard::testsupport {

inline features::SequenceBatch random_batch(std::size_t n, std::size_t max_len, std::size_t dim,
                                            numeric::Prng& prng, std::size_t min_len = 1) {
    features::SequenceBatch batch;
    batch.tensor = numeric::Tensor({n, max_len, dim});
    batch.mask = numeric::Tensor({n, max_len});
    batch.lengths.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t len = min_len + prng.next_below(max_len - min_len + 1);
        batch.lengths[i] = len;
        for (std::size_t t = 0; t < len; ++t) {
            batch.mask(i, t) = 1.0;
            for (std::size_t j = 0; j < dim; ++j) batch.tensor(i, t, j) = prng.uniform(-1.0, 1.0);
        }
    }
    return batch;
}

inline models::TokenData random_token_data(std::size_t n, std::size_t max_len,
                                           std::size_t vocab_size, numeric::Prng& prng) {
    models::TokenData data;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t len = 1 + prng.next_below(max_len);
        std::vector<std::size_t> ids;
        for (std::size_t t = 0; t < len; ++t) ids.push_back(2 + prng.next_below(vocab_size - 2));
        data.ids.push_back(std::move(ids));
        data.labels.push_back(static_cast<int>(prng.next_below(2)));
    }
    return data;
}

struct GradCheckResult {
    double worst_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t checked = 0;
    std::size_t kink_coords = 0;  // coords where the +-eps interval crossed a ReLU kink
};

/// BCE-loss gradient of every parameter tensor against central finite
/// differences (the numeric module's oracle), eps 1e-4.
///
/// ReLU makes the loss piecewise smooth: when a probed coordinate sits
/// within eps of a kink, the central difference is not a derivative
/// estimate at all (the two one-sided slopes disagree). Such coordinates
/// are instead checked against a refined estimate at eps/100, so a wrong
/// backward pass still cannot slip through; they are counted separately.
inline GradCheckResult check_model_gradients(models::Classifier& model,
                                             const models::Dataset& data,
                                             const std::vector<std::size_t>& idx,
                                             double eps = 1e-4) {
    using models::Tape;
    using models::Var;
    const auto& labels = models::dataset_labels(data);
    numeric::Tensor y({idx.size(), 1});
    for (std::size_t i = 0; i < idx.size(); ++i) y(i, 0) = labels[idx[i]];

    auto loss_value = [&]() {
        Tape tape;
        Var probs = model.build_probs(tape, data, idx);
        return tape.value(tape.bce_loss(probs, y)).flat(0);
    };

    Tape tape;
    Var probs = model.build_probs(tape, data, idx);
    Var loss = tape.bce_loss(probs, y);
    tape.backward(loss);

    GradCheckResult result;
    for (auto& param : model.parameters()) {
        numeric::Tensor analytic = tape.grad_for(param.tensor);
        numeric::Tensor& tensor = *param.tensor;
        for (std::size_t i = 0; i < tensor.size(); ++i) {
            double orig = tensor.flat(i);
            auto probe = [&](double at) {
                tensor.flat(i) = at;
                double v = loss_value();
                tensor.flat(i) = orig;
                return v;
            };
            double fd = (probe(orig + eps) - probe(orig - eps)) / (2.0 * eps);
            double err = numeric::gradient_rel_error(analytic.flat(i), fd);
            ++result.checked;
            if (err >= 1e-4) {
                double mid = probe(orig);
                double right = (probe(orig + eps) - mid) / eps;
                double left = (mid - probe(orig - eps)) / eps;
                bool kink = numeric::gradient_rel_error(right, left) > 1e-3;
                if (kink) {
                    double fine = eps / 100.0;
                    double fd_fine = (probe(orig + fine) - probe(orig - fine)) / (2.0 * fine);
                    err = numeric::gradient_rel_error(analytic.flat(i), fd_fine);
                    ++result.kink_coords;
                }
            }
            if (err > result.worst_rel_error) {
                result.worst_rel_error = err;
                result.worst_tensor = param.name;
            }
        }
    }
    return result;
}

}  // namespace textguard::testsupport
