#pragma once

#include <vector>

#include "tiedmt/rng.hpp"
#include "tiedmt/tensor.hpp"

namespace tiedmt {

// Differentiable operations over Tensor. Every op computes its forward value
// immediately; when a Tape is active (and an input requires grad) it also
// records the matching backward step. Gradients accumulate additively, so a
// tensor feeding several branches receives the sum of the branch gradients.

Tensor add(const Tensor& a, const Tensor& b);            // same shape
Tensor sub(const Tensor& a, const Tensor& b);            // same shape
Tensor mul(const Tensor& a, const Tensor& b);            // elementwise
Tensor scale(const Tensor& a, Real s);
Tensor add_bias(const Tensor& m, const Tensor& bias);    // [r,c] + [c]
Tensor matmul(const Tensor& a, const Tensor& b);         // [r,k]x[k,c]
Tensor matmul_nt(const Tensor& a, const Tensor& b);      // a * b^T: [r,k]x[c,k]
Tensor relu(const Tensor& a);

// Total over all elements, as a [1] scalar.
Tensor sum(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Mean of a list of scalars.
Tensor average(const std::vector<Tensor>& scalars);

// Row-stabilized softmax; rejects non-finite input naming the offending row.
Tensor softmax_rows(const Tensor& m);

// Per-row layer normalization with learned gain/bias (both [c]).
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       Real eps = Real(1e-6));

// out[i,:] = scale * table[ids[i],:]
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids,
                      Real scale = Real(1));

// out[i,:] = m[rows[i],:]
Tensor gather_rows(const Tensor& m, const std::vector<int>& rows);

// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& a, Real rate, Rng& rng);

// Multi-head scaled dot-product attention over a ragged batch. q, k, v are
// already projected [Rq,d] / [Rk,d] / [Rk,d] stacks; q_offsets / kv_offsets
// (size B+1, starting at 0) delimit the per-sequence row segments. With
// `causal` set, query position i only attends to key positions <= i and the
// two segmentations must coincide.
Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                           int heads, bool causal,
                           const std::vector<int>& q_offsets,
                           const std::vector<int>& kv_offsets);

// Mean per-token label-smoothed negative log-likelihood over non-pad rows.
// The smoothed target distribution is (1-eps)*onehot + eps/V over the full
// vocabulary. Rows whose target equals pad_id are excluded (pad_id < 0
// disables padding). Throws if a target is out of range or all rows are pads.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     Real label_smoothing, int pad_id = -1);

// Class-weighted binary cross-entropy over probabilities [B,K], averaged over
// the K classes and the batch:
//   -w_b * (delta_k * y log p + (1-y) log(1-p))
// Probabilities are clamped to [1e-12, 1-1e-12] inside the log terms.
Tensor weighted_bce(const Tensor& probs, const std::vector<Real>& targets,
                    const std::vector<Real>& class_weights,
                    const std::vector<Real>& sample_weights);

// Soft macro F_beta loss over probabilities [B,K], averaged over the batch:
//   1 - (1+b^2) mu / (sum_p + b^2 sum_y), mu = sum_k p_k y_k.
// Degenerate rows (mu == 0 or sum_p == 0) score loss 1 with zero gradient.
Tensor f_beta_loss(const Tensor& probs, const std::vector<Real>& targets,
                   Real beta);

}  // namespace tiedmt
