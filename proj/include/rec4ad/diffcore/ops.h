#ifndef REC4AD_DIFFCORE_OPS_H_
#define REC4AD_DIFFCORE_OPS_H_

#include <span>
#include <vector>

#include "rec4ad/diffcore/tape.h"

namespace rec4ad::diffcore {

// Dense maps.
Var Matmul(Var a, Var b);
// x (B x n) * w (n x m) + b (1 x m).
Var Affine(Var x, Var w, Var b);

// Elementwise arithmetic with broadcasting: each axis of the two operands
// must be equal or 1.
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Div(Var a, Var b);
Var Scale(Var x, double factor);
Var AddScalar(Var x, double offset);
Var Sqrt(Var x);

// Activations.
Var Relu(Var x);
// Per-column learnable negative slope; `slope` is 1 x n or 1 x 1.
Var Prelu(Var x, Var slope);
Var Sigmoid(Var x);

// Layout.
Var ConcatCols(std::span<const Var> parts);
Var ConcatCols(std::initializer_list<Var> parts);
Var GatherRows(Var x, std::span<const int> rows);
// Inverse of splitting rows by index lists: row indices[k][r] of the result
// is row r of parts[k]. Every output row must be covered exactly once.
Var MergeRows(std::span<const Var> parts,
              std::span<const std::vector<int>> indices, Eigen::Index rows);
// Each row repeated `times` consecutively: (B x n) -> (B*times x n).
Var RepeatRows(Var x, int times);
Var Reshape(Var x, Eigen::Index rows, Eigen::Index cols);
// Rows of `table` selected by `ids`; backward scatter-adds.
Var EmbeddingGather(Var table, std::span<const int> ids);

// Batch-axis statistics -> 1 x n. `mask` is an optional B x 1 column of 0/1
// row selectors; variance is the biased (1/count) estimator.
Var MeanRows(Var x);
Var MeanRows(Var x, Var mask);
Var VarianceRows(Var x);
Var VarianceRows(Var x, Var mask);

// Reductions to 1 x 1.
Var Sum(Var x);
Var Mean(Var x);

// Row-wise softmax over the positions where `mask` (same shape, 0/1) is 1.
// A row with no valid position yields all zeros.
Var MaskedSoftmaxRows(Var scores, const Matrix& mask);
// weights (B x L), sequence ((B*L) x k) -> (B x k):
// out[b] = sum_l weights[b,l] * sequence[b*L + l].
Var WeightedSequenceSum(Var weights, Var sequence);

// Gradient reversal: identity forward, -alpha * upstream backward.
Var GradientReversal(Var x, double alpha);

// Sum over all (i, j) column pairs of the squared Pearson correlation
// between column i of p and column j of q, computed in-batch:
//   cov(i,j) = (p_i - mean p_i)^T (q_j - mean q_j)
//   r(i,j)   = cov(i,j) / sqrt((cov_pp(i) + eps) * (cov_qq(j) + eps))
Var PearsonPairwisePenalty(Var p, Var q, double eps);

enum class Reduction { kSum, kMean };

inline constexpr double kProbabilityClamp = 1e-7;

// -sum w_i [y log p + (1-y) log(1-p)] with p clamped to
// [1e-7, 1 - 1e-7]. Labels must be 0 or 1. `weights` empty means all ones.
// kMean divides by the number of rows.
Var BinaryCrossEntropy(Var pred, std::span<const double> labels,
                       std::span<const double> weights, Reduction reduction);
Var BinaryCrossEntropy(Var pred, std::span<const double> labels,
                       Reduction reduction);

}  // namespace rec4ad::diffcore

#endif  // REC4AD_DIFFCORE_OPS_H_
