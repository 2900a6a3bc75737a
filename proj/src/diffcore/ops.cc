#include "rec4ad/diffcore/ops.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "rec4ad/common/error.h"

namespace rec4ad::diffcore {
namespace {

using Index = Eigen::Index;

[[noreturn]] void ShapeFail(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

std::string ShapeStr(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "," + std::to_string(m.cols()) + ")";
}

Index BroadcastDim(Index a, Index b, const char* op) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  ShapeFail(op, "incompatible broadcast extents " + std::to_string(a) + " and " +
                    std::to_string(b));
}

// Sums `g` down to the shape of a broadcast operand.
Matrix ReduceTo(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

template <typename F>
Matrix BroadcastApply(const Matrix& a, const Matrix& b, Index rows, Index cols,
                      F f) {
  Matrix out(rows, cols);
  const bool ar = a.rows() == rows, ac = a.cols() == cols;
  const bool br = b.rows() == rows, bc = b.cols() == cols;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      out(r, c) = f(a(ar ? r : 0, ac ? c : 0), b(br ? r : 0, bc ? c : 0));
    }
  }
  return out;
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

Var Binary(Var a, Var b, BinaryKind kind, const char* op) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Index rows = BroadcastDim(av.rows(), bv.rows(), op);
  const Index cols = BroadcastDim(av.cols(), bv.cols(), op);
  Matrix out;
  const bool same = av.rows() == bv.rows() && av.cols() == bv.cols();
  switch (kind) {
    case BinaryKind::kAdd:
      out = same ? Matrix(av + bv)
                 : BroadcastApply(av, bv, rows, cols,
                                  [](double x, double y) { return x + y; });
      break;
    case BinaryKind::kSub:
      out = same ? Matrix(av - bv)
                 : BroadcastApply(av, bv, rows, cols,
                                  [](double x, double y) { return x - y; });
      break;
    case BinaryKind::kMul:
      out = same ? Matrix(av.cwiseProduct(bv))
                 : BroadcastApply(av, bv, rows, cols,
                                  [](double x, double y) { return x * y; });
      break;
    case BinaryKind::kDiv:
      out = same ? Matrix(av.cwiseQuotient(bv))
                 : BroadcastApply(av, bv, rows, cols,
                                  [](double x, double y) { return x / y; });
      break;
  }
  const int ia = a.id(), ib = b.id();
  return a.tape()->record(
      op, std::move(out), {a, b}, [ia, ib, kind, rows, cols](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& av = t.value(ia);
        const Matrix& bv = t.value(ib);
        const auto expand = [&](const Matrix& m) {
          return BroadcastApply(m, Matrix::Zero(1, 1), rows, cols,
                                [](double x, double) { return x; });
        };
        if (t.requires_grad(ia)) {
          Matrix ga;
          switch (kind) {
            case BinaryKind::kAdd:
            case BinaryKind::kSub:
              ga = g;
              break;
            case BinaryKind::kMul:
              ga = g.cwiseProduct(expand(bv));
              break;
            case BinaryKind::kDiv:
              ga = g.cwiseQuotient(expand(bv));
              break;
          }
          t.accumulate(ia, ReduceTo(ga, av.rows(), av.cols()));
        }
        if (t.requires_grad(ib)) {
          Matrix gb;
          switch (kind) {
            case BinaryKind::kAdd:
              gb = g;
              break;
            case BinaryKind::kSub:
              gb = -g;
              break;
            case BinaryKind::kMul:
              gb = g.cwiseProduct(expand(av));
              break;
            case BinaryKind::kDiv: {
              const Matrix ea = expand(av), eb = expand(bv);
              gb = -g.cwiseProduct(ea).cwiseQuotient(eb.cwiseProduct(eb));
              break;
            }
          }
          t.accumulate(ib, ReduceTo(gb, bv.rows(), bv.cols()));
        }
      });
}

}  // namespace

Var Matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    ShapeFail("matmul", ShapeStr(av) + " x " + ShapeStr(bv));
  }
  const int ia = a.id(), ib = b.id();
  return a.tape()->record("matmul", av * bv, {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var Affine(Var x, Var w, Var b) {
  const Matrix& xv = x.value();
  const Matrix& wv = w.value();
  const Matrix& bv = b.value();
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    ShapeFail("affine", ShapeStr(xv) + " x " + ShapeStr(wv) + " + " + ShapeStr(bv));
  }
  Matrix out = xv * wv;
  out.rowwise() += bv.row(0);
  const int ix = x.id(), iw = w.id(), ib = b.id();
  return x.tape()->record("affine", std::move(out), {x, w, b},
                          [ix, iw, ib](Tape& t, int self) {
                            const Matrix& g = t.grad(self);
                            if (t.requires_grad(ix)) {
                              t.accumulate(ix, g * t.value(iw).transpose());
                            }
                            if (t.requires_grad(iw)) {
                              t.accumulate(iw, t.value(ix).transpose() * g);
                            }
                            if (t.requires_grad(ib)) {
                              t.accumulate(ib, g.colwise().sum());
                            }
                          });
}

Var Add(Var a, Var b) { return Binary(a, b, BinaryKind::kAdd, "add"); }
Var Sub(Var a, Var b) { return Binary(a, b, BinaryKind::kSub, "sub"); }
Var Mul(Var a, Var b) { return Binary(a, b, BinaryKind::kMul, "mul"); }
Var Div(Var a, Var b) { return Binary(a, b, BinaryKind::kDiv, "div"); }

Var Scale(Var x, double factor) {
  const int ix = x.id();
  return x.tape()->record("scale", x.value() * factor, {x},
                          [ix, factor](Tape& t, int self) {
                            t.accumulate(ix, t.grad(self) * factor);
                          });
}

Var AddScalar(Var x, double offset) {
  const int ix = x.id();
  return x.tape()->record("add_scalar", x.value().array() + offset, {x},
                          [ix](Tape& t, int self) { t.accumulate(ix, t.grad(self)); });
}

Var Sqrt(Var x) {
  if ((x.value().array() < 0.0).any()) ShapeFail("sqrt", "negative input");
  const int ix = x.id();
  return x.tape()->record("sqrt", x.value().cwiseSqrt(), {x}, [ix](Tape& t, int self) {
    t.accumulate(ix, t.grad(self).cwiseQuotient(2.0 * t.value(self)));
  });
}

Var Relu(Var x) {
  const int ix = x.id();
  return x.tape()->record("relu", x.value().cwiseMax(0.0), {x}, [ix](Tape& t, int self) {
    const Matrix& xv = t.value(ix);
    t.accumulate(ix, (xv.array() > 0.0).select(t.grad(self), 0.0));
  });
}

Var Prelu(Var x, Var slope) {
  const Matrix& xv = x.value();
  const Matrix& sv = slope.value();
  if (sv.rows() != 1 || (sv.cols() != 1 && sv.cols() != xv.cols())) {
    ShapeFail("prelu", "slope " + ShapeStr(sv) + " for input " + ShapeStr(xv));
  }
  Matrix out(xv.rows(), xv.cols());
  const bool shared = sv.cols() == 1;
  for (Index r = 0; r < xv.rows(); ++r) {
    for (Index c = 0; c < xv.cols(); ++c) {
      const double v = xv(r, c);
      out(r, c) = v > 0.0 ? v : sv(0, shared ? 0 : c) * v;
    }
  }
  const int ix = x.id(), is = slope.id();
  return x.tape()->record("prelu", std::move(out), {x, slope},
                          [ix, is, shared](Tape& t, int self) {
                            const Matrix& g = t.grad(self);
                            const Matrix& xv = t.value(ix);
                            const Matrix& sv = t.value(is);
                            Matrix gx(xv.rows(), xv.cols());
                            Matrix gs = Matrix::Zero(1, sv.cols());
                            for (Index r = 0; r < xv.rows(); ++r) {
                              for (Index c = 0; c < xv.cols(); ++c) {
                                const Index sc = shared ? 0 : c;
                                if (xv(r, c) > 0.0) {
                                  gx(r, c) = g(r, c);
                                } else {
                                  gx(r, c) = g(r, c) * sv(0, sc);
                                  gs(0, sc) += g(r, c) * xv(r, c);
                                }
                              }
                            }
                            t.accumulate(ix, gx);
                            t.accumulate(is, gs);
                          });
}

Var Sigmoid(Var x) {
  const Matrix out = x.value().unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  const int ix = x.id();
  return x.tape()->record("sigmoid", out, {x}, [ix](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.accumulate(ix, t.grad(self).cwiseProduct(
                         y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var ConcatCols(std::initializer_list<Var> parts) {
  return ConcatCols(std::span<const Var>(parts.begin(), parts.size()));
}

Var ConcatCols(std::span<const Var> parts) {
  if (parts.empty()) ShapeFail("concat", "no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) ShapeFail("concat", "row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> widths;
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  return parts[0].tape()->record(
      "concat", std::move(out), parts, [ids, widths](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Index offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (t.requires_grad(ids[k])) {
            t.accumulate(ids[k], g.middleCols(offset, widths[k]));
          }
          offset += widths[k];
        }
      });
}

Var GatherRows(Var x, std::span<const int> rows) {
  const Matrix& xv = x.value();
  Matrix out(static_cast<Index>(rows.size()), xv.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= xv.rows()) {
      ShapeFail("gather_rows", "row index " + std::to_string(rows[r]) +
                                   " out of range for " + ShapeStr(xv));
    }
    out.row(static_cast<Index>(r)) = xv.row(rows[r]);
  }
  const int ix = x.id();
  std::vector<int> idx(rows.begin(), rows.end());
  return x.tape()->record("gather_rows", std::move(out), {x},
                          [ix, idx = std::move(idx)](Tape& t, int self) {
                            const Matrix& g = t.grad(self);
                            Matrix& gx = t.mutable_grad(ix);
                            for (std::size_t r = 0; r < idx.size(); ++r) {
                              gx.row(idx[r]) += g.row(static_cast<Index>(r));
                            }
                          });
}

Var MergeRows(std::span<const Var> parts, std::span<const std::vector<int>> indices,
              Index rows) {
  if (parts.empty() || parts.size() != indices.size()) {
    ShapeFail("merge_rows", "parts and index lists differ in count");
  }
  const Index cols = parts[0].cols();
  Matrix out(rows, cols);
  std::vector<char> covered(static_cast<std::size_t>(rows), 0);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& pv = parts[k].value();
    if (pv.cols() != cols || pv.rows() != static_cast<Index>(indices[k].size())) {
      ShapeFail("merge_rows", "part " + std::to_string(k) + " shape " + ShapeStr(pv) +
                                  " does not match its index list");
    }
    for (std::size_t r = 0; r < indices[k].size(); ++r) {
      const int dst = indices[k][r];
      if (dst < 0 || dst >= rows || covered[dst]) {
        ShapeFail("merge_rows", "destination row " + std::to_string(dst) +
                                    " out of range or covered twice");
      }
      covered[dst] = 1;
      out.row(dst) = pv.row(static_cast<Index>(r));
    }
  }
  if (std::find(covered.begin(), covered.end(), 0) != covered.end()) {
    ShapeFail("merge_rows", "output row not covered");
  }
  std::vector<int> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  std::vector<std::vector<int>> idx(indices.begin(), indices.end());
  return parts[0].tape()->record(
      "merge_rows", std::move(out), parts, [ids, idx](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (!t.requires_grad(ids[k])) continue;
          Matrix gk(static_cast<Index>(idx[k].size()), g.cols());
          for (std::size_t r = 0; r < idx[k].size(); ++r) {
            gk.row(static_cast<Index>(r)) = g.row(idx[k][r]);
          }
          t.accumulate(ids[k], gk);
        }
      });
}

Var RepeatRows(Var x, int times) {
  if (times < 1) ShapeFail("repeat_rows", "times must be >= 1");
  const Matrix& xv = x.value();
  Matrix out(xv.rows() * times, xv.cols());
  for (Index r = 0; r < xv.rows(); ++r) {
    for (int k = 0; k < times; ++k) out.row(r * times + k) = xv.row(r);
  }
  const int ix = x.id();
  return x.tape()->record("repeat_rows", std::move(out), {x},
                          [ix, times](Tape& t, int self) {
                            const Matrix& g = t.grad(self);
                            const Index rows = g.rows() / times;
                            Matrix gx = Matrix::Zero(rows, g.cols());
                            for (Index r = 0; r < rows; ++r) {
                              for (int k = 0; k < times; ++k) {
                                gx.row(r) += g.row(r * times + k);
                              }
                            }
                            t.accumulate(ix, gx);
                          });
}

Var Reshape(Var x, Index rows, Index cols) {
  const Matrix& xv = x.value();
  if (rows * cols != xv.size()) {
    ShapeFail("reshape", ShapeStr(xv) + " to (" + std::to_string(rows) + "," +
                             std::to_string(cols) + ")");
  }
  Matrix out = Eigen::Map<const Matrix>(xv.data(), rows, cols);
  const int ix = x.id();
  const Index orig_rows = xv.rows(), orig_cols = xv.cols();
  return x.tape()->record("reshape", std::move(out), {x},
                          [ix, orig_rows, orig_cols](Tape& t, int self) {
                            const Matrix& g = t.grad(self);
                            t.accumulate(ix, Eigen::Map<const Matrix>(
                                                 g.data(), orig_rows, orig_cols));
                          });
}

Var EmbeddingGather(Var table, std::span<const int> ids) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Index>(ids.size()), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= tv.rows()) {
      ShapeFail("embedding_gather", "id " + std::to_string(ids[r]) +
                                        " outside vocabulary of size " +
                                        std::to_string(tv.rows()));
    }
    out.row(static_cast<Index>(r)) = tv.row(ids[r]);
  }
  const int it = table.id();
  std::vector<int> idx(ids.begin(), ids.end());
  return table.tape()->record("embedding_gather", std::move(out), {table},
                              [it, idx = std::move(idx)](Tape& t, int self) {
                                const Matrix& g = t.grad(self);
                                Matrix& gt = t.mutable_grad(it);
                                for (std::size_t r = 0; r < idx.size(); ++r) {
                                  gt.row(idx[r]) += g.row(static_cast<Index>(r));
                                }
                              });
}

namespace {

// Validates a B x 1 0/1 mask and returns the selected row count.
double MaskCount(const Matrix& x, const Matrix& mask, const char* op) {
  if (mask.rows() != x.rows() || mask.cols() != 1) {
    ShapeFail(op, "mask " + ShapeStr(mask) + " for input " + ShapeStr(x));
  }
  double count = 0.0;
  for (Index r = 0; r < mask.rows(); ++r) {
    const double m = mask(r, 0);
    if (m != 0.0 && m != 1.0) ShapeFail(op, "mask entries must be 0 or 1");
    count += m;
  }
  if (count == 0.0) ShapeFail(op, "statistic over an empty row selection");
  return count;
}

Matrix MaskedMeanValue(const Matrix& x, const Matrix& mask, double count) {
  Matrix mean = Matrix::Zero(1, x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    if (mask(r, 0) != 0.0) mean += x.row(r);
  }
  return mean / count;
}

}  // namespace

Var MeanRows(Var x) {
  if (x.rows() == 0) ShapeFail("mean_rows", "empty batch");
  const int ix = x.id();
  return x.tape()->record("mean_rows", x.value().colwise().mean(), {x},
                          [ix](Tape& t, int self) {
                            const Index rows = t.value(ix).rows();
                            Matrix gx(rows, t.value(ix).cols());
                            gx.rowwise() = t.grad(self).row(0) / static_cast<double>(rows);
                            t.accumulate(ix, gx);
                          });
}

Var MeanRows(Var x, Var mask) {
  const double count = MaskCount(x.value(), mask.value(), "masked_mean_rows");
  const int ix = x.id(), im = mask.id();
  return x.tape()->record(
      "masked_mean_rows", MaskedMeanValue(x.value(), mask.value(), count), {x, mask},
      [ix, im, count](Tape& t, int self) {
        const Matrix& m = t.value(im);
        Matrix gx(m.rows(), t.value(ix).cols());
        const auto row = t.grad(self).row(0) / count;
        for (Index r = 0; r < m.rows(); ++r) gx.row(r) = row * m(r, 0);
        t.accumulate(ix, gx);
      });
}

Var VarianceRows(Var x) {
  if (x.rows() == 0) ShapeFail("variance_rows", "empty batch");
  const Matrix& xv = x.value();
  const Matrix centered = xv.rowwise() - xv.colwise().mean();
  const double n = static_cast<double>(xv.rows());
  const int ix = x.id();
  return x.tape()->record("variance_rows", centered.cwiseAbs2().colwise().sum() / n, {x},
                          [ix, n](Tape& t, int self) {
                            const Matrix& xv = t.value(ix);
                            Matrix centered = xv.rowwise() - xv.colwise().mean();
                            const auto g = t.grad(self).row(0) * (2.0 / n);
                            for (Index r = 0; r < centered.rows(); ++r) {
                              centered.row(r) = centered.row(r).cwiseProduct(g);
                            }
                            t.accumulate(ix, centered);
                          });
}

Var VarianceRows(Var x, Var mask) {
  const Matrix& xv = x.value();
  const Matrix& mv = mask.value();
  const double count = MaskCount(xv, mv, "masked_variance_rows");
  const Matrix mean = MaskedMeanValue(xv, mv, count);
  Matrix var = Matrix::Zero(1, xv.cols());
  for (Index r = 0; r < xv.rows(); ++r) {
    if (mv(r, 0) != 0.0) var += (xv.row(r) - mean).cwiseAbs2();
  }
  var /= count;
  const int ix = x.id(), im = mask.id();
  return x.tape()->record(
      "masked_variance_rows", std::move(var), {x, mask},
      [ix, im, count](Tape& t, int self) {
        const Matrix& xv = t.value(ix);
        const Matrix& mv = t.value(im);
        const Matrix mean = MaskedMeanValue(xv, mv, count);
        const Matrix g = t.grad(self) * (2.0 / count);
        Matrix gx = Matrix::Zero(xv.rows(), xv.cols());
        for (Index r = 0; r < xv.rows(); ++r) {
          if (mv(r, 0) != 0.0) gx.row(r) = (xv.row(r) - mean).cwiseProduct(g);
        }
        t.accumulate(ix, gx);
      });
}

Var Sum(Var x) {
  const int ix = x.id();
  return x.tape()->record("sum", Matrix::Constant(1, 1, x.value().sum()), {x},
                          [ix](Tape& t, int self) {
                            const Matrix& xv = t.value(ix);
                            t.accumulate(ix, Matrix::Constant(xv.rows(), xv.cols(),
                                                              t.grad(self)(0, 0)));
                          });
}

Var Mean(Var x) {
  if (x.value().size() == 0) ShapeFail("mean", "empty input");
  const int ix = x.id();
  const double n = static_cast<double>(x.value().size());
  return x.tape()->record("mean", Matrix::Constant(1, 1, x.value().sum() / n), {x},
                          [ix, n](Tape& t, int self) {
                            const Matrix& xv = t.value(ix);
                            t.accumulate(ix, Matrix::Constant(xv.rows(), xv.cols(),
                                                              t.grad(self)(0, 0) / n));
                          });
}

Var MaskedSoftmaxRows(Var scores, const Matrix& mask) {
  const Matrix& sv = scores.value();
  if (mask.rows() != sv.rows() || mask.cols() != sv.cols()) {
    ShapeFail("masked_softmax", "mask " + ShapeStr(mask) + " for scores " + ShapeStr(sv));
  }
  Matrix out = Matrix::Zero(sv.rows(), sv.cols());
  for (Index r = 0; r < sv.rows(); ++r) {
    double max_score = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < sv.cols(); ++c) {
      if (mask(r, c) != 0.0) max_score = std::max(max_score, sv(r, c));
    }
    if (!std::isfinite(max_score)) continue;
    double total = 0.0;
    for (Index c = 0; c < sv.cols(); ++c) {
      if (mask(r, c) != 0.0) {
        out(r, c) = std::exp(sv(r, c) - max_score);
        total += out(r, c);
      }
    }
    out.row(r) /= total;
  }
  const int is = scores.id();
  return scores.tape()->record("masked_softmax", std::move(out), {scores},
                               [is](Tape& t, int self) {
                                 const Matrix& y = t.value(self);
                                 const Matrix& g = t.grad(self);
                                 const Eigen::VectorXd dot =
                                     y.cwiseProduct(g).rowwise().sum();
                                 Matrix gs = y.cwiseProduct(
                                     (g.colwise() - dot).matrix());
                                 t.accumulate(is, gs);
                               });
}

Var WeightedSequenceSum(Var weights, Var sequence) {
  const Matrix& wv = weights.value();
  const Matrix& sv = sequence.value();
  const Index batch = wv.rows(), len = wv.cols();
  if (sv.rows() != batch * len) {
    ShapeFail("weighted_sequence_sum",
              "weights " + ShapeStr(wv) + " vs sequence " + ShapeStr(sv));
  }
  Matrix out = Matrix::Zero(batch, sv.cols());
  for (Index b = 0; b < batch; ++b) {
    for (Index l = 0; l < len; ++l) {
      const double w = wv(b, l);
      if (w != 0.0) out.row(b) += w * sv.row(b * len + l);
    }
  }
  const int iw = weights.id(), is = sequence.id();
  return weights.tape()->record(
      "weighted_sequence_sum", std::move(out), {weights, sequence},
      [iw, is](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& wv = t.value(iw);
        const Matrix& sv = t.value(is);
        const Index batch = wv.rows(), len = wv.cols();
        if (t.requires_grad(iw)) {
          Matrix gw(batch, len);
          for (Index b = 0; b < batch; ++b) {
            for (Index l = 0; l < len; ++l) gw(b, l) = g.row(b).dot(sv.row(b * len + l));
          }
          t.accumulate(iw, gw);
        }
        if (t.requires_grad(is)) {
          Matrix gs(sv.rows(), sv.cols());
          for (Index b = 0; b < batch; ++b) {
            for (Index l = 0; l < len; ++l) gs.row(b * len + l) = wv(b, l) * g.row(b);
          }
          t.accumulate(is, gs);
        }
      });
}

Var GradientReversal(Var x, double alpha) {
  if (!(alpha >= 0.0)) throw ConfigError("gradient reversal alpha must be >= 0");
  const int ix = x.id();
  return x.tape()->record("gradient_reversal", x.value(), {x},
                          [ix, alpha](Tape& t, int self) {
                            t.accumulate(ix, -alpha * t.grad(self));
                          });
}

Var PearsonPairwisePenalty(Var p, Var q, double eps) {
  const Matrix& pv = p.value();
  const Matrix& qv = q.value();
  if (pv.rows() != qv.rows()) {
    ShapeFail("pearson_penalty", ShapeStr(pv) + " vs " + ShapeStr(qv));
  }
  if (pv.rows() < 2) ShapeFail("pearson_penalty", "needs at least 2 rows");
  if (!(eps >= 0.0)) ShapeFail("pearson_penalty", "eps must be >= 0");
  const Matrix pc = pv.rowwise() - pv.colwise().mean();
  const Matrix qc = qv.rowwise() - qv.colwise().mean();
  const Matrix cov = pc.transpose() * qc;  // d_p x d_q
  const Eigen::ArrayXd pvar = pc.cwiseAbs2().colwise().sum().transpose().array() + eps;
  const Eigen::ArrayXd qvar = qc.cwiseAbs2().colwise().sum().transpose().array() + eps;
  // r^2 = cov^2 / (pvar_i * qvar_j)
  Eigen::ArrayXXd r2 = cov.array().square();
  r2.colwise() /= pvar;
  r2.rowwise() /= qvar.transpose();
  const int ip = p.id(), iq = q.id();
  return p.tape()->record(
      "pearson_penalty", Matrix::Constant(1, 1, r2.sum()), {p, q},
      [ip, iq, eps](Tape& t, int self) {
        const double g = t.grad(self)(0, 0);
        const Matrix& pv = t.value(ip);
        const Matrix& qv = t.value(iq);
        const Matrix pc = pv.rowwise() - pv.colwise().mean();
        const Matrix qc = qv.rowwise() - qv.colwise().mean();
        const Matrix cov = pc.transpose() * qc;
        const Eigen::ArrayXd pvar =
            pc.cwiseAbs2().colwise().sum().transpose().array() + eps;
        const Eigen::ArrayXd qvar =
            qc.cwiseAbs2().colwise().sum().transpose().array() + eps;
        Eigen::ArrayXXd r2 = cov.array().square();
        r2.colwise() /= pvar;
        r2.rowwise() /= qvar.transpose();
        // dL/dcov = 2 cov / (pvar_i qvar_j)
        Eigen::ArrayXXd dcov = 2.0 * cov.array();
        dcov.colwise() /= pvar;
        dcov.rowwise() /= qvar.transpose();
        // dL/dpvar_i = -sum_j r2_ij / pvar_i ; dL/dqvar_j = -sum_i r2_ij / qvar_j
        const Eigen::ArrayXd dpvar = -r2.rowwise().sum() / pvar;
        const Eigen::ArrayXd dqvar = -(r2.colwise().sum().transpose()) / qvar;
        const Matrix dcov_m = dcov.matrix();
        if (t.requires_grad(ip)) {
          Matrix gpc = qc * dcov_m.transpose();
          gpc += 2.0 * pc * dpvar.matrix().asDiagonal();
          gpc = gpc.rowwise() - gpc.colwise().mean();
          t.accumulate(ip, gpc * g);
        }
        if (t.requires_grad(iq)) {
          Matrix gqc = pc * dcov_m;
          gqc += 2.0 * qc * dqvar.matrix().asDiagonal();
          gqc = gqc.rowwise() - gqc.colwise().mean();
          t.accumulate(iq, gqc * g);
        }
      });
}

Var BinaryCrossEntropy(Var pred, std::span<const double> labels, Reduction reduction) {
  return BinaryCrossEntropy(pred, labels, {}, reduction);
}

Var BinaryCrossEntropy(Var pred, std::span<const double> labels,
                       std::span<const double> weights, Reduction reduction) {
  const Matrix& pv = pred.value();
  const auto n = static_cast<std::size_t>(pv.size());
  if (labels.size() != n || (!weights.empty() && weights.size() != n)) {
    ShapeFail("binary_cross_entropy", "prediction/label/weight sizes differ");
  }
  if (n == 0) ShapeFail("binary_cross_entropy", "empty input");
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) ShapeFail("binary_cross_entropy", "labels must be 0 or 1");
  }
  const double lo = kProbabilityClamp, hi = 1.0 - kProbabilityClamp;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double prob = std::clamp(pv.data()[i], lo, hi);
    const double term = labels[i] == 1.0 ? std::log(prob) : std::log(1.0 - prob);
    total -= weights.empty() ? term : weights[i] * term;
  }
  const double denom = reduction == Reduction::kMean ? static_cast<double>(n) : 1.0;
  std::vector<double> y(labels.begin(), labels.end());
  std::vector<double> w(weights.begin(), weights.end());
  const int ip = pred.id();
  return pred.tape()->record(
      "binary_cross_entropy", Matrix::Constant(1, 1, total / denom), {pred},
      [ip, y = std::move(y), w = std::move(w), denom, lo, hi](Tape& t, int self) {
        const double g = t.grad(self)(0, 0) / denom;
        const Matrix& pv = t.value(ip);
        Matrix gp(pv.rows(), pv.cols());
        for (Eigen::Index i = 0; i < pv.size(); ++i) {
          const double prob = pv.data()[i];
          double d = 0.0;
          if (prob > lo && prob < hi) {
            d = y[i] == 1.0 ? -1.0 / prob : 1.0 / (1.0 - prob);
            if (!w.empty()) d *= w[i];
          }
          gp.data()[i] = g * d;
        }
        t.accumulate(ip, gp);
      });
}

}  // namespace rec4ad::diffcore
