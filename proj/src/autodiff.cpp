#include "bgr/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "bgr/errors.hpp"
#include "bgr/kernels.hpp"

namespace bgr {

const Mat& Var::value() const { return tape_->value(*this); }
const Mat& Var::grad() const { return tape_->grad(*this); }

Var Tape::constant(Mat value) {
  return record("constant", std::move(value), {}, nullptr);
}

Var Tape::variable(Mat value) {
  Var v = record("variable", std::move(value), {}, nullptr);
  nodes_.back().requires_grad = true;
  return v;
}

Var Tape::record(std::string op, Mat value, std::initializer_list<Var> parents,
                 BackwardFn backward) {
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!std::isfinite(value[i]))
      throw NumericError("non-finite value in op '" + op + "' at entry (" +
                         std::to_string(i / std::max<std::size_t>(value.cols(), 1)) + "," +
                         std::to_string(i % std::max<std::size_t>(value.cols(), 1)) + ") of " +
                         value.shape_str());
  }
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape_ != this) throw std::logic_error("Tape::record: parent from another tape");
    needs = needs || nodes_[p.id_].requires_grad;
  }
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  node.requires_grad = needs;
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(Var v, const Mat& g) {
  Node& node = nodes_[v.id_];
  if (!node.requires_grad) return;
  if (g.rows() != node.value.rows() || g.cols() != node.value.cols())
    throw ShapeError("backward of '" + node.op + "': gradient " + g.shape_str() +
                     " does not match value " + node.value.shape_str());
  if (node.grad.empty() && !node.value.empty()) {
    node.grad = g;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) node.grad[i] += g[i];
}

const Mat& Tape::grad(Var v) const {
  auto& node = const_cast<Node&>(nodes_[v.id_]);
  if (node.grad.rows() != node.value.rows() || node.grad.cols() != node.value.cols())
    node.grad = Mat(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::backward(Var out, const Mat& seed) {
  if (seed.rows() != out.rows() || seed.cols() != out.cols())
    throw ShapeError("Tape::backward: seed " + seed.shape_str() + " vs output " +
                     out.value().shape_str());
  for (auto& n : nodes_) n.grad = Mat();
  accumulate(out, seed);
  for (std::size_t i = out.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
    node.backward(*this, node.grad);
  }
}

void Tape::backward(Var out) {
  if (out.rows() != 1 || out.cols() != 1)
    throw ShapeError("Tape::backward: implicit seed needs a 1x1 output, got " +
                     out.value().shape_str());
  backward(out, Mat(1, 1, 1.0));
}

namespace ad {

namespace {

Mat gemm_nt(const Mat& a, const Mat& b) {
  Mat c(a.rows(), b.rows());
  kernels::gemm_nt(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.rows());
  return c;
}

Mat gemm_tn(const Mat& a, const Mat& b) {
  Mat c(a.cols(), b.cols());
  kernels::gemm_tn(a.data(), b.data(), c.data(), a.cols(), a.rows(), b.cols());
  return c;
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::logic_error("autodiff: unbound Var");
  return *a.tape();
}

// y = softmax(x) along rows; dx = y * (g - rowsum(g * y))
Mat softmax_rows_backward(const Mat& y, const Mat& g) {
  Mat dx(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
    for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (g(r, c) - dot);
  }
  return dx;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  return t.record("matmul", bgr::matmul(a.value(), b.value()), {a, b},
                  [a, b](Tape& tp, const Mat& g) {
                    if (tp.requires_grad(a)) tp.accumulate(a, gemm_nt(g, b.value()));
                    if (tp.requires_grad(b)) tp.accumulate(b, gemm_tn(a.value(), g));
                  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  return t.record("transpose", bgr::transpose(a.value()), {a},
                  [a](Tape& tp, const Mat& g) { tp.accumulate(a, bgr::transpose(g)); });
}

Var scale_add(Var a, Var b, double alpha, double beta) {
  Tape& t = tape_of(a);
  return t.record("scale_add", bgr::scale_add(a.value(), b.value(), alpha, beta), {a, b},
                  [a, b, alpha, beta](Tape& tp, const Mat& g) {
                    if (tp.requires_grad(a)) {
                      Mat ga = g;
                      for (auto& v : ga.data()) v *= alpha;
                      tp.accumulate(a, ga);
                    }
                    if (tp.requires_grad(b)) {
                      Mat gb = g;
                      for (auto& v : gb.data()) v *= beta;
                      tp.accumulate(b, gb);
                    }
                  });
}

Var add(Var a, Var b) { return scale_add(a, b, 1.0, 1.0); }

Var scale(Var a, double alpha) {
  Tape& t = tape_of(a);
  Mat out = a.value();
  for (auto& v : out.data()) v *= alpha;
  return t.record("scale", std::move(out), {a}, [a, alpha](Tape& tp, const Mat& g) {
    Mat ga = g;
    for (auto& v : ga.data()) v *= alpha;
    tp.accumulate(a, ga);
  });
}

Var softmax(Var a, Axis axis) {
  Tape& t = tape_of(a);
  Mat y = softmax_axis(a.value(), axis);
  return t.record("softmax", y, {a}, [a, y, axis](Tape& tp, const Mat& g) {
    if (axis == Axis::rows) {
      tp.accumulate(a, softmax_rows_backward(y, g));
    } else {
      tp.accumulate(a, bgr::transpose(softmax_rows_backward(bgr::transpose(y),
                                                            bgr::transpose(g))));
    }
  });
}

Var leaky_relu(Var a, double slope) {
  Tape& t = tape_of(a);
  return t.record("leaky_relu", bgr::leaky_relu(a.value(), slope), {a},
                  [a, slope](Tape& tp, const Mat& g) {
                    const Mat& x = a.value();
                    Mat gx(x.rows(), x.cols());
                    for (std::size_t i = 0; i < x.size(); ++i)
                      gx[i] = x[i] >= 0.0 ? g[i] : slope * g[i];
                    tp.accumulate(a, gx);
                  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  return t.record("relu", bgr::relu(a.value()), {a}, [a](Tape& tp, const Mat& g) {
    const Mat& x = a.value();
    Mat gx(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0 ? g[i] : 0.0;
    tp.accumulate(a, gx);
  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a);
  const std::size_t split = a.cols();
  return t.record("concat_cols", bgr::concat_cols(a.value(), b.value()), {a, b},
                  [a, b, split](Tape& tp, const Mat& g) {
                    if (tp.requires_grad(a)) tp.accumulate(a, bgr::slice_cols(g, 0, split));
                    if (tp.requires_grad(b))
                      tp.accumulate(b, bgr::slice_cols(g, split, g.cols()));
                  });
}

Var concat_rows(Var a, Var b) {
  Tape& t = tape_of(a);
  if (a.rows() != 0 && b.rows() != 0 && a.cols() != b.cols())
    throw ShapeError("concat_rows: column counts differ, " + a.value().shape_str() + " vs " +
                     b.value().shape_str());
  const std::size_t split = a.rows();
  Mat out = bgr::concat_rows(a.value(), b.value());
  return t.record("concat_rows", std::move(out), {a, b}, [a, b, split](Tape& tp, const Mat& g) {
    if (tp.requires_grad(a) && a.rows() > 0) tp.accumulate(a, bgr::slice_rows(g, 0, split));
    if (tp.requires_grad(b) && b.rows() > 0)
      tp.accumulate(b, bgr::slice_rows(g, split, g.rows()));
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(a);
  return t.record("slice_rows", bgr::slice_rows(a.value(), begin, end), {a},
                  [a, begin](Tape& tp, const Mat& g) {
                    Mat ga(a.rows(), a.cols());
                    for (std::size_t r = 0; r < g.rows(); ++r)
                      for (std::size_t c = 0; c < g.cols(); ++c) ga(begin + r, c) = g(r, c);
                    tp.accumulate(a, ga);
                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(a);
  return t.record("slice_cols", bgr::slice_cols(a.value(), begin, end), {a},
                  [a, begin](Tape& tp, const Mat& g) {
                    Mat ga(a.rows(), a.cols());
                    for (std::size_t r = 0; r < g.rows(); ++r)
                      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, begin + c) = g(r, c);
                    tp.accumulate(a, ga);
                  });
}

Var add_row(Var a, Var bias) {
  Tape& t = tape_of(a);
  const Mat& x = a.value();
  const Mat& b = bias.value();
  if (b.rows() != 1 || b.cols() != x.cols())
    throw ShapeError("add_row: bias " + b.shape_str() + " does not broadcast over " +
                     x.shape_str());
  Mat out = x;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += b(0, c);
  return t.record("add_row", std::move(out), {a, bias}, [a, bias](Tape& tp, const Mat& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g);
    if (tp.requires_grad(bias)) {
      Mat gb(1, g.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
      tp.accumulate(bias, gb);
    }
  });
}

Var outer_sum(Var u, Var v) {
  Tape& t = tape_of(u);
  if (u.cols() != 1 || v.cols() != 1)
    throw ShapeError("outer_sum: expects column vectors, got " + u.value().shape_str() + " and " +
                     v.value().shape_str());
  const std::size_t m = u.rows();
  const std::size_t n = v.rows();
  Mat out(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = u.value()(i, 0) + v.value()(j, 0);
  return t.record("outer_sum", std::move(out), {u, v}, [u, v, m, n](Tape& tp, const Mat& g) {
    Mat gu(m, 1);
    Mat gv(n, 1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        gu(i, 0) += g(i, j);
        gv(j, 0) += g(i, j);
      }
    if (tp.requires_grad(u)) tp.accumulate(u, gu);
    if (tp.requires_grad(v)) tp.accumulate(v, gv);
  });
}

Var masked_softmax_rows(Var a, std::vector<std::uint8_t> allowed) {
  Tape& t = tape_of(a);
  const Mat& x = a.value();
  if (allowed.size() != x.size())
    throw ShapeError("masked_softmax_rows: mask length " + std::to_string(allowed.size()) +
                     " does not match " + x.shape_str());
  Mat y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = 0.0;
    bool any = false;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (!allowed[r * x.cols() + c]) continue;
      mx = any ? std::max(mx, x(r, c)) : x(r, c);
      any = true;
    }
    if (!any) {
      if (r >= x.cols())
        throw ShapeError("masked_softmax_rows: fully masked row " + std::to_string(r) +
                         " has no self-loop column in " + x.shape_str());
      y(r, r) = 1.0;
      continue;
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      if (!allowed[r * x.cols() + c]) continue;
      y(r, c) = std::exp(x(r, c) - mx);
      sum += y(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) /= sum;
  }
  const Mat y_copy = y;
  return t.record("masked_softmax_rows", std::move(y), {a}, [a, y_copy](Tape& tp, const Mat& g) {
    // masked entries have y == 0 and one-hot rows give y*(g - g) == 0
    tp.accumulate(a, softmax_rows_backward(y_copy, g));
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return t.record("sum", Mat(1, 1, s), {a}, [a](Tape& tp, const Mat& g) {
    tp.accumulate(a, Mat(a.rows(), a.cols(), g(0, 0)));
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  Tape& t = tape_of(logits);
  const Mat& x = logits.value();
  if (labels.size() != x.rows())
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     x.shape_str() + " logits");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= x.cols())
      throw ShapeError("cross_entropy: label " + std::to_string(l) + " out of range for " +
                       std::to_string(x.cols()) + " classes");
  const std::size_t m = x.rows();
  if (m == 0) return t.constant(Mat(1, 1, 0.0));
  const Mat p = softmax_axis(x, Axis::rows);
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    double mx = x(r, 0);
    for (std::size_t c = 1; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
    double se = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) se += std::exp(x(r, c) - mx);
    loss += mx + std::log(se) - x(r, static_cast<std::size_t>(labels[r]));
  }
  loss /= static_cast<double>(m);
  std::vector<int> lab(labels.begin(), labels.end());
  return t.record("cross_entropy", Mat(1, 1, loss), {logits},
                  [logits, p, lab, m](Tape& tp, const Mat& g) {
                    Mat gx = p;
                    for (std::size_t r = 0; r < m; ++r) gx(r, static_cast<std::size_t>(lab[r])) -= 1.0;
                    const double s = g(0, 0) / static_cast<double>(m);
                    for (auto& v : gx.data()) v *= s;
                    tp.accumulate(logits, gx);
                  });
}

}  // namespace ad

DiffOp make_diff_op(std::string name,
                    std::function<Var(Tape&, std::span<const Var>)> build) {
  DiffOp op;
  op.name = name;
  op.forward = [build](std::span<const Mat> inputs) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Mat& m : inputs) vars.push_back(tape.constant(m));
    return build(tape, vars).value();
  };
  op.backward = [build](std::span<const Mat> inputs, const Mat& upstream) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Mat& m : inputs) vars.push_back(tape.variable(m));
    Var out = build(tape, vars);
    std::vector<Mat> grads;
    grads.reserve(vars.size());
    if (!tape.requires_grad(out)) {
      for (const Var& v : vars) grads.emplace_back(v.rows(), v.cols());
      return grads;
    }
    tape.backward(out, upstream);
    for (const Var& v : vars) grads.push_back(v.grad());
    return grads;
  };
  return op;
}

}  // namespace bgr
