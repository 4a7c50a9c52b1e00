#pragma once

// Reverse-mode differentiation over an explicit computation record.
//
// A Tape owns every intermediate value produced while evaluating a model on
// one sample. Each recorded node keeps a backward closure that maps the
// upstream gradient onto its parents. Tapes are single-threaded; run
// independent samples on independent tapes.

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bgr/mat.hpp"

namespace bgr {

class Tape;

class Var {
 public:
  Var() = default;

  const Mat& value() const;
  const Mat& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Mat& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  Var variable(Mat value);

  // Appends a node computed from `parents`. Throws NumericError naming `op`
  // and the offending entry when `value` contains NaN or Inf.
  Var record(std::string op, Mat value, std::initializer_list<Var> parents, BackwardFn backward);

  // Propagates `seed` (the gradient of some scalar wrt `out`) to every node.
  void backward(Var out, const Mat& seed);
  // Seeds a 1x1 output with 1.
  void backward(Var out);

  void accumulate(Var v, const Mat& g);
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  const Mat& value(Var v) const { return nodes_[v.id()].value; }
  const Mat& grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Mat value;
    Mat grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
};

/// Differentiable counterparts of the Mat operations. Each records one node.
namespace ad {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var scale_add(Var a, Var b, double alpha, double beta);
Var add(Var a, Var b);
Var scale(Var a, double alpha);
Var softmax(Var a, Axis axis);
Var leaky_relu(Var a, double slope);
Var relu(Var a);
Var concat_cols(Var a, Var b);
Var concat_rows(Var a, Var b);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
// a[m x n] + broadcast bias[1 x n]
Var add_row(Var a, Var bias);
// out[i][j] = u[i] + v[j] for column vectors u[m x 1], v[n x 1]
Var outer_sum(Var u, Var v);
// Row softmax restricted to entries with allowed[i*n+j] != 0; masked entries
// are exactly 0. A row with no allowed entry becomes the one-hot self-loop.
Var masked_softmax_rows(Var a, std::vector<std::uint8_t> allowed);
Var sum(Var a);
// Mean over rows of -log softmax(logits)[row, label[row]].
Var cross_entropy(Var logits, std::span<const int> labels);

}  // namespace ad

/// A differentiable operation with an explicit backward, as consumed by
/// grad_check.
struct DiffOp {
  std::string name;
  std::function<Mat(std::span<const Mat>)> forward;
  // Returns one gradient per input, each shaped like that input.
  std::function<std::vector<Mat>(std::span<const Mat>, const Mat& upstream)> backward;
};

// Wraps a tape-building function as a DiffOp: inputs become variables, the
// backward pass runs the tape.
DiffOp make_diff_op(std::string name,
                    std::function<Var(Tape&, std::span<const Var>)> build);

}  // namespace bgr
