// Copyright 2026 PPT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PPT_GRAPH_HPP_
#define PPT_GRAPH_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "ppt/errors.hpp"
#include "ppt/mat.hpp"

namespace ppt::ad {

using ppt::Mat;

struct Var {
  int id = -1;
};

// Reverse-mode tape over matrix-valued nodes. One tape records one forward
// pass; backward() replays it in reverse. Parameters are external Mats bound
// with param(); their gradients are read off the tape after backward and
// applied by the optimizer. Tapes are cheap and rebuilt every step.
//
// The tape also meters compute: work() counts multiply-accumulate-sized units
// for every node (3x on backward), which backs the deterministic clock used
// for all recorded timings.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var input(Mat m) { return push(std::move(m), 0, {}, nullptr); }

  Var param(Mat& storage) {
    Var v = push(storage, 0, {}, nullptr);
    bound_.emplace_back(&storage, v);
    return v;
  }

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }
  const std::vector<std::pair<Mat*, Var>>& bound_params() const { return bound_; }

  // Deterministic compute meter (unit: one fused multiply-add, roughly).
  uint64_t work() const { return work_; }

  Var matmul(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    Mat out = ppt::matmul(A, B);
    const uint64_t cost =
        static_cast<uint64_t>(A.rows()) * A.cols() * B.cols();
    return push(std::move(out), cost, {a, b}, [this, a, b](const Node& n) {
      const Mat& A = val(a);
      const Mat& B = val(b);
      Mat& ga = nodes_[a.id].grad;
      Mat& gb = nodes_[b.id].grad;
      // dA += G * B^T ; dB += A^T * G
      for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < B.cols(); ++j) {
          const double g = n.grad(i, j);
          if (g == 0.0) continue;
          for (int k = 0; k < A.cols(); ++k) {
            ga(i, k) += g * B(k, j);
            gb(k, j) += A(i, k) * g;
          }
        }
    });
  }

  Var add(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    check_shape(A, B, "Tape::add");
    Mat out = A;
    for (size_t i = 0; i < out.size(); ++i) out.vec()[i] += B.vec()[i];
    return push(std::move(out), A.size(), {a, b}, [this, a, b](const Node& n) {
      accumulate(a, n.grad);
      accumulate(b, n.grad);
    });
  }

  Var sub(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    check_shape(A, B, "Tape::sub");
    Mat out = A;
    for (size_t i = 0; i < out.size(); ++i) out.vec()[i] -= B.vec()[i];
    return push(std::move(out), A.size(), {a, b}, [this, a, b](const Node& n) {
      accumulate(a, n.grad);
      Mat neg = n.grad;
      for (double& v : neg.vec()) v = -v;
      accumulate(b, neg);
    });
  }

  Var mul(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    check_shape(A, B, "Tape::mul");
    Mat out = A;
    for (size_t i = 0; i < out.size(); ++i) out.vec()[i] *= B.vec()[i];
    return push(std::move(out), A.size(), {a, b}, [this, a, b](const Node& n) {
      const Mat& A = val(a);
      const Mat& B = val(b);
      Mat ga = n.grad;
      Mat gb = n.grad;
      for (size_t i = 0; i < ga.size(); ++i) {
        ga.vec()[i] *= B.vec()[i];
        gb.vec()[i] *= A.vec()[i];
      }
      accumulate(a, ga);
      accumulate(b, gb);
    });
  }

  // Broadcast a (1, c) row vector over every row of a.
  Var add_rowvec(Var a, Var rv) {
    const Mat& A = val(a);
    const Mat& R = val(rv);
    if (R.rows() != 1 || R.cols() != A.cols()) {
      throw ArgumentError("Tape::add_rowvec: want (1, " + std::to_string(A.cols()) + "), got " +
                          R.shape_str());
    }
    Mat out = A;
    for (int i = 0; i < out.rows(); ++i)
      for (int j = 0; j < out.cols(); ++j) out(i, j) += R(0, j);
    return push(std::move(out), A.size(), {a, rv}, [this, a, rv](const Node& n) {
      accumulate(a, n.grad);
      Mat gr(1, n.grad.cols());
      for (int i = 0; i < n.grad.rows(); ++i)
        for (int j = 0; j < n.grad.cols(); ++j) gr(0, j) += n.grad(i, j);
      accumulate(rv, gr);
    });
  }

  // Repeat a (1, c) row vector r times.
  Var broadcast_rows(Var rv, int r) {
    const Mat& R = val(rv);
    Mat out(r, R.cols());
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < R.cols(); ++j) out(i, j) = R(0, j);
    return push(std::move(out), static_cast<uint64_t>(r) * R.cols(), {rv},
                [this, rv](const Node& n) {
                  Mat gr(1, n.grad.cols());
                  for (int i = 0; i < n.grad.rows(); ++i)
                    for (int j = 0; j < n.grad.cols(); ++j) gr(0, j) += n.grad(i, j);
                  accumulate(rv, gr);
                });
  }

  Var scale(Var a, double c) {
    Mat out = val(a);
    for (double& v : out.vec()) v *= c;
    return push(std::move(out), out.size(), {a}, [this, a, c](const Node& n) {
      Mat g = n.grad;
      for (double& v : g.vec()) v *= c;
      accumulate(a, g);
    });
  }

  Var add_scalar(Var a, double c) {
    Mat out = val(a);
    for (double& v : out.vec()) v += c;
    return push(std::move(out), out.size(), {a},
                [this, a](const Node& n) { accumulate(a, n.grad); });
  }

  Var tanh_(Var a) {
    Mat out = val(a);
    for (double& v : out.vec()) v = std::tanh(v);
    return push(std::move(out), out.size(), {a}, [this, a](const Node& n) {
      Mat g = n.grad;
      for (size_t i = 0; i < g.size(); ++i) {
        const double y = n.value.vec()[i];
        g.vec()[i] *= 1.0 - y * y;
      }
      accumulate(a, g);
    });
  }

  Var sigmoid(Var a) {
    Mat out = val(a);
    for (double& v : out.vec()) v = 1.0 / (1.0 + std::exp(-v));
    return push(std::move(out), out.size(), {a}, [this, a](const Node& n) {
      Mat g = n.grad;
      for (size_t i = 0; i < g.size(); ++i) {
        const double y = n.value.vec()[i];
        g.vec()[i] *= y * (1.0 - y);
      }
      accumulate(a, g);
    });
  }

  Var relu(Var a) {
    Mat out = val(a);
    for (double& v : out.vec()) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), out.size(), {a}, [this, a](const Node& n) {
      const Mat& A = val(a);
      Mat g = n.grad;
      for (size_t i = 0; i < g.size(); ++i)
        if (A.vec()[i] <= 0.0) g.vec()[i] = 0.0;
      accumulate(a, g);
    });
  }

  // log(x + eps); the guard keeps the op defined at 0.
  Var log_eps(Var a, double eps) {
    Mat out = val(a);
    for (double& v : out.vec()) v = std::log(v + eps);
    return push(std::move(out), out.size(), {a}, [this, a, eps](const Node& n) {
      const Mat& A = val(a);
      Mat g = n.grad;
      for (size_t i = 0; i < g.size(); ++i) g.vec()[i] /= A.vec()[i] + eps;
      accumulate(a, g);
    });
  }

  Var exp_(Var a) {
    Mat out = val(a);
    for (double& v : out.vec()) v = std::exp(v);
    return push(std::move(out), out.size(), {a}, [this, a](const Node& n) {
      Mat g = n.grad;
      for (size_t i = 0; i < g.size(); ++i) g.vec()[i] *= n.value.vec()[i];
      accumulate(a, g);
    });
  }

  Var square(Var a) {
    Mat out = val(a);
    for (double& v : out.vec()) v *= v;
    return push(std::move(out), out.size(), {a}, [this, a](const Node& n) {
      const Mat& A = val(a);
      Mat g = n.grad;
      for (size_t i = 0; i < g.size(); ++i) g.vec()[i] *= 2.0 * A.vec()[i];
      accumulate(a, g);
    });
  }

  // Row-wise softmax with max subtraction.
  Var softmax_rows(Var a) {
    Mat out = val(a);
    for (int i = 0; i < out.rows(); ++i) {
      double mx = out(i, 0);
      for (int j = 1; j < out.cols(); ++j) mx = std::max(mx, out(i, j));
      double sum = 0.0;
      for (int j = 0; j < out.cols(); ++j) {
        out(i, j) = std::exp(out(i, j) - mx);
        sum += out(i, j);
      }
      for (int j = 0; j < out.cols(); ++j) out(i, j) /= sum;
    }
    return push(std::move(out), 2 * out.size(), {a}, [this, a](const Node& n) {
      Mat g(n.grad.rows(), n.grad.cols());
      for (int i = 0; i < g.rows(); ++i) {
        double dot = 0.0;
        for (int j = 0; j < g.cols(); ++j) dot += n.grad(i, j) * n.value(i, j);
        for (int j = 0; j < g.cols(); ++j)
          g(i, j) = n.value(i, j) * (n.grad(i, j) - dot);
      }
      accumulate(a, g);
    });
  }

  Var transpose(Var a) {
    Mat out = ppt::transpose(val(a));
    return push(std::move(out), out.size(), {a}, [this, a](const Node& n) {
      accumulate(a, ppt::transpose(n.grad));
    });
  }

  Var concat_cols(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (A.rows() != B.rows()) {
      throw ArgumentError("Tape::concat_cols: row mismatch " + A.shape_str() + " vs " +
                          B.shape_str());
    }
    Mat out(A.rows(), A.cols() + B.cols());
    for (int i = 0; i < A.rows(); ++i) {
      for (int j = 0; j < A.cols(); ++j) out(i, j) = A(i, j);
      for (int j = 0; j < B.cols(); ++j) out(i, A.cols() + j) = B(i, j);
    }
    const int ac = A.cols();
    return push(std::move(out), out.size(), {a, b}, [this, a, b, ac](const Node& n) {
      Mat ga(n.grad.rows(), ac);
      Mat gb(n.grad.rows(), n.grad.cols() - ac);
      for (int i = 0; i < n.grad.rows(); ++i) {
        for (int j = 0; j < ac; ++j) ga(i, j) = n.grad(i, j);
        for (int j = ac; j < n.grad.cols(); ++j) gb(i, j - ac) = n.grad(i, j);
      }
      accumulate(a, ga);
      accumulate(b, gb);
    });
  }

  // Columns [c0, c1).
  Var slice_cols(Var a, int c0, int c1) {
    const Mat& A = val(a);
    if (c0 < 0 || c1 > A.cols() || c0 >= c1) {
      throw IndexError("Tape::slice_cols: [" + std::to_string(c0) + ", " + std::to_string(c1) +
                       ") of " + A.shape_str());
    }
    Mat out(A.rows(), c1 - c0);
    for (int i = 0; i < A.rows(); ++i)
      for (int j = c0; j < c1; ++j) out(i, j - c0) = A(i, j);
    return push(std::move(out), out.size(), {a}, [this, a, c0](const Node& n) {
      Mat ga(val(a).rows(), val(a).cols());
      for (int i = 0; i < n.grad.rows(); ++i)
        for (int j = 0; j < n.grad.cols(); ++j) ga(i, c0 + j) = n.grad(i, j);
      accumulate(a, ga);
    });
  }

  // Rows [r0, r1).
  Var slice_rows(Var a, int r0, int r1) {
    const Mat& A = val(a);
    if (r0 < 0 || r1 > A.rows() || r0 >= r1) {
      throw IndexError("Tape::slice_rows: [" + std::to_string(r0) + ", " + std::to_string(r1) +
                       ") of " + A.shape_str());
    }
    Mat out(r1 - r0, A.cols());
    for (int i = r0; i < r1; ++i)
      for (int j = 0; j < A.cols(); ++j) out(i - r0, j) = A(i, j);
    return push(std::move(out), out.size(), {a}, [this, a, r0](const Node& n) {
      Mat ga(val(a).rows(), val(a).cols());
      for (int i = 0; i < n.grad.rows(); ++i)
        for (int j = 0; j < n.grad.cols(); ++j) ga(r0 + i, j) = n.grad(i, j);
      accumulate(a, ga);
    });
  }

  Var concat_rows(Var a, Var b) {
    const Mat& A = val(a);
    const Mat& B = val(b);
    if (A.cols() != B.cols()) {
      throw ArgumentError("Tape::concat_rows: col mismatch " + A.shape_str() + " vs " +
                          B.shape_str());
    }
    Mat out(A.rows() + B.rows(), A.cols());
    for (int i = 0; i < A.rows(); ++i)
      for (int j = 0; j < A.cols(); ++j) out(i, j) = A(i, j);
    for (int i = 0; i < B.rows(); ++i)
      for (int j = 0; j < B.cols(); ++j) out(A.rows() + i, j) = B(i, j);
    const int ar = A.rows();
    return push(std::move(out), out.size(), {a, b}, [this, a, b, ar](const Node& n) {
      Mat ga(ar, n.grad.cols());
      Mat gb(n.grad.rows() - ar, n.grad.cols());
      for (int i = 0; i < ar; ++i)
        for (int j = 0; j < n.grad.cols(); ++j) ga(i, j) = n.grad(i, j);
      for (int i = ar; i < n.grad.rows(); ++i)
        for (int j = 0; j < n.grad.cols(); ++j) gb(i - ar, j) = n.grad(i, j);
      accumulate(a, ga);
      accumulate(b, gb);
    });
  }

  Var reshape(Var a, int r, int c) {
    const Mat& A = val(a);
    if (static_cast<size_t>(r) * c != A.size()) {
      throw ArgumentError("Tape::reshape: " + A.shape_str() + " to (" + std::to_string(r) + ", " +
                          std::to_string(c) + ")");
    }
    Mat out(r, c);
    out.vec() = A.vec();
    return push(std::move(out), out.size(), {a}, [this, a](const Node& n) {
      Mat ga(val(a).rows(), val(a).cols());
      ga.vec() = n.grad.vec();
      accumulate(a, ga);
    });
  }

  Var sum_all(Var a) {
    double s = 0.0;
    for (double v : val(a).vec()) s += v;
    Mat out(1, 1);
    out(0, 0) = s;
    return push(std::move(out), val(a).size(), {a}, [this, a](const Node& n) {
      Mat ga(val(a).rows(), val(a).cols(), n.grad(0, 0));
      accumulate(a, ga);
    });
  }

  Var mean_all(Var a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(val(a).size()));
  }

  // Column means: (r, c) -> (1, c).
  Var mean_rows(Var a) {
    const Mat& A = val(a);
    Mat out(1, A.cols());
    for (int i = 0; i < A.rows(); ++i)
      for (int j = 0; j < A.cols(); ++j) out(0, j) += A(i, j);
    for (int j = 0; j < A.cols(); ++j) out(0, j) /= A.rows();
    return push(std::move(out), A.size(), {a}, [this, a](const Node& n) {
      const int r = val(a).rows();
      Mat ga(r, n.grad.cols());
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < n.grad.cols(); ++j) ga(i, j) = n.grad(0, j) / r;
      accumulate(a, ga);
    });
  }

  // sqrt(sum(a^2)) -> (1, 1). The value is exact (0 for a zero input); eps
  // only guards the gradient's division at 0.
  Var l2norm_eps(Var a, double eps) {
    double s = 0.0;
    for (double v : val(a).vec()) s += v * v;
    Mat out(1, 1);
    out(0, 0) = std::sqrt(s);
    return push(std::move(out), val(a).size(), {a}, [this, a, eps](const Node& n) {
      const Mat& A = val(a);
      double s = eps;
      for (double v : A.vec()) s += v * v;
      const double denom = std::sqrt(s);
      Mat ga = A;
      for (double& v : ga.vec()) v *= n.grad(0, 0) / denom;
      accumulate(a, ga);
    });
  }

  // 3x3 single-channel convolution with zero 'same' padding.
  Var conv2d_same3(Var x, Var k) {
    const Mat& X = val(x);
    const Mat& K = val(k);
    if (K.rows() != 3 || K.cols() != 3) {
      throw ArgumentError("Tape::conv2d_same3: kernel must be 3x3, got " + K.shape_str());
    }
    Mat out(X.rows(), X.cols());
    for (int i = 0; i < X.rows(); ++i)
      for (int j = 0; j < X.cols(); ++j) {
        double s = 0.0;
        for (int di = -1; di <= 1; ++di)
          for (int dj = -1; dj <= 1; ++dj) {
            const int r = i + di;
            const int c = j + dj;
            if (r < 0 || r >= X.rows() || c < 0 || c >= X.cols()) continue;
            s += X(r, c) * K(di + 1, dj + 1);
          }
        out(i, j) = s;
      }
    return push(std::move(out), 9 * X.size(), {x, k}, [this, x, k](const Node& n) {
      const Mat& X = val(x);
      const Mat& K = val(k);
      Mat gx(X.rows(), X.cols());
      Mat gk(3, 3);
      for (int i = 0; i < X.rows(); ++i)
        for (int j = 0; j < X.cols(); ++j) {
          const double g = n.grad(i, j);
          if (g == 0.0) continue;
          for (int di = -1; di <= 1; ++di)
            for (int dj = -1; dj <= 1; ++dj) {
              const int r = i + di;
              const int c = j + dj;
              if (r < 0 || r >= X.rows() || c < 0 || c >= X.cols()) continue;
              gx(r, c) += g * K(di + 1, dj + 1);
              gk(di + 1, dj + 1) += g * X(r, c);
            }
        }
      accumulate(x, gx);
      accumulate(k, gk);
    });
  }

  // x * W + broadcast b. W: (in, out), b: (1, out).
  Var linear(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }

  void assert_finite(Var v, const char* stage) const {
    if (!val(v).all_finite()) {
      throw NumericalError(std::string("non-finite values after stage: ") + stage);
    }
  }

  // Backpropagate from a (1,1) loss node.
  void backward(Var loss) {
    const Mat& L = val(loss);
    if (L.rows() != 1 || L.cols() != 1) {
      throw ArgumentError("Tape::backward: loss must be (1, 1), got " + L.shape_str());
    }
    for (Node& n : nodes_) {
      n.grad = Mat(n.value.rows(), n.value.cols());
    }
    nodes_[loss.id].grad(0, 0) = 1.0;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.back) {
        n.back(n);
        work_ += 2 * n.cost;
      }
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    uint64_t cost = 0;
    std::function<void(const Node&)> back;
  };

  const Mat& val(Var v) const { return nodes_[v.id].value; }

  void accumulate(Var v, const Mat& g) {
    Mat& dst = nodes_[v.id].grad;
    for (size_t i = 0; i < dst.size(); ++i) dst.vec()[i] += g.vec()[i];
  }

  Var push(Mat value, uint64_t cost, std::initializer_list<Var>,
           std::function<void(const Node&)> back) {
    Node n;
    n.value = std::move(value);
    n.cost = cost;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    work_ += cost;
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<Mat*, Var>> bound_;
  uint64_t work_ = 0;
};

}  // namespace ppt::ad

#endif  // PPT_GRAPH_HPP_
