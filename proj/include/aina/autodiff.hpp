#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
// A Tape records the forward ops; backward() replays them in reverse and
// accumulates exact gradients. Node set is exactly what the point policy
// needs: dense linear algebra, softmax/layernorm rows, row/col slicing,
// and the vector-neuron specific column-triple ops.

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "aina/common.hpp"

namespace aina {
namespace ad {

using Mat = Eigen::MatrixXd;

class Tape {
 public:
  using Id = int;

  struct Node {
    Mat owned;
    const Mat* external = nullptr;  // parameter leaves reference model storage
    Mat grad;
    std::function<void(Tape&)> backward;  // accumulates into parent grads
    const Mat& val() const { return external ? *external : owned; }
  };

  const Mat& val(Id id) const { return nodes_[id].val(); }

  Mat& grad(Id id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.val().rows(), n.val().cols());
    return n.grad;
  }

  Id leaf(Mat v) {
    nodes_.push_back(Node{std::move(v), nullptr, {}, {}});
    return static_cast<Id>(nodes_.size()) - 1;
  }

  // Non-owning leaf; caller guarantees the matrix outlives the tape.
  Id param(const Mat& external) {
    nodes_.push_back(Node{{}, &external, {}, {}});
    return static_cast<Id>(nodes_.size()) - 1;
  }

  Id add(Id a, Id b) {
    return push(val(a) + val(b), [a, b](Tape& t) {
      t.grad(a) += t.grad(t.cursor_);
      t.grad(b) += t.grad(t.cursor_);
    });
  }

  Id sub(Id a, Id b) {
    return push(val(a) - val(b), [a, b](Tape& t) {
      t.grad(a) += t.grad(t.cursor_);
      t.grad(b) -= t.grad(t.cursor_);
    });
  }

  Id mul(Id a, Id b) {
    return push(val(a).cwiseProduct(val(b)), [a, b](Tape& t) {
      t.grad(a) += t.grad(t.cursor_).cwiseProduct(t.val(b));
      t.grad(b) += t.grad(t.cursor_).cwiseProduct(t.val(a));
    });
  }

  Id scale(Id a, double c) {
    return push(c * val(a), [a, c](Tape& t) { t.grad(a) += c * t.grad(t.cursor_); });
  }

  Id matmul(Id a, Id b) {
    if (val(a).cols() != val(b).rows()) throw ShapeMismatch("matmul");
    return push(val(a) * val(b), [a, b](Tape& t) {
      const Mat& gy = t.grad(t.cursor_);
      t.grad(a) += gy * t.val(b).transpose();
      t.grad(b) += t.val(a).transpose() * gy;
    });
  }

  Id transpose(Id a) {
    return push(val(a).transpose(), [a](Tape& t) { t.grad(a) += t.grad(t.cursor_).transpose(); });
  }

  // Broadcast a 1 x C row vector over every row of X.
  Id add_rowvec(Id x, Id r) {
    if (val(r).rows() != 1 || val(r).cols() != val(x).cols()) throw ShapeMismatch("add_rowvec");
    Mat y = val(x);
    y.rowwise() += val(r).row(0);
    return push(std::move(y), [x, r](Tape& t) {
      const Mat& gy = t.grad(t.cursor_);
      t.grad(x) += gy;
      t.grad(r) += gy.colwise().sum();
    });
  }

  Id relu(Id a) {
    return push(val(a).cwiseMax(0.0), [a](Tape& t) {
      t.grad(a) += t.grad(t.cursor_).cwiseProduct((t.val(a).array() > 0.0).cast<double>().matrix());
    });
  }

  Id softmax_rows(Id a) {
    const Mat& x = val(a);
    Mat y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Eigen::ArrayXd row = x.row(i).array() - x.row(i).maxCoeff();
      const Eigen::ArrayXd e = row.exp();
      y.row(i) = (e / e.sum()).matrix().transpose();
    }
    return push(std::move(y), [a](Tape& t) {
      const Mat& y = t.val(t.cursor_);
      const Mat& gy = t.grad(t.cursor_);
      Mat& ga = t.grad(a);
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const double s = gy.row(i).dot(y.row(i));
        ga.row(i) += (gy.row(i).array() - s).matrix().cwiseProduct(y.row(i));
      }
    });
  }

  // Per-row layer norm with learned 1 x C gain/bias.
  Id layer_norm_rows(Id x, Id gamma, Id beta, double eps = 1e-5) {
    const Mat& X = val(x);
    const Eigen::Index C = X.cols();
    if (val(gamma).cols() != C || val(beta).cols() != C) throw ShapeMismatch("layer_norm params");
    Mat xhat(X.rows(), C);
    Eigen::VectorXd inv_std(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double mu = X.row(i).mean();
      const double var = (X.row(i).array() - mu).square().mean();
      inv_std[i] = 1.0 / std::sqrt(var + eps);
      xhat.row(i) = (X.row(i).array() - mu) * inv_std[i];
    }
    Mat y = xhat;
    y.array().rowwise() *= val(gamma).row(0).array();
    y.rowwise() += val(beta).row(0);
    const Id id = push(std::move(y), {});
    nodes_[id].backward = [x, gamma, beta, xhat, inv_std](Tape& t) {
      using RowArray = Eigen::Array<double, 1, Eigen::Dynamic>;
      const Mat& gy = t.grad(t.cursor_);
      Mat& gx = t.grad(x);
      t.grad(gamma) += gy.cwiseProduct(xhat).colwise().sum();
      t.grad(beta) += gy.colwise().sum();
      for (Eigen::Index i = 0; i < gy.rows(); ++i) {
        const RowArray dxhat = gy.row(i).array() * t.val(gamma).row(0).array();
        const double m1 = dxhat.mean();
        const double m2 = (dxhat * xhat.row(i).array()).mean();
        gx.row(i) += (inv_std[i] * (dxhat - m1 - xhat.row(i).array() * m2)).matrix();
      }
    };
    return id;
  }

  Id slice_cols(Id a, Eigen::Index start, Eigen::Index n) {
    return push(val(a).middleCols(start, n), [a, start, n](Tape& t) {
      t.grad(a).middleCols(start, n) += t.grad(t.cursor_);
    });
  }

  Id slice_rows(Id a, Eigen::Index start, Eigen::Index n) {
    return push(val(a).middleRows(start, n), [a, start, n](Tape& t) {
      t.grad(a).middleRows(start, n) += t.grad(t.cursor_);
    });
  }

  Id concat_cols(const std::vector<Id>& parts) {
    Eigen::Index cols = 0;
    const Eigen::Index rows = val(parts.front()).rows();
    for (Id p : parts) cols += val(p).cols();
    Mat y(rows, cols);
    Eigen::Index at = 0;
    for (Id p : parts) {
      y.middleCols(at, val(p).cols()) = val(p);
      at += val(p).cols();
    }
    return push(std::move(y), [parts](Tape& t) {
      Eigen::Index at = 0;
      for (Id p : parts) {
        const Eigen::Index n = t.val(p).cols();
        t.grad(p) += t.grad(t.cursor_).middleCols(at, n);
        at += n;
      }
    });
  }

  // Adds the (smaller) matrix p onto rows [start, start + p.rows) of x.
  Id add_rows_at(Id x, Id p, Eigen::Index start) {
    if (val(p).cols() != val(x).cols()) throw ShapeMismatch("add_rows_at");
    Mat y = val(x);
    y.middleRows(start, val(p).rows()) += val(p);
    return push(std::move(y), [x, p, start](Tape& t) {
      const Mat& gy = t.grad(t.cursor_);
      t.grad(x) += gy;
      t.grad(p) += gy.middleRows(start, t.val(p).rows());
    });
  }

  // C x P -> C x 3P, each column repeated three times.
  Id repeat_cols3(Id a) {
    const Mat& A = val(a);
    Mat y(A.rows(), 3 * A.cols());
    for (Eigen::Index p = 0; p < A.cols(); ++p)
      for (int k = 0; k < 3; ++k) y.col(3 * p + k) = A.col(p);
    return push(std::move(y), [a](Tape& t) {
      const Mat& gy = t.grad(t.cursor_);
      Mat& ga = t.grad(a);
      for (Eigen::Index p = 0; p < ga.cols(); ++p)
        ga.col(p) += gy.col(3 * p) + gy.col(3 * p + 1) + gy.col(3 * p + 2);
    });
  }

  // C x 3P -> C x P, summing each column triple.
  Id sum_triples(Id a) {
    const Mat& A = val(a);
    if (A.cols() % 3 != 0) throw ShapeMismatch("sum_triples");
    Mat y(A.rows(), A.cols() / 3);
    for (Eigen::Index p = 0; p < y.cols(); ++p)
      y.col(p) = A.col(3 * p) + A.col(3 * p + 1) + A.col(3 * p + 2);
    return push(std::move(y), [a](Tape& t) {
      const Mat& gy = t.grad(t.cursor_);
      Mat& ga = t.grad(a);
      for (Eigen::Index p = 0; p < gy.cols(); ++p)
        for (int k = 0; k < 3; ++k) ga.col(3 * p + k) += gy.col(p);
    });
  }

  // C x 3P (point p in columns 3p..3p+2) -> P x 3C, where row p is the
  // row-major flattening of that point's C x 3 feature block.
  Id flatten_point_blocks(Id a) {
    const Mat& A = val(a);
    if (A.cols() % 3 != 0) throw ShapeMismatch("flatten_point_blocks");
    const Eigen::Index P = A.cols() / 3, C = A.rows();
    Mat y(P, 3 * C);
    for (Eigen::Index p = 0; p < P; ++p)
      for (Eigen::Index c = 0; c < C; ++c)
        for (int k = 0; k < 3; ++k) y(p, 3 * c + k) = A(c, 3 * p + k);
    return push(std::move(y), [a, P, C](Tape& t) {
      const Mat& gy = t.grad(t.cursor_);
      Mat& ga = t.grad(a);
      for (Eigen::Index p = 0; p < P; ++p)
        for (Eigen::Index c = 0; c < C; ++c)
          for (int k = 0; k < 3; ++k) ga(c, 3 * p + k) += gy(p, 3 * c + k);
    });
  }

  // Vector-neuron direction-gated projection. Q and K are C x 3P; for each
  // channel c and point p with q = Q(c, 3p..3p+2), k likewise:
  //   <q,k> >= 0        -> q
  //   ||k||^2 < 1e-24   -> 0
  //   otherwise         -> q - (<q,k>/||k||^2) k
  Id vn_gate(Id qid, Id kid) {
    const Mat& Q = val(qid);
    const Mat& K = val(kid);
    if (Q.rows() != K.rows() || Q.cols() != K.cols() || Q.cols() % 3 != 0)
      throw ShapeMismatch("vn_gate");
    Mat y(Q.rows(), Q.cols());
    for (Eigen::Index c = 0; c < Q.rows(); ++c) {
      for (Eigen::Index p = 0; p < Q.cols() / 3; ++p) {
        const Eigen::RowVector3d q = Q.block<1, 3>(c, 3 * p);
        const Eigen::RowVector3d k = K.block<1, 3>(c, 3 * p);
        const double dot = q.dot(k);
        if (dot >= 0.0)
          y.block<1, 3>(c, 3 * p) = q;
        else if (k.squaredNorm() < 1e-24)
          y.block<1, 3>(c, 3 * p).setZero();
        else
          y.block<1, 3>(c, 3 * p) = q - (dot / k.squaredNorm()) * k;
      }
    }
    return push(std::move(y), [qid, kid](Tape& t) {
      const Mat& Q = t.val(qid);
      const Mat& K = t.val(kid);
      const Mat& gy = t.grad(t.cursor_);
      Mat& gq = t.grad(qid);
      Mat& gk = t.grad(kid);
      for (Eigen::Index c = 0; c < Q.rows(); ++c) {
        for (Eigen::Index p = 0; p < Q.cols() / 3; ++p) {
          const Eigen::RowVector3d q = Q.block<1, 3>(c, 3 * p);
          const Eigen::RowVector3d k = K.block<1, 3>(c, 3 * p);
          const Eigen::RowVector3d g = gy.block<1, 3>(c, 3 * p);
          const double dot = q.dot(k);
          if (dot >= 0.0) {
            gq.block<1, 3>(c, 3 * p) += g;
          } else if (k.squaredNorm() >= 1e-24) {
            const double k2 = k.squaredNorm();
            const double alpha = dot / k2;
            gq.block<1, 3>(c, 3 * p) += g - (g.dot(k) / k2) * k;
            gk.block<1, 3>(c, 3 * p) += -alpha * g - (g.dot(k) / k2) * (q - 2.0 * alpha * k);
          }
        }
      }
    });
  }

  // Mean over all elements; result is 1x1.
  Id mean_all(Id a) {
    const double inv = 1.0 / static_cast<double>(val(a).size());
    Mat y(1, 1);
    y(0, 0) = val(a).sum() * inv;
    return push(std::move(y), [a, inv](Tape& t) {
      t.grad(a).array() += t.grad(t.cursor_)(0, 0) * inv;
    });
  }

  // Runs reverse accumulation from a scalar node.
  void backward(Id loss, double seed = 1.0) {
    if (val(loss).size() != 1) throw ShapeMismatch("backward expects a scalar node");
    grad(loss)(0, 0) = seed;
    for (Id id = loss; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backward && n.grad.size() != 0) {
        cursor_ = id;
        n.backward(*this);
      }
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  Id push(Mat value, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, std::move(back)});
    return static_cast<Id>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  Id cursor_ = -1;  // node whose backward fn is currently running
};

}  // namespace ad
}  // namespace aina
