#include <functional>

#include <catch2/catch_amalgamated.hpp>

#include "aina/autodiff.hpp"
#include "aina/rng.hpp"
#include "aina/vn.hpp"

using namespace aina;
using ad::Mat;
using ad::Tape;

namespace {

Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.uniform(-1, 1);
  return m;
}

// Checks d(scalar)/d(every input entry) against central differences. The
// builder receives leaf ids in input order and returns the scalar node.
void check_gradients(const std::vector<Mat>& inputs,
                     const std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>& build,
                     double h = 1e-6, double tol = 2e-5) {
  auto run = [&](const std::vector<Mat>& vals, Tape* keep, std::vector<Tape::Id>* ids_out) {
    Tape tape;
    std::vector<Tape::Id> ids;
    for (const Mat& m : vals) ids.push_back(tape.leaf(m));
    const Tape::Id loss = build(tape, ids);
    const double value = tape.val(loss)(0, 0);
    if (keep) {
      tape.backward(loss);
      *ids_out = ids;
      *keep = std::move(tape);
    }
    return value;
  };

  Tape tape;
  std::vector<Tape::Id> ids;
  run(inputs, &tape, &ids);
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (Eigen::Index r = 0; r < inputs[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < inputs[i].cols(); ++c) {
        std::vector<Mat> plus = inputs, minus = inputs;
        plus[i](r, c) += h;
        minus[i](r, c) -= h;
        const double fd = (run(plus, nullptr, nullptr) - run(minus, nullptr, nullptr)) / (2 * h);
        const double an = tape.grad(ids[i])(r, c);
        REQUIRE(an == Catch::Approx(fd).margin(tol).epsilon(1e-4));
      }
    }
  }
}

}  // namespace

TEST_CASE("elementwise and matmul gradients") {
  Rng rng(1);
  const Mat a = random_mat(rng, 3, 4), b = random_mat(rng, 3, 4), w = random_mat(rng, 4, 2);
  check_gradients({a, b, w}, [](Tape& t, const std::vector<Tape::Id>& in) {
    const auto sum = t.add(in[0], in[1]);
    const auto diff = t.sub(sum, in[1]);
    const auto prod = t.mul(diff, in[1]);
    const auto scaled = t.scale(prod, 0.7);
    const auto mm = t.matmul(scaled, in[2]);
    return t.mean_all(t.mul(mm, mm));
  });
}

TEST_CASE("transpose and add_rowvec gradients") {
  Rng rng(2);
  const Mat x = random_mat(rng, 4, 3), r = random_mat(rng, 1, 4);
  check_gradients({x, r}, [](Tape& t, const std::vector<Tape::Id>& in) {
    const auto xt = t.transpose(in[0]);  // 3x4
    const auto y = t.add_rowvec(xt, in[1]);
    return t.mean_all(t.mul(y, y));
  });
}

TEST_CASE("relu gradient away from the kink") {
  Rng rng(3);
  Mat x = random_mat(rng, 5, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (std::abs(x.data()[i]) < 0.05) x.data()[i] = 0.1;  // keep FD off the kink
  check_gradients({x}, [](Tape& t, const std::vector<Tape::Id>& in) {
    const auto y = t.relu(in[0]);
    return t.mean_all(t.mul(y, y));
  });
}

TEST_CASE("softmax rows: forward normalization and gradient") {
  Rng rng(4);
  const Mat x = random_mat(rng, 4, 6, 2.0);
  Tape tape;
  const auto id = tape.softmax_rows(tape.leaf(x));
  const Mat y = tape.val(id);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    REQUIRE(y.row(i).sum() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(y.row(i).minCoeff() > 0.0);
  }
  const Mat mixer = random_mat(rng, 6, 2);
  check_gradients({x, mixer}, [](Tape& t, const std::vector<Tape::Id>& in) {
    const auto soft = t.softmax_rows(in[0]);
    const auto mixed = t.matmul(soft, in[1]);
    return t.mean_all(t.mul(mixed, mixed));
  });
}

TEST_CASE("layer norm rows: forward statistics and gradient") {
  Rng rng(5);
  const Mat x = random_mat(rng, 5, 8, 2.0);
  const Mat gamma = random_mat(rng, 1, 8), beta = random_mat(rng, 1, 8);
  {
    Tape tape;
    Mat ones = Mat::Ones(1, 8), zeros = Mat::Zero(1, 8);
    const auto y = tape.layer_norm_rows(tape.leaf(x), tape.leaf(ones), tape.leaf(zeros));
    const Mat& v = tape.val(y);
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      REQUIRE(v.row(i).mean() == Catch::Approx(0.0).margin(1e-12));
      REQUIRE(v.row(i).squaredNorm() / 8 == Catch::Approx(1.0).margin(1e-4));  // eps shrinks it slightly
    }
  }
  check_gradients({x, gamma, beta}, [](Tape& t, const std::vector<Tape::Id>& in) {
    const auto y = t.layer_norm_rows(in[0], in[1], in[2]);
    return t.mean_all(t.mul(y, y));
  });
}

TEST_CASE("slicing, concatenation and partial row add gradients") {
  Rng rng(6);
  const Mat x = random_mat(rng, 6, 8), p = random_mat(rng, 2, 8);
  check_gradients({x, p}, [](Tape& t, const std::vector<Tape::Id>& in) {
    const auto with_rows = t.add_rows_at(in[0], in[1], 1);
    const auto left = t.slice_cols(with_rows, 0, 3);
    const auto right = t.slice_cols(with_rows, 3, 5);
    const auto swapped = t.concat_cols({right, left});
    const auto top = t.slice_rows(swapped, 0, 4);
    return t.mean_all(t.mul(top, top));
  });
}

TEST_CASE("column-triple ops gradients") {
  Rng rng(7);
  const Mat a = random_mat(rng, 3, 4);        // for repeat: C x P
  const Mat b = random_mat(rng, 3, 12);       // for sum/flatten: C x 3P
  check_gradients({a, b}, [](Tape& t, const std::vector<Tape::Id>& in) {
    const auto rep = t.repeat_cols3(in[0]);          // 3 x 12
    const auto mixed = t.mul(rep, in[1]);            // 3 x 12
    const auto summed = t.sum_triples(mixed);        // 3 x 4
    const auto flat = t.flatten_point_blocks(in[1]); // 4 x 9
    const auto joined = t.concat_cols({summed, t.transpose(flat)});
    return t.mean_all(t.mul(joined, joined));
  });
}

TEST_CASE("flatten_point_blocks layout is the row-major per-point flatten") {
  Rng rng(8);
  const Mat v = random_mat(rng, 4, 6);  // C=4, P=2
  Tape tape;
  const Mat& flat = tape.val(tape.flatten_point_blocks(tape.leaf(v)));
  REQUIRE(flat.rows() == 2);
  REQUIRE(flat.cols() == 12);
  for (int p = 0; p < 2; ++p)
    for (int c = 0; c < 4; ++c)
      for (int k = 0; k < 3; ++k) REQUIRE(flat(p, 3 * c + k) == v(c, 3 * p + k));
}

TEST_CASE("vn_gate gradient through both branches") {
  Rng rng(9);
  // Random Q, K hit a mix of pass-through and projection branches; keep
  // clear of the dot ~ 0 boundary so central differences stay valid.
  Mat q = random_mat(rng, 4, 9), k = random_mat(rng, 4, 9);
  for (Eigen::Index c = 0; c < 4; ++c) {
    for (Eigen::Index p = 0; p < 3; ++p) {
      const Eigen::RowVector3d qc = q.block<1, 3>(c, 3 * p), kc = k.block<1, 3>(c, 3 * p);
      if (std::abs(qc.dot(kc)) < 0.05) q.block<1, 3>(c, 3 * p) = 2.0 * qc + kc;
    }
  }
  check_gradients({q, k}, [](Tape& t, const std::vector<Tape::Id>& in) {
    const auto y = t.vn_gate(in[0], in[1]);
    return t.mean_all(t.mul(y, y));
  });
}

TEST_CASE("vn_gate forward matches the plain vector-neuron activation") {
  Rng rng(10);
  const int C = 5;
  const Mat wq = random_mat(rng, C, C), wk = random_mat(rng, C, C);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat v = random_mat(rng, C, 3);
    const Mat plain = vn::vn_activation(v, wq, wk);
    Tape tape;
    const auto vid = tape.leaf(v);
    const auto gated =
        tape.vn_gate(tape.matmul(tape.leaf(wq), vid), tape.matmul(tape.leaf(wk), vid));
    REQUIRE((tape.val(gated) - plain).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("backward accumulates through shared nodes") {
  // loss = mean((x + x)^2) -> dloss/dx = 8x/n
  Rng rng(11);
  const Mat x = random_mat(rng, 3, 3);
  Tape tape;
  const auto xid = tape.leaf(x);
  const auto sum = tape.add(xid, xid);
  const auto loss = tape.mean_all(tape.mul(sum, sum));
  tape.backward(loss);
  const Mat expected = 8.0 * x / 9.0;
  REQUIRE((tape.grad(xid) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward seed scales gradients linearly") {
  Rng rng(12);
  const Mat x = random_mat(rng, 2, 5);
  Mat g1, g3;
  for (double seed : {1.0, 3.0}) {
    Tape tape;
    const auto xid = tape.leaf(x);
    const auto loss = tape.mean_all(tape.mul(xid, xid));
    tape.backward(loss, seed);
    (seed == 1.0 ? g1 : g3) = tape.grad(xid);
  }
  REQUIRE((3.0 * g1 - g3).cwiseAbs().maxCoeff() < 1e-14);
}
