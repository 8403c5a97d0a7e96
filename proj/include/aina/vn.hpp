#pragma once

// Vector-neuron primitives. A VNFeature is a C x 3 matrix: a list of C 3D
// vectors. Linear layers mix channels only (left multiplication), so a
// rotation applied to every vector commutes with the layer; activations use
// a direction-gated projection which is likewise SO(3)-equivariant.
//
// These plain functions define the semantics; the training path in
// policy.hpp evaluates the identical math through the autodiff tape (points
// batched as column triples).

#include <vector>

#include <Eigen/Dense>

#include "aina/common.hpp"

namespace aina {
namespace vn {

using VNFeature = Eigen::MatrixXd;  // C x 3

inline VNFeature vn_linear(const Eigen::MatrixXd& weights, const VNFeature& v) {
  if (weights.cols() != v.rows() || v.cols() != 3) throw ShapeMismatch("vn_linear");
  return weights * v;
}

// Per output channel c: q = (Wq V)_c, k = (Wk V)_c.
//   <q,k> >= 0      -> q
//   ||k|| < 1e-12   -> zero vector (when the gate would project)
//   otherwise       -> q - (<q,k>/||k||^2) k
inline VNFeature vn_activation(const VNFeature& v, const Eigen::MatrixXd& wq,
                               const Eigen::MatrixXd& wk) {
  if (v.cols() != 3 || wq.cols() != v.rows() || wk.cols() != v.rows() || wq.rows() != wk.rows())
    throw ShapeMismatch("vn_activation");
  const VNFeature q = wq * v;
  const VNFeature k = wk * v;
  VNFeature out(q.rows(), 3);
  for (Eigen::Index c = 0; c < q.rows(); ++c) {
    const Eigen::RowVector3d qc = q.row(c);
    const Eigen::RowVector3d kc = k.row(c);
    const double dot = qc.dot(kc);
    if (dot >= 0.0)
      out.row(c) = qc;
    else if (kc.squaredNorm() < 1e-24)
      out.row(c).setZero();
    else
      out.row(c) = qc - (dot / kc.squaredNorm()) * kc;
  }
  return out;
}

struct VNLayer {
  Eigen::MatrixXd linear;  // C_out x C_in
  Eigen::MatrixXd q;       // C_out x C_out
  Eigen::MatrixXd k;       // C_out x C_out
};

inline VNFeature vn_stack(const std::vector<VNLayer>& layers, VNFeature v) {
  for (const VNLayer& layer : layers) v = vn_activation(vn_linear(layer.linear, v), layer.q, layer.k);
  return v;
}

}  // namespace vn
}  // namespace aina
