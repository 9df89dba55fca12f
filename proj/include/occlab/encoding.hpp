#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace occlab::fields {

// Fourier feature encoding: x followed by sin(2^j pi x), cos(2^j pi x) for
// j = 0..bands-1, per component. Output dimension is 3 + 6*bands.
inline int encoded_dim(int bands) { return 3 + 6 * bands; }

inline Eigen::RowVectorXd positional_encode_point(const Eigen::Vector3d& x, int bands) {
  Eigen::RowVectorXd out(encoded_dim(bands));
  out.segment<3>(0) = x.transpose();
  int col = 3;
  double freq = M_PI;
  for (int j = 0; j < bands; ++j) {
    for (int k = 0; k < 3; ++k) out(col + k) = std::sin(freq * x(k));
    for (int k = 0; k < 3; ++k) out(col + 3 + k) = std::cos(freq * x(k));
    col += 6;
    freq *= 2.0;
  }
  return out;
}

// Batch version; rows of `points` are 3D positions (or unit directions).
inline Eigen::MatrixXd positional_encode(const Eigen::MatrixXd& points, int bands) {
  Eigen::MatrixXd out(points.rows(), encoded_dim(bands));
  for (Eigen::Index r = 0; r < points.rows(); ++r)
    out.row(r) = positional_encode_point(points.row(r).transpose(), bands);
  return out;
}

}  // namespace occlab::fields
