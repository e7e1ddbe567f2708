#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace contramod::nn {

/// Row-major dense matrix. Sequences are stored time-major: row t*B + b holds
/// time step t of batch item b, columns are features/channels.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
bool all_finite(const Mat<S>& m) {
  return m.allFinite();
}

/// Numerically stable row-wise softmax.
template <typename S>
Mat<S> softmax_rows(const Mat<S>& logits) {
  Mat<S> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const S m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace contramod::nn
