#pragma once

#include <Eigen/Core>
#include <vector>

namespace dcond {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatrixF = RowMatrix<float>;
using MatrixD = RowMatrix<double>;

/// Frames x classes of natural-log probabilities. The blank is the last column.
using Posteriorgram = MatrixD;

/// Class indices in [0, C-1); the blank is never part of a label sequence.
using LabelSeq = std::vector<int>;

}  // namespace dcond
