#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace voltreg {

template <typename Scalar>
using CVectorT = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;
template <typename Scalar>
using CMatrixT = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

using Complex = std::complex<double>;
using CVector = CVectorT<double>;
using CMatrix = CMatrixT<double>;
using CSparse = Eigen::SparseMatrix<Complex>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Tap position of every tap channel, in model order.
using TapVector = std::vector<int>;

}  // namespace voltreg
