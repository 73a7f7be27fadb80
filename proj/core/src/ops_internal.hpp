#pragma once

#include <Eigen/Core>
#include <string>

#include "mi2a/errors.hpp"
#include "mi2a/graph.hpp"

namespace mi2a::ops::detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

inline MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.raw(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.raw(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

inline void require_same_shape(const char* op, Var a, Var b) {
  require(a.shape() == b.shape(), std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
}

inline void require_rank(const char* op, Var a, std::size_t rank) {
  require(a.shape().size() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                        ", got " + shape_string(a.shape()));
}

inline void accumulate(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace mi2a::ops::detail
