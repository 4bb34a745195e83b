#pragma once

#include <Eigen/Dense>
#include <initializer_list>

namespace hlab {

// Spatial dimension is at most 3 everywhere in this library.  Fixing the
// capacity lets Eigen keep these on the stack while the runtime dimension
// stays flexible.
inline constexpr int max_dim = 3;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, max_dim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                          Eigen::ColMajor, max_dim, max_dim>;

inline Vec make_vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

/// Hilbert-Schmidt (Frobenius) norm; the convention used for every matrix
/// sup-norm that enters a derived constant.
inline double hs_norm(const Mat& m) { return m.norm(); }

inline bool all_finite(const Vec& v) { return v.allFinite(); }
inline bool all_finite(const Mat& m) { return m.allFinite(); }

/// Smallest eigenvalue of a symmetric matrix (d <= 3).
inline double min_eigenvalue_sym(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue_sym(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace hlab
