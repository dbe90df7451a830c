#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace stf {

// Thrown when operands disagree in dimension or a contract precondition fails.
class DimensionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when a matrix that must be symmetric positive definite is not.
class DefinitenessError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Thrown when an iterative weight search fails to converge; carries the best iterate.
class OptimizerError : public std::runtime_error {
public:
  OptimizerError(const std::string& what, Eigen::VectorXd best_iterate)
      : std::runtime_error(what), best(std::move(best_iterate)) {}
  Eigen::VectorXd best;
};

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
  return 0.5 * (m + m.transpose());
}

// Symmetry within 1e-10 * max|M| (absolute when M is all zero).
inline bool is_symmetric(const Eigen::MatrixXd& m, double rel_tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  const double scale = m.cwiseAbs().maxCoeff();
  const double tol = scale > 0.0 ? rel_tol * scale : rel_tol;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol;
}

// Cholesky of a symmetric positive definite matrix; symmetrizes first,
// throws DefinitenessError on failure.
inline Eigen::LLT<Eigen::MatrixXd> spd_cholesky(const Eigen::MatrixXd& m,
                                                const char* what = "matrix") {
  if (!is_symmetric(m)) {
    throw DefinitenessError(std::string(what) + " is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(symmetrized(m));
  if (llt.info() != Eigen::Success) {
    throw DefinitenessError(std::string(what) + " is not positive definite");
  }
  return llt;
}

inline double log_det_from_cholesky(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seedable generator for a (seed, stream) pair. Streams decorrelate the
// noise channels of one experiment run; a generator instance must not be
// shared across threads.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(~stream)));
}

}  // namespace stf
