#pragma once

// Independent reference computations for the test suites. Everything here
// is written with plain loops so it shares no code path with the library.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "dpfed/core_math.hpp"
#include "dpfed/datasets.hpp"

namespace oracle {

inline double hand_mse(const Eigen::VectorXd& theta, const Eigen::MatrixXd& x,
                       const Eigen::VectorXd& y) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double pred = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) pred += x(i, j) * theta[j];
    total += (pred - y[i]) * (pred - y[i]);
  }
  return total / static_cast<double>(x.rows());
}

inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& theta, double h) {
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Eigen::VectorXd up = theta;
    Eigen::VectorXd down = theta;
    up[j] += h;
    down[j] -= h;
    g[j] = (f(up) - f(down)) / (2.0 * h);
  }
  return g;
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
inline double power_iteration(const Eigen::MatrixXd& a, int iterations = 20000) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(a.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += 0.01 * static_cast<double>(i);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd w = a * v;
    const double next = v.dot(w);
    v = w.normalized();
    if (it > 10 && std::abs(next - lambda) <= 1e-15 * std::abs(next)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

struct Extremes {
  double min;
  double max;
};

/// Smallest eigenvalue by power iteration on the shifted matrix max*I - A.
inline Extremes eigen_extremes(const Eigen::MatrixXd& a) {
  const double top = power_iteration(a);
  const Eigen::MatrixXd shifted =
      top * Eigen::MatrixXd::Identity(a.rows(), a.cols()) - a;
  return {top - power_iteration(shifted), top};
}

inline Eigen::MatrixXd pooled_hessian(const std::vector<dpfed::ClientShard>& shards) {
  const auto p = shards.front().dim();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
  double n = 0.0;
  for (const auto& s : shards) {
    for (Eigen::Index i = 0; i < s.features.rows(); ++i) {
      for (Eigen::Index a = 0; a < p; ++a) {
        for (Eigen::Index b = 0; b < p; ++b) h(a, b) += s.features(i, a) * s.features(i, b);
      }
    }
    n += static_cast<double>(s.size());
  }
  return (2.0 / n) * h;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> d;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = d(gen);
  }
  return m;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& gen, Eigen::Index size, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = d(gen);
  return v;
}

inline double relative_error(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

inline double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dpfed_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

  std::filesystem::path write(const std::string& name, const std::string& text) const {
    const auto file = path_ / name;
    std::ofstream(file, std::ios::binary) << text;
    return file;
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace oracle
