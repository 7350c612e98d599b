#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dpdl {

// Dense row-major matrix of doubles. Rows are the natural unit (one mixture
// component, one sample) so row() hands out spans.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_sum_exp(std::span<const double> v);

// Normalized exp(v - logsumexp(v)).
std::vector<double> softmax(std::span<const double> v);

double sigmoid(double z);

// log(1 + exp(z)) without overflow.
double softplus(double z);

// Binary cross-entropy with logits: softplus(z) - y*z, y in [0, 1].
double bce_with_logits(double logit, double target);

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);

bool all_finite(std::span<const double> v);

// argmax with ties resolved to the lowest index.
std::size_t argmax(std::span<const double> v);

}  // namespace dpdl
