#pragma once

#include "pano4d/core.hpp"

#include <Eigen/Dense>

#include <random>
#include <span>
#include <vector>

namespace pano4d::spatial {

using Matrix = Eigen::MatrixXd;

enum class Activation { ReLU, SiLU };

struct FieldArchitecture {
  int hidden_layers = 4;
  int width = 128;
  int octaves = 6;  // sin/cos frequency octaves of the direction encoding
  Activation activation = Activation::SiLU;

  bool operator==(const FieldArchitecture&) const = default;
};

/// Small MLP mapping a unit view direction to a strictly positive depth:
/// periodic direction encoding -> hidden layers -> softplus.
class GeometricField {
 public:
  GeometricField() = default;
  /// He-initialized hidden layers; the output bias is set so an untrained
  /// field returns roughly `initial_depth` everywhere.
  GeometricField(FieldArchitecture arch, std::mt19937_64& rng, double initial_depth);

  const FieldArchitecture& architecture() const { return arch_; }
  int input_dim() const { return 3 + 6 * arch_.octaves; }

  /// [v, sin(2^k v), cos(2^k v)] rows for k < octaves.
  static Matrix encode(std::span<const Vec3> dirs, int octaves);

  struct Cache {
    std::vector<Matrix> pre;   // per hidden layer, before activation
    std::vector<Matrix> post;  // input followed by each hidden activation
    Eigen::VectorXd out_pre;
  };

  Eigen::VectorXd forward(const Matrix& encoded, Cache* cache = nullptr) const;
  double evaluate(const Vec3& dir) const;

  /// Accumulates d loss / d parameters into `grad` (size parameter_count()).
  void backward(const Cache& cache, const Eigen::VectorXd& grad_out, std::span<double> grad) const;

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

 private:
  struct Layer {
    std::size_t weight_offset;
    std::size_t bias_offset;
    int in;
    int out;
  };

  Eigen::Map<const Matrix> weight(const Layer& l) const { return {params_.data() + l.weight_offset, l.in, l.out}; }
  Eigen::Map<const Eigen::VectorXd> bias(const Layer& l) const { return {params_.data() + l.bias_offset, l.out}; }

  FieldArchitecture arch_{};
  std::vector<Layer> layers_;  // hidden layers then the scalar output layer
  std::vector<double> params_;
};

}  // namespace pano4d::spatial
