#pragma once

// Toy-scale dual-branch attention: masked multi-head cross-attention between
// panorama and perspective token sets, its bidirectional residual step, and
// the noise-prediction training objective.

#include "pano4d/erp_geometry.hpp"

#include <Eigen/Dense>

#include <random>
#include <vector>

namespace pano4d::attention {

using Matrix = Eigen::MatrixXd;

/// Features laid out [frame][token][channel].
class FeatureTensor {
 public:
  FeatureTensor() = default;
  FeatureTensor(int frames, erp::TokenGrid grid, int channels, double fill = 0.0);

  int frames() const { return frames_; }
  int tokens() const { return grid_.count(); }
  int channels() const { return channels_; }
  erp::TokenGrid grid() const { return grid_; }

  double& at(int t, int n, int c) { return values_[index(t, n, c)]; }
  double at(int t, int n, int c) const { return values_[index(t, n, c)]; }
  std::size_t index(int t, int n, int c) const {
    return (static_cast<std::size_t>(t) * tokens() + n) * channels_ + c;
  }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  /// (frames * tokens) x channels view, frame-major rows.
  Matrix as_matrix() const;
  static FeatureTensor from_matrix(const Matrix& m, int frames, erp::TokenGrid grid);

  bool operator==(const FeatureTensor&) const = default;

 private:
  int frames_ = 0;
  erp::TokenGrid grid_{};
  int channels_ = 0;
  std::vector<double> values_;
};

/// Concatenates token sets frame by frame (grid becomes 1 x total).
FeatureTensor concat_tokens(const std::vector<FeatureTensor>& parts);

/// Boolean [query tokens x key tokens] pattern, replicated over frames.
class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(int queries, int keys, bool fill = false)
      : queries_(queries), keys_(keys), bits_(static_cast<std::size_t>(queries) * keys, fill ? 1 : 0) {}

  /// Panorama tokens query perspective tokens: rows p, columns q.
  static AttentionMask panorama_queries(const erp::CorrespondenceMask& m);
  /// Perspective tokens query panorama tokens: the transpose.
  static AttentionMask perspective_queries(const erp::CorrespondenceMask& m);
  /// Column-wise concatenation (keys from several views).
  static AttentionMask concat_keys(const std::vector<AttentionMask>& parts);

  int queries() const { return queries_; }
  int keys() const { return keys_; }
  bool operator()(int q, int k) const { return bits_[static_cast<std::size_t>(q) * keys_ + k] != 0; }
  void set(int q, int k, bool v = true) { bits_[static_cast<std::size_t>(q) * keys_ + k] = v ? 1 : 0; }
  AttentionMask transposed() const;

 private:
  int queries_ = 0;
  int keys_ = 0;
  std::vector<char> bits_;
};

/// Learnable projections, each channels x channels, applied as X * W.
struct AttentionWeights {
  Matrix query, key, value, output;

  static AttentionWeights identity(int channels);
  static AttentionWeights random(int channels, std::mt19937_64& rng, double scale = 0.5);
  /// Random query/key/value projections with an all-zero output projection.
  static AttentionWeights zero_output(int channels, std::mt19937_64& rng);
};

struct CrossAttentionConfig {
  int heads = 1;
  int head_dim = 1;
  AttentionMask mask;
  erp::SphericalPosEncoding query_encoding;  // per query token, dim == channels
  erp::SphericalPosEncoding key_encoding;    // per key token, dim == channels
  /// Joint spatial-temporal attention (every query frame sees every key
  /// frame). When false, queries only see keys of their own frame.
  bool joint_temporal = true;
};

/// Attention update (without the residual). Rows whose mask is entirely
/// false receive a zero update, so the residual path passes them through.
FeatureTensor cross_attend(const FeatureTensor& query, const FeatureTensor& kv, const CrossAttentionConfig& cfg,
                           const AttentionWeights& w);

/// Post-softmax weights for one head, (T*nq) x (T*nk).
Matrix attention_weights(const FeatureTensor& query, const FeatureTensor& kv, const CrossAttentionConfig& cfg,
                         const AttentionWeights& w, int head);

struct CrossAttentionGrad {
  AttentionWeights weights;  // d loss / d projection matrices
  FeatureTensor query;       // d loss / d query features
  FeatureTensor kv;          // d loss / d key-value features
};

/// Vector-Jacobian product of cross_attend for upstream gradient `grad_out`.
CrossAttentionGrad cross_attend_backward(const FeatureTensor& query, const FeatureTensor& kv,
                                         const CrossAttentionConfig& cfg, const AttentionWeights& w,
                                         const FeatureTensor& grad_out);

struct BidirectionalConfig {
  int heads = 1;
  int head_dim = 1;
  std::vector<erp::CorrespondenceMask> masks;               // one per perspective view
  erp::SphericalPosEncoding panorama_encoding;              // per panorama token
  std::vector<erp::SphericalPosEncoding> view_encodings;    // per view, per token
  AttentionWeights panorama_from_views;                     // panorama queries
  AttentionWeights view_from_panorama;                      // perspective queries, shared across views
  bool joint_temporal = true;
};

struct BranchFeatures {
  FeatureTensor panorama;
  std::vector<FeatureTensor> views;
};

/// Both directions read the same input features; updates are added
/// residually. Panorama queries attend jointly over the tokens of all views.
BranchFeatures bidirectional_step(const FeatureTensor& panorama, const std::vector<FeatureTensor>& views,
                                  const BidirectionalConfig& cfg);

/// Two-layer noise predictor: out = W2 * tanh(W1 * [z; t; y] + b1) + b2.
struct ToyDenoiser {
  Matrix w1, w2;
  Eigen::VectorXd b1, b2;

  static ToyDenoiser random(int latent_dim, int hidden, std::mt19937_64& rng);
  Eigen::VectorXd predict(const Eigen::VectorXd& noisy_latent, double timestep, double condition) const;
};

struct NoisePair {
  std::vector<double> noise;
  std::vector<double> prediction;
};

/// Mean squared residual between noise and prediction.
double noise_residual(const NoisePair& pair);

/// Panorama term plus the mean of the perspective terms.
double generation_loss(const NoisePair& panorama, const std::vector<NoisePair>& views);

}  // namespace pano4d::attention
