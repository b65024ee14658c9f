#include "pano4d/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace pano4d::attention {

FeatureTensor::FeatureTensor(int frames, erp::TokenGrid grid, int channels, double fill)
    : frames_(frames), grid_(grid), channels_(channels) {
  if (frames < 1 || grid.rows < 1 || grid.cols < 1 || channels < 1) {
    throw ArgumentError("feature tensor dimensions must be positive");
  }
  values_.assign(static_cast<std::size_t>(frames) * grid.count() * channels, fill);
}

Matrix FeatureTensor::as_matrix() const {
  Matrix m(frames_ * tokens(), channels_);
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < channels_; ++c) m(r, c) = values_[static_cast<std::size_t>(r) * channels_ + c];
  return m;
}

FeatureTensor FeatureTensor::from_matrix(const Matrix& m, int frames, erp::TokenGrid grid) {
  FeatureTensor f(frames, grid, static_cast<int>(m.cols()));
  if (m.rows() != frames * grid.count()) throw ArgumentError("matrix rows do not match frames x tokens");
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) f.values_[static_cast<std::size_t>(r) * m.cols() + c] = m(r, c);
  return f;
}

FeatureTensor concat_tokens(const std::vector<FeatureTensor>& parts) {
  if (parts.empty()) throw ArgumentError("nothing to concatenate");
  int total = 0;
  for (const auto& p : parts) {
    if (p.frames() != parts[0].frames() || p.channels() != parts[0].channels()) {
      throw ArgumentError("concatenated feature tensors must share frames and channels");
    }
    total += p.tokens();
  }
  FeatureTensor out(parts[0].frames(), {1, total}, parts[0].channels());
  for (int t = 0; t < out.frames(); ++t) {
    int offset = 0;
    for (const auto& p : parts) {
      for (int n = 0; n < p.tokens(); ++n)
        for (int c = 0; c < p.channels(); ++c) out.at(t, offset + n, c) = p.at(t, n, c);
      offset += p.tokens();
    }
  }
  return out;
}

AttentionMask AttentionMask::panorama_queries(const erp::CorrespondenceMask& m) {
  AttentionMask a(m.pano_tokens(), m.persp_tokens());
  for (int p = 0; p < m.pano_tokens(); ++p)
    for (int q = 0; q < m.persp_tokens(); ++q) a.set(p, q, m(p, q));
  return a;
}

AttentionMask AttentionMask::perspective_queries(const erp::CorrespondenceMask& m) {
  return panorama_queries(m).transposed();
}

AttentionMask AttentionMask::concat_keys(const std::vector<AttentionMask>& parts) {
  if (parts.empty()) throw ArgumentError("nothing to concatenate");
  int keys = 0;
  for (const auto& p : parts) {
    if (p.queries() != parts[0].queries()) throw ArgumentError("concatenated masks must share query count");
    keys += p.keys();
  }
  AttentionMask out(parts[0].queries(), keys);
  int offset = 0;
  for (const auto& p : parts) {
    for (int q = 0; q < p.queries(); ++q)
      for (int k = 0; k < p.keys(); ++k) out.set(q, offset + k, p(q, k));
    offset += p.keys();
  }
  return out;
}

AttentionMask AttentionMask::transposed() const {
  AttentionMask t(keys_, queries_);
  for (int q = 0; q < queries_; ++q)
    for (int k = 0; k < keys_; ++k) t.set(k, q, (*this)(q, k));
  return t;
}

AttentionWeights AttentionWeights::identity(int channels) {
  const Matrix eye = Matrix::Identity(channels, channels);
  return {eye, eye, eye, eye};
}

AttentionWeights AttentionWeights::random(int channels, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale / std::sqrt(static_cast<double>(channels)));
  auto draw = [&] {
    Matrix m(channels, channels);
    for (int i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
  };
  AttentionWeights w;
  w.query = draw();
  w.key = draw();
  w.value = draw();
  w.output = draw();
  return w;
}

AttentionWeights AttentionWeights::zero_output(int channels, std::mt19937_64& rng) {
  AttentionWeights w = random(channels, rng);
  w.output.setZero();
  return w;
}

namespace {

// Intermediate products shared by the forward and backward passes.
struct Forward {
  Matrix xq, xk, xv;  // inputs (query/key with encodings added)
  Matrix q, k, v;     // projections
  std::vector<Matrix> probs;  // per head
  Matrix heads_out;           // concat of A_h V_h
  Matrix out;
};

void check_shapes(const FeatureTensor& query, const FeatureTensor& kv, const CrossAttentionConfig& cfg,
                  const AttentionWeights& w) {
  const int c = query.channels();
  if (kv.channels() != c) throw ArgumentError("query and key/value channel counts differ");
  if (query.frames() != kv.frames()) throw ArgumentError("query and key/value frame counts differ");
  if (cfg.heads < 1 || cfg.head_dim < 1 || cfg.heads * cfg.head_dim != c) {
    throw ArgumentError("heads * head_dim must equal the channel count");
  }
  if (cfg.mask.queries() != query.tokens() || cfg.mask.keys() != kv.tokens()) {
    throw ArgumentError("attention mask is " + std::to_string(cfg.mask.queries()) + "x" +
                        std::to_string(cfg.mask.keys()) + " but tokens are " + std::to_string(query.tokens()) + "x" +
                        std::to_string(kv.tokens()));
  }
  auto check_enc = [&](const erp::SphericalPosEncoding& e, int tokens, const char* which) {
    if (e.dim == 0) return;
    if (e.dim != c || static_cast<int>(e.count()) != tokens) {
      throw ArgumentError(std::string(which) + " encoding does not match tokens x channels");
    }
  };
  check_enc(cfg.query_encoding, query.tokens(), "query");
  check_enc(cfg.key_encoding, kv.tokens(), "key");
  for (const Matrix* m : {&w.query, &w.key, &w.value, &w.output}) {
    if (m->rows() != c || m->cols() != c) throw ArgumentError("projection matrices must be channels x channels");
  }
}

Matrix with_encoding(const FeatureTensor& f, const erp::SphericalPosEncoding& enc) {
  Matrix m = f.as_matrix();
  if (enc.dim == 0) return m;
  for (int t = 0; t < f.frames(); ++t)
    for (int n = 0; n < f.tokens(); ++n)
      for (int c = 0; c < f.channels(); ++c) m(t * f.tokens() + n, c) += enc.row(n)[c];
  return m;
}

bool allowed(const CrossAttentionConfig& cfg, int nq, int nk, int row, int col) {
  if (!cfg.joint_temporal && row / nq != col / nk) return false;
  return cfg.mask(row % nq, col % nk);
}

Forward run_forward(const FeatureTensor& query, const FeatureTensor& kv, const CrossAttentionConfig& cfg,
                    const AttentionWeights& w) {
  check_shapes(query, kv, cfg, w);
  Forward f;
  f.xq = with_encoding(query, cfg.query_encoding);
  f.xk = with_encoding(kv, cfg.key_encoding);
  f.xv = kv.as_matrix();
  f.q = f.xq * w.query;
  f.k = f.xk * w.key;
  f.v = f.xv * w.value;
  const int nq = query.tokens(), nk = kv.tokens();
  const auto rows = f.q.rows(), cols = f.k.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
  f.heads_out = Matrix::Zero(rows, query.channels());
  for (int h = 0; h < cfg.heads; ++h) {
    const auto qh = f.q.middleCols(h * cfg.head_dim, cfg.head_dim);
    const auto kh = f.k.middleCols(h * cfg.head_dim, cfg.head_dim);
    const auto vh = f.v.middleCols(h * cfg.head_dim, cfg.head_dim);
    Matrix scores = (qh * kh.transpose()) * scale;
    Matrix probs = Matrix::Zero(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (allowed(cfg, nq, nk, static_cast<int>(i), static_cast<int>(j))) mx = std::max(mx, scores(i, j));
      }
      if (!std::isfinite(mx)) continue;  // fully masked row: zero update
      double sum = 0.0;
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (!allowed(cfg, nq, nk, static_cast<int>(i), static_cast<int>(j))) continue;
        probs(i, j) = std::exp(scores(i, j) - mx);
        sum += probs(i, j);
      }
      probs.row(i) /= sum;
    }
    f.heads_out.middleCols(h * cfg.head_dim, cfg.head_dim) = probs * vh;
    f.probs.push_back(std::move(probs));
  }
  f.out = f.heads_out * w.output;
  return f;
}

}  // namespace

FeatureTensor cross_attend(const FeatureTensor& query, const FeatureTensor& kv, const CrossAttentionConfig& cfg,
                           const AttentionWeights& w) {
  return FeatureTensor::from_matrix(run_forward(query, kv, cfg, w).out, query.frames(), query.grid());
}

Matrix attention_weights(const FeatureTensor& query, const FeatureTensor& kv, const CrossAttentionConfig& cfg,
                         const AttentionWeights& w, int head) {
  if (head < 0 || head >= cfg.heads) throw ArgumentError("head index out of range");
  return run_forward(query, kv, cfg, w).probs[head];
}

CrossAttentionGrad cross_attend_backward(const FeatureTensor& query, const FeatureTensor& kv,
                                         const CrossAttentionConfig& cfg, const AttentionWeights& w,
                                         const FeatureTensor& grad_out) {
  if (grad_out.frames() != query.frames() || grad_out.tokens() != query.tokens() ||
      grad_out.channels() != query.channels()) {
    throw ArgumentError("output gradient must match the query shape");
  }
  const Forward f = run_forward(query, kv, cfg, w);
  const Matrix g = grad_out.as_matrix();
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));

  CrossAttentionGrad grad;
  grad.weights.output = f.heads_out.transpose() * g;
  const Matrix d_heads = g * w.output.transpose();
  Matrix dq = Matrix::Zero(f.q.rows(), f.q.cols());
  Matrix dk = Matrix::Zero(f.k.rows(), f.k.cols());
  Matrix dv = Matrix::Zero(f.v.rows(), f.v.cols());
  for (int h = 0; h < cfg.heads; ++h) {
    const Eigen::Index c0 = h * cfg.head_dim;
    const auto qh = f.q.middleCols(c0, cfg.head_dim);
    const auto kh = f.k.middleCols(c0, cfg.head_dim);
    const auto vh = f.v.middleCols(c0, cfg.head_dim);
    const auto doh = d_heads.middleCols(c0, cfg.head_dim);
    const Matrix& a = f.probs[h];
    const Matrix da = doh * vh.transpose();
    dv.middleCols(c0, cfg.head_dim) += a.transpose() * doh;
    // Softmax backward; masked entries have a == 0 and drop out.
    const Eigen::VectorXd row_dot = (da.cwiseProduct(a)).rowwise().sum();
    const Matrix ds = a.cwiseProduct(da.colwise() - row_dot) * scale;
    dq.middleCols(c0, cfg.head_dim) += ds * kh;
    dk.middleCols(c0, cfg.head_dim) += ds.transpose() * qh;
  }
  grad.weights.query = f.xq.transpose() * dq;
  grad.weights.key = f.xk.transpose() * dk;
  grad.weights.value = f.xv.transpose() * dv;
  grad.query = FeatureTensor::from_matrix(dq * w.query.transpose(), query.frames(), query.grid());
  grad.kv = FeatureTensor::from_matrix(dk * w.key.transpose() + dv * w.value.transpose(), kv.frames(), kv.grid());
  return grad;
}

BranchFeatures bidirectional_step(const FeatureTensor& panorama, const std::vector<FeatureTensor>& views,
                                  const BidirectionalConfig& cfg) {
  const std::size_t n = views.size();
  if (n == 0) throw ArgumentError("bidirectional step needs at least one perspective view");
  if (cfg.masks.size() != n) throw ArgumentError("one correspondence mask per perspective view required");
  const bool encoded = cfg.panorama_encoding.dim != 0;
  if (encoded && cfg.view_encodings.size() != n) throw ArgumentError("one encoding per perspective view required");

  // Panorama queries over the concatenated tokens of every view.
  CrossAttentionConfig to_pano;
  to_pano.heads = cfg.heads;
  to_pano.head_dim = cfg.head_dim;
  to_pano.joint_temporal = cfg.joint_temporal;
  std::vector<AttentionMask> parts;
  for (const auto& m : cfg.masks) parts.push_back(AttentionMask::panorama_queries(m));
  to_pano.mask = AttentionMask::concat_keys(parts);
  if (encoded) {
    to_pano.query_encoding = cfg.panorama_encoding;
    to_pano.key_encoding.dim = cfg.panorama_encoding.dim;
    for (const auto& e : cfg.view_encodings) {
      to_pano.key_encoding.values.insert(to_pano.key_encoding.values.end(), e.values.begin(), e.values.end());
    }
  }

  BranchFeatures out;
  const FeatureTensor pano_update =
      cross_attend(panorama, concat_tokens(views), to_pano, cfg.panorama_from_views);
  out.panorama = panorama;
  for (std::size_t i = 0; i < out.panorama.values().size(); ++i) out.panorama.values()[i] += pano_update.values()[i];

  for (std::size_t v = 0; v < n; ++v) {
    CrossAttentionConfig to_view;
    to_view.heads = cfg.heads;
    to_view.head_dim = cfg.head_dim;
    to_view.joint_temporal = cfg.joint_temporal;
    to_view.mask = AttentionMask::perspective_queries(cfg.masks[v]);
    if (encoded) {
      to_view.query_encoding = cfg.view_encodings[v];
      to_view.key_encoding = cfg.panorama_encoding;
    }
    const FeatureTensor upd = cross_attend(views[v], panorama, to_view, cfg.view_from_panorama);
    FeatureTensor next = views[v];
    for (std::size_t i = 0; i < next.values().size(); ++i) next.values()[i] += upd.values()[i];
    out.views.push_back(std::move(next));
  }
  return out;
}

ToyDenoiser ToyDenoiser::random(int latent_dim, int hidden, std::mt19937_64& rng) {
  if (latent_dim < 1 || hidden < 1) throw ArgumentError("denoiser sizes must be positive");
  std::normal_distribution<double> n(0.0, 1.0);
  ToyDenoiser d;
  d.w1 = Matrix(hidden, latent_dim + 2);
  d.w2 = Matrix(latent_dim, hidden);
  d.b1 = Eigen::VectorXd(hidden);
  d.b2 = Eigen::VectorXd(latent_dim);
  const double s1 = 1.0 / std::sqrt(latent_dim + 2.0), s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (int i = 0; i < d.w1.size(); ++i) d.w1.data()[i] = s1 * n(rng);
  for (int i = 0; i < d.w2.size(); ++i) d.w2.data()[i] = s2 * n(rng);
  for (int i = 0; i < hidden; ++i) d.b1[i] = 0.1 * n(rng);
  for (int i = 0; i < latent_dim; ++i) d.b2[i] = 0.1 * n(rng);
  return d;
}

Eigen::VectorXd ToyDenoiser::predict(const Eigen::VectorXd& noisy_latent, double timestep, double condition) const {
  if (noisy_latent.size() + 2 != w1.cols()) throw ArgumentError("latent size does not match the denoiser");
  Eigen::VectorXd in(noisy_latent.size() + 2);
  in << noisy_latent, timestep, condition;
  return w2 * (w1 * in + b1).array().tanh().matrix() + b2;
}

double noise_residual(const NoisePair& pair) {
  if (pair.noise.size() != pair.prediction.size()) throw ArgumentError("noise and prediction sizes differ");
  if (pair.noise.empty()) throw ArgumentError("noise pair is empty");
  double s = 0.0;
  for (std::size_t i = 0; i < pair.noise.size(); ++i) {
    const double r = pair.noise[i] - pair.prediction[i];
    s += r * r;
  }
  return s / static_cast<double>(pair.noise.size());
}

double generation_loss(const NoisePair& panorama, const std::vector<NoisePair>& views) {
  if (views.empty()) throw ArgumentError("generation loss needs at least one perspective view");
  // Sorted summation keeps the result independent of view order.
  std::vector<double> terms;
  for (const auto& v : views) terms.push_back(noise_residual(v));
  std::sort(terms.begin(), terms.end());
  double views_sum = 0.0;
  for (double t : terms) views_sum += t;
  return noise_residual(panorama) + views_sum / static_cast<double>(views.size());
}

}  // namespace pano4d::attention
