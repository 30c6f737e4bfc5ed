#include "dsq/nn/layers.hpp"

#include <cmath>
#include <numbers>

#include "dsq/error.hpp"

namespace dsq::nn {
namespace {

using StridedRows = Eigen::Map<const Matrix, 0, Eigen::OuterStride<>>;

void fill_uniform(Matrix& m, std::mt19937_64& rng, float bound) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

}  // namespace

std::size_t ParameterSet::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Matrix::Zero(rows, cols);
  p->index = params_.size();
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::size_t ParameterSet::count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

Gradients ParameterSet::zero_gradients() const {
  Gradients g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  return g;
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

// ---------------------------------------------------------------------------

Linear::Linear(ParameterSet& ps, const std::string& name, int in_, int out_) : in(in_), out(out_) {
  weight = ps.add(name + ".weight", out, in);
  bias = ps.add(name + ".bias", 1, out);
}

void Linear::init_uniform(ParameterSet& ps, std::mt19937_64& rng, float bound) const {
  fill_uniform(ps[weight].value, rng, bound);
  ps[bias].value.setZero();
}

void Linear::init_default(ParameterSet& ps, std::mt19937_64& rng) const {
  const float bound = 1.0F / std::sqrt(static_cast<float>(in));
  fill_uniform(ps[weight].value, rng, bound);
  fill_uniform(ps[bias].value, rng, bound);
}

Matrix Linear::forward(const ParameterSet& ps, const Matrix& x) const {
  Matrix y = x * ps[weight].value.transpose();
  y.rowwise() += ps[bias].value.row(0);
  return y;
}

Matrix Linear::backward(const ParameterSet& ps, const Matrix& x, const Matrix& dy, Gradients& g) const {
  g[weight].noalias() += dy.transpose() * x;
  g[bias].row(0) += dy.colwise().sum();
  return dy * ps[weight].value;
}

// ---------------------------------------------------------------------------

Conv1d::Conv1d(ParameterSet& ps, const std::string& name, int in_, int out_, int kernel_, int stride_)
    : in(in_), out(out_), kernel(kernel_), stride(stride_) {
  weight = ps.add(name + ".weight", out, kernel * in);
  bias = ps.add(name + ".bias", 1, out);
}

void Conv1d::init_default(ParameterSet& ps, std::mt19937_64& rng) const {
  const float bound = 1.0F / std::sqrt(static_cast<float>(in * kernel));
  fill_uniform(ps[weight].value, rng, bound);
  // Zero bias: at -35 LUFS input a random bias swamps the first layer's response and the
  // per-frame norm then maps every frame to nearly the same vector.
  ps[bias].value.setZero();
}

Eigen::Index Conv1d::output_length(Eigen::Index input_length) const {
  if (input_length < kernel) return 0;
  return (input_length - kernel) / stride + 1;
}

Matrix Conv1d::forward(const ParameterSet& ps, const Matrix& x) const {
  const Eigen::Index t_out = output_length(x.rows());
  if (t_out <= 0) throw InvalidInput("conv1d: input shorter than kernel");
  // Row t of the patch matrix is the contiguous slice x[t*stride : t*stride+kernel, :].
  const StridedRows patches(x.data(), t_out, static_cast<Eigen::Index>(kernel) * in,
                            Eigen::OuterStride<>(static_cast<Eigen::Index>(stride) * in));
  Matrix y = patches * ps[weight].value.transpose();
  y.rowwise() += ps[bias].value.row(0);
  return y;
}

Matrix Conv1d::backward(const ParameterSet& ps, const Matrix& x, const Matrix& dy, Gradients& g) const {
  const Eigen::Index t_out = dy.rows();
  const Eigen::Index width = static_cast<Eigen::Index>(kernel) * in;
  const StridedRows patches(x.data(), t_out, width, Eigen::OuterStride<>(static_cast<Eigen::Index>(stride) * in));
  g[weight].noalias() += dy.transpose() * patches;
  g[bias].row(0) += dy.colwise().sum();
  const Matrix dpatches = dy * ps[weight].value;
  Matrix dx = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < t_out; ++t) {
    Eigen::Map<Eigen::RowVectorXf>(dx.data() + t * stride * in, width) += dpatches.row(t);
  }
  return dx;
}

// ---------------------------------------------------------------------------

LayerNorm::LayerNorm(ParameterSet& ps, const std::string& name, int dim_) : dim(dim_) {
  gain = ps.add(name + ".weight", 1, dim);
  shift = ps.add(name + ".bias", 1, dim);
}

void LayerNorm::init_default(ParameterSet& ps) const {
  ps[gain].value.setOnes();
  ps[shift].value.setZero();
}

Matrix LayerNorm::forward(const ParameterSet& ps, const Matrix& x, Cache* cache) const {
  const Eigen::Index rows = x.rows();
  Matrix xhat(rows, x.cols());
  Eigen::VectorXf inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const float mean = x.row(r).mean();
    const float var = (x.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0F / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  Matrix y = (xhat.array().rowwise() * ps[gain].value.row(0).array()).matrix();
  y.rowwise() += ps[shift].value.row(0);
  if (cache != nullptr) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix LayerNorm::backward(const ParameterSet& ps, const Matrix& dy, const Cache& cache, Gradients& g) const {
  const Matrix& xhat = cache.normalized;
  g[gain].row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
  g[shift].row(0) += dy.colwise().sum();
  const Matrix dxhat = (dy.array().rowwise() * ps[gain].value.row(0).array()).matrix();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const float mean_d = dxhat.row(r).mean();
    const float mean_dx = (dxhat.row(r).array() * xhat.row(r).array()).mean();
    dx.row(r) = cache.inv_std(r) * (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
  }
  return dx;
}

// ---------------------------------------------------------------------------

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](float v) { return 0.5F * v * (1.0F + std::erf(v * static_cast<float>(std::numbers::sqrt2 / 2))); });
}

Matrix gelu_backward(const Matrix& x, const Matrix& dy) {
  const float inv_sqrt2pi = static_cast<float>(1.0 / std::sqrt(2.0 * std::numbers::pi));
  const Matrix d = x.unaryExpr([&](float v) {
    const float cdf = 0.5F * (1.0F + std::erf(v * static_cast<float>(std::numbers::sqrt2 / 2)));
    return cdf + v * inv_sqrt2pi * std::exp(-0.5F * v * v);
  });
  return (d.array() * dy.array()).matrix();
}

// ---------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(ParameterSet& ps, const std::string& name, int dim_, int heads_)
    : q_proj(ps, name + ".q_proj", dim_, dim_),
      k_proj(ps, name + ".k_proj", dim_, dim_),
      v_proj(ps, name + ".v_proj", dim_, dim_),
      out_proj(ps, name + ".out_proj", dim_, dim_),
      dim(dim_),
      heads(heads_) {}

void MultiHeadAttention::init_default(ParameterSet& ps, std::mt19937_64& rng) const {
  // Xavier bound of the packed [3d x d] input projection.
  const float xavier = std::sqrt(6.0F / static_cast<float>(4 * dim));
  q_proj.init_uniform(ps, rng, xavier);
  k_proj.init_uniform(ps, rng, xavier);
  v_proj.init_uniform(ps, rng, xavier);
  out_proj.init_uniform(ps, rng, 1.0F / std::sqrt(static_cast<float>(dim)));
}

Matrix MultiHeadAttention::forward(const ParameterSet& ps, const Matrix& x, Cache* cache) const {
  const int head_dim = dim / heads;
  const float scale = 1.0F / std::sqrt(static_cast<float>(head_dim));
  Matrix q = q_proj.forward(ps, x);
  Matrix k = k_proj.forward(ps, x);
  Matrix v = v_proj.forward(ps, x);
  Matrix context(x.rows(), dim);
  std::vector<Matrix> attention;
  if (cache != nullptr) attention.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(h) * head_dim;
    Matrix s = (q.middleCols(c0, head_dim) * k.middleCols(c0, head_dim).transpose()) * scale;
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const float mx = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - mx).exp();
      s.row(r) /= s.row(r).sum();
    }
    context.middleCols(c0, head_dim).noalias() = s * v.middleCols(c0, head_dim);
    if (cache != nullptr) attention.push_back(std::move(s));
  }
  Matrix y = out_proj.forward(ps, context);
  if (cache != nullptr) {
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->attention = std::move(attention);
    cache->context = std::move(context);
  }
  return y;
}

Matrix MultiHeadAttention::backward(const ParameterSet& ps, const Matrix& x, const Matrix& dy, const Cache& cache,
                                    Gradients& g) const {
  const int head_dim = dim / heads;
  const float scale = 1.0F / std::sqrt(static_cast<float>(head_dim));
  const Matrix dcontext = out_proj.backward(ps, cache.context, dy, g);
  Matrix dq(x.rows(), dim), dk(x.rows(), dim), dv(x.rows(), dim);
  for (int h = 0; h < heads; ++h) {
    const Eigen::Index c0 = static_cast<Eigen::Index>(h) * head_dim;
    const Matrix& a = cache.attention[static_cast<std::size_t>(h)];
    const auto dctx_h = dcontext.middleCols(c0, head_dim);
    const Matrix da = dctx_h * cache.v.middleCols(c0, head_dim).transpose();
    dv.middleCols(c0, head_dim).noalias() = a.transpose() * dctx_h;
    const Eigen::VectorXf row_dot = (da.array() * a.array()).rowwise().sum();
    const Matrix ds = (a.array() * (da.array().colwise() - row_dot.array())).matrix() * scale;
    dq.middleCols(c0, head_dim).noalias() = ds * cache.k.middleCols(c0, head_dim);
    dk.middleCols(c0, head_dim).noalias() = ds.transpose() * cache.q.middleCols(c0, head_dim);
  }
  Matrix dx = q_proj.backward(ps, x, dq, g);
  dx += k_proj.backward(ps, x, dk, g);
  dx += v_proj.backward(ps, x, dv, g);
  return dx;
}

// ---------------------------------------------------------------------------

EncoderLayer::EncoderLayer(ParameterSet& ps, const std::string& name, int dim, int heads, int ffn_dim)
    : attn(ps, name + ".self_attn", dim, heads),
      norm1(ps, name + ".norm1", dim),
      norm2(ps, name + ".norm2", dim),
      ffn_in(ps, name + ".linear1", dim, ffn_dim),
      ffn_out(ps, name + ".linear2", ffn_dim, dim) {}

void EncoderLayer::init_default(ParameterSet& ps, std::mt19937_64& rng) const {
  attn.init_default(ps, rng);
  norm1.init_default(ps);
  norm2.init_default(ps);
  ffn_in.init_default(ps, rng);
  ffn_out.init_default(ps, rng);
}

Matrix EncoderLayer::forward(const ParameterSet& ps, const Matrix& x, Cache* cache) const {
  MultiHeadAttention::Cache* attn_cache = cache != nullptr ? &cache->attn : nullptr;
  const Matrix hidden = norm1.forward(ps, x + attn.forward(ps, x, attn_cache), cache ? &cache->norm1 : nullptr);
  Matrix pre = ffn_in.forward(ps, hidden);
  Matrix act = gelu(pre);
  Matrix y = norm2.forward(ps, hidden + ffn_out.forward(ps, act), cache ? &cache->norm2 : nullptr);
  if (cache != nullptr) {
    cache->input = x;
    cache->hidden = hidden;
    cache->ffn_pre = std::move(pre);
    cache->ffn_act = std::move(act);
  }
  return y;
}

Matrix EncoderLayer::backward(const ParameterSet& ps, const Matrix& dy, const Cache& cache, Gradients& g) const {
  const Matrix dsum2 = norm2.backward(ps, dy, cache.norm2, g);
  const Matrix dact = ffn_out.backward(ps, cache.ffn_act, dsum2, g);
  Matrix dhidden = dsum2 + ffn_in.backward(ps, cache.hidden, gelu_backward(cache.ffn_pre, dact), g);
  const Matrix dsum1 = norm1.backward(ps, dhidden, cache.norm1, g);
  return dsum1 + attn.backward(ps, cache.input, dsum1, cache.attn, g);
}

Matrix sinusoidal_table(int positions, int dim) {
  Matrix table(positions, dim);
  for (int p = 0; p < positions; ++p) {
    for (int i = 0; i < dim; i += 2) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / dim);
      table(p, i) = static_cast<float>(std::sin(p * freq));
      if (i + 1 < dim) table(p, i + 1) = static_cast<float>(std::cos(p * freq));
    }
  }
  return table;
}

}  // namespace dsq::nn
