#pragma once

#include <Eigen/Core>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace dsq::nn {

/// Row-major float matrix; activations are [time x channels].
using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
  std::size_t index = 0;
};

/// Gradient accumulators aligned with ParameterSet indices.
using Gradients = std::vector<Matrix>;

/// Owns every trainable tensor of a model; indices are stable.
class ParameterSet {
 public:
  std::size_t add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }
  std::size_t size() const { return params_.size(); }
  std::size_t count() const;  ///< total scalar parameters
  Gradients zero_gradients() const;
  Parameter* find(const std::string& name);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, int in, int out);
  void init_uniform(ParameterSet& ps, std::mt19937_64& rng, float bound) const;
  void init_default(ParameterSet& ps, std::mt19937_64& rng) const;

  Matrix forward(const ParameterSet& ps, const Matrix& x) const;
  /// Accumulates weight/bias gradients; returns dL/dx.
  Matrix backward(const ParameterSet& ps, const Matrix& x, const Matrix& dy, Gradients& g) const;

  std::size_t weight = 0, bias = 0;
  int in = 0, out = 0;
};

/// 1-D convolution over time, no padding. Weight layout [out x (kernel * in)].
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParameterSet& ps, const std::string& name, int in, int out, int kernel, int stride);
  void init_default(ParameterSet& ps, std::mt19937_64& rng) const;

  Eigen::Index output_length(Eigen::Index input_length) const;
  Matrix forward(const ParameterSet& ps, const Matrix& x) const;
  Matrix backward(const ParameterSet& ps, const Matrix& x, const Matrix& dy, Gradients& g) const;

  std::size_t weight = 0, bias = 0;
  int in = 0, out = 0, kernel = 1, stride = 1;
};

/// Normalizes each row (time step) over its channels.
class LayerNorm {
 public:
  struct Cache {
    Matrix normalized;
    Eigen::VectorXf inv_std;
  };

  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, int dim);
  void init_default(ParameterSet& ps) const;

  Matrix forward(const ParameterSet& ps, const Matrix& x, Cache* cache) const;
  Matrix backward(const ParameterSet& ps, const Matrix& dy, const Cache& cache, Gradients& g) const;

  std::size_t gain = 0, shift = 0;
  int dim = 0;
  float eps = 1e-5F;
};

/// Exact (erf) GELU.
Matrix gelu(const Matrix& x);
Matrix gelu_backward(const Matrix& x, const Matrix& dy);

class MultiHeadAttention {
 public:
  struct Cache {
    Matrix q, k, v;                      // [T x d]
    std::vector<Matrix> attention;       // per head [T x T]
    Matrix context;                      // [T x d], heads concatenated
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterSet& ps, const std::string& name, int dim, int heads);
  void init_default(ParameterSet& ps, std::mt19937_64& rng) const;

  Matrix forward(const ParameterSet& ps, const Matrix& x, Cache* cache) const;
  Matrix backward(const ParameterSet& ps, const Matrix& x, const Matrix& dy, const Cache& cache,
                  Gradients& g) const;

  Linear q_proj, k_proj, v_proj, out_proj;
  int dim = 0, heads = 1;
};

/// Post-norm transformer encoder layer: x = LN1(x + MHA(x)); x = LN2(x + FFN(x)).
class EncoderLayer {
 public:
  struct Cache {
    Matrix input;
    MultiHeadAttention::Cache attn;
    LayerNorm::Cache norm1;
    Matrix hidden;      // after norm1
    Matrix ffn_pre;     // before GELU
    Matrix ffn_act;     // after GELU
    LayerNorm::Cache norm2;
  };

  EncoderLayer() = default;
  EncoderLayer(ParameterSet& ps, const std::string& name, int dim, int heads, int ffn_dim);
  void init_default(ParameterSet& ps, std::mt19937_64& rng) const;

  Matrix forward(const ParameterSet& ps, const Matrix& x, Cache* cache) const;
  Matrix backward(const ParameterSet& ps, const Matrix& dy, const Cache& cache, Gradients& g) const;

  MultiHeadAttention attn;
  LayerNorm norm1, norm2;
  Linear ffn_in, ffn_out;
};

/// Fixed sinusoidal table [positions x dim].
Matrix sinusoidal_table(int positions, int dim);

}  // namespace dsq::nn
