#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbf::nn {

enum class LayerKind : std::uint8_t {
  Normalize = 1,  // affine [lo, hi] -> [-1, 1]
  Dense = 2,
  Relu = 3,
  Tanh = 4,
  Scale = 5,  // affine [-1, 1] -> [lo, hi]
};

const char* to_string(LayerKind kind);

template <typename Scalar>
struct LayerSpec {
  LayerKind kind;
  int in = 0;
  int out = 0;
  Scalar lo = 0;
  Scalar hi = 0;
  Eigen::Index offset = 0;  // start of W (then b) in the flat parameter vector
};

// Feed-forward network over column-batched inputs. All weights and biases
// live in one flat parameter vector so optimizers and target-network
// updates are plain vector expressions.
template <typename Scalar>
class DenseNet {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using WeightMap = Eigen::Map<Matrix>;
  using ConstWeightMap = Eigen::Map<const Matrix>;

  // Inputs to every layer plus the final output, kept for backward().
  struct Tape {
    std::vector<Matrix> inputs;
    Matrix output;
  };

  DenseNet() = default;
  explicit DenseNet(int input_dim) : input_dim_(input_dim), output_dim_(input_dim) {
    if (input_dim < 1) throw std::invalid_argument("DenseNet: input dimension must be >= 1");
  }

  DenseNet& normalize(Scalar lo, Scalar hi) {
    if (!(hi > lo)) throw std::invalid_argument("normalize: need hi > lo");
    push({LayerKind::Normalize, output_dim_, output_dim_, lo, hi, 0});
    return *this;
  }
  DenseNet& dense(int width) {
    if (width < 1) throw std::invalid_argument("dense: width must be >= 1");
    LayerSpec<Scalar> l{LayerKind::Dense, output_dim_, width, 0, 0, params_.size()};
    params_.conservativeResize(params_.size() + Eigen::Index{width} * output_dim_ + width);
    params_.tail(Eigen::Index{width} * output_dim_ + width).setZero();
    push(l);
    return *this;
  }
  DenseNet& relu() {
    push({LayerKind::Relu, output_dim_, output_dim_, 0, 0, 0});
    return *this;
  }
  DenseNet& tanh() {
    push({LayerKind::Tanh, output_dim_, output_dim_, 0, 0, 0});
    return *this;
  }
  DenseNet& scale(Scalar lo, Scalar hi) {
    if (!(hi > lo)) throw std::invalid_argument("scale: need hi > lo");
    push({LayerKind::Scale, output_dim_, output_dim_, lo, hi, 0});
    return *this;
  }

  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  const std::vector<LayerSpec<Scalar>>& layers() const { return layers_; }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }
  Eigen::Index param_count() const { return params_.size(); }

  ConstWeightMap weight(std::size_t layer) const {
    const auto& l = dense_layer(layer);
    return ConstWeightMap(params_.data() + l.offset, l.out, l.in);
  }
  WeightMap weight(std::size_t layer) {
    const auto& l = dense_layer(layer);
    return WeightMap(params_.data() + l.offset, l.out, l.in);
  }
  Eigen::Map<const Vector> bias(std::size_t layer) const {
    const auto& l = dense_layer(layer);
    return Eigen::Map<const Vector>(params_.data() + l.offset + Eigen::Index{l.out} * l.in, l.out);
  }
  Eigen::Map<Vector> bias(std::size_t layer) {
    const auto& l = dense_layer(layer);
    return Eigen::Map<Vector>(params_.data() + l.offset + Eigen::Index{l.out} * l.in, l.out);
  }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every dense layer; the last
  // dense layer uses (-final_range, final_range) when final_range > 0.
  template <typename Rng>
  void initialize(Rng& rng, Scalar final_range = 0) {
    std::size_t last = layers_.size();
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].kind == LayerKind::Dense) last = i;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.kind != LayerKind::Dense) continue;
      const Scalar range = (i == last && final_range > 0) ? final_range : Scalar(1) / std::sqrt(Scalar(l.in));
      std::uniform_real_distribution<double> u(-static_cast<double>(range), static_cast<double>(range));
      const Eigen::Index n = Eigen::Index{l.out} * l.in + l.out;
      for (Eigen::Index k = 0; k < n; ++k) params_[l.offset + k] = static_cast<Scalar>(u(rng));
    }
  }

  Matrix forward(const Matrix& x) const {
    check_input(x);
    Matrix a = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) a = apply(i, a);
    return a;
  }

  Vector forward(const Vector& x) const { return forward(Matrix(x)).col(0); }

  Matrix forward(const Matrix& x, Tape& tape) const {
    check_input(x);
    tape.inputs.clear();
    tape.inputs.reserve(layers_.size());
    Matrix a = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      tape.inputs.push_back(a);
      a = apply(i, tape.inputs.back());
    }
    tape.output = a;
    return a;
  }

  // Reverse pass for upstream = dL/d(output), one column per sample.
  // Parameter gradients are summed over the batch into `grad` (resized to
  // param_count()); dL/d(input) goes to `input_grad` when non-null.
  void backward(const Tape& tape, const Matrix& upstream, Vector& grad,
                Matrix* input_grad = nullptr) const {
    if (tape.inputs.size() != layers_.size())
      throw std::invalid_argument("backward: tape does not match network");
    if (upstream.rows() != output_dim_ || upstream.cols() != tape.output.cols())
      throw std::invalid_argument("backward: upstream shape mismatch");
    grad.setZero(params_.size());
    Matrix g = upstream;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const auto& l = layers_[i];
      const Matrix& in = tape.inputs[i];
      switch (l.kind) {
        case LayerKind::Normalize:
          g *= Scalar(2) / (l.hi - l.lo);
          break;
        case LayerKind::Dense: {
          const ConstWeightMap w(params_.data() + l.offset, l.out, l.in);
          WeightMap(grad.data() + l.offset, l.out, l.in).noalias() = g * in.transpose();
          Eigen::Map<Vector>(grad.data() + l.offset + Eigen::Index{l.out} * l.in, l.out) =
              g.rowwise().sum();
          if (i > 0 || input_grad) g = w.transpose() * g;
          break;
        }
        case LayerKind::Relu:
          g = (in.array() > Scalar(0)).select(g, Scalar(0));
          break;
        case LayerKind::Tanh: {
          const Matrix y = in.array().tanh();
          g.array() *= (Scalar(1) - y.array().square());
          break;
        }
        case LayerKind::Scale:
          g *= (l.hi - l.lo) / Scalar(2);
          break;
      }
    }
    if (input_grad) *input_grad = std::move(g);
  }

  bool operator==(const DenseNet& o) const {
    if (input_dim_ != o.input_dim_ || layers_.size() != o.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& a = layers_[i];
      const auto& b = o.layers_[i];
      if (a.kind != b.kind || a.in != b.in || a.out != b.out || a.lo != b.lo || a.hi != b.hi)
        return false;
    }
    return params_.size() == o.params_.size() && params_ == o.params_;
  }

 private:
  void push(LayerSpec<Scalar> l) {
    layers_.push_back(l);
    output_dim_ = l.out;
  }

  const LayerSpec<Scalar>& dense_layer(std::size_t layer) const {
    if (layer >= layers_.size() || layers_[layer].kind != LayerKind::Dense)
      throw std::invalid_argument("layer " + std::to_string(layer) + " is not a dense layer");
    return layers_[layer];
  }

  void check_input(const Matrix& x) const {
    if (x.rows() != input_dim_)
      throw std::invalid_argument("DenseNet: input dimension " + std::to_string(x.rows()) +
                                  " != " + std::to_string(input_dim_));
  }

  Matrix apply(std::size_t i, const Matrix& a) const {
    const auto& l = layers_[i];
    switch (l.kind) {
      case LayerKind::Normalize: {
        const Scalar mid = (l.hi + l.lo) / Scalar(2);
        return (a.array() - mid) * (Scalar(2) / (l.hi - l.lo));
      }
      case LayerKind::Dense: {
        const ConstWeightMap w(params_.data() + l.offset, l.out, l.in);
        const Eigen::Map<const Vector> b(params_.data() + l.offset + Eigen::Index{l.out} * l.in, l.out);
        Matrix z = w * a;
        z.colwise() += b;
        return z;
      }
      case LayerKind::Relu:
        return a.cwiseMax(Scalar(0));
      case LayerKind::Tanh:
        return a.array().tanh();
      case LayerKind::Scale:
        return ((a.array() + Scalar(1)) * ((l.hi - l.lo) / Scalar(2))) + l.lo;
    }
    return a;
  }

  int input_dim_ = 0;
  int output_dim_ = 0;
  std::vector<LayerSpec<Scalar>> layers_;
  Vector params_;
};

// Adaptive-moment optimizer with bias correction.
template <typename Scalar>
class Adam {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Adam() = default;
  Adam(Eigen::Index size, Scalar lr, Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999),
       Scalar eps = Scalar(1e-8))
      : lr(lr), beta1(beta1), beta2(beta2), eps(eps), m(Vector::Zero(size)), v(Vector::Zero(size)) {}

  // Descends along `grad`. Throws std::domain_error on non-finite gradients.
  void step(Vector& theta, const Vector& grad) {
    if (grad.size() != theta.size() || grad.size() != m.size())
      throw std::invalid_argument("Adam: shape mismatch");
    if (!grad.allFinite()) throw std::domain_error("Adam: non-finite gradient");
    ++t;
    m = beta1 * m + (Scalar(1) - beta1) * grad;
    v = beta2 * v + (Scalar(1) - beta2) * grad.cwiseAbs2();
    const Scalar c1 = Scalar(1) - std::pow(beta1, Scalar(t));
    const Scalar c2 = Scalar(1) - std::pow(beta2, Scalar(t));
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }

  bool operator==(const Adam& o) const {
    return lr == o.lr && beta1 == o.beta1 && beta2 == o.beta2 && eps == o.eps && t == o.t &&
           m == o.m && v == o.v;
  }

  Scalar lr = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
  std::uint64_t t = 0;
  Vector m;
  Vector v;
};

// target <- tau * online + (1 - tau) * target
template <typename DerivedT, typename DerivedO>
void soft_update(Eigen::MatrixBase<DerivedT>& target, const Eigen::MatrixBase<DerivedO>& online,
                 typename DerivedT::Scalar tau) {
  if (target.size() != online.size()) throw std::invalid_argument("soft_update: shape mismatch");
  if (!(tau > 0 && tau <= 1)) throw std::invalid_argument("soft_update: tau must lie in (0, 1]");
  target = tau * online + (typename DerivedT::Scalar(1) - tau) * target;
}

template <typename Scalar>
void soft_update(DenseNet<Scalar>& target, const DenseNet<Scalar>& online, Scalar tau) {
  soft_update(target.params(), online.params(), tau);
}

using Net = DenseNet<double>;
using Optimizer = Adam<double>;

// Versioned little-endian binary checkpoint; see docs/checkpoint_format.md.
void save_checkpoint(std::ostream& os, const Net& net, const Optimizer* opt = nullptr);
// Returns true when the file carried optimizer state (written into *opt).
bool load_checkpoint(std::istream& is, Net& net, Optimizer* opt = nullptr);

// Raw little-endian primitives shared with the agent checkpoint.
namespace wire {
void put_u8(std::ostream& os, std::uint8_t v);
void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_f64(std::ostream& os, double v);
std::uint8_t get_u8(std::istream& is);
std::uint32_t get_u32(std::istream& is);
std::uint64_t get_u64(std::istream& is);
double get_f64(std::istream& is);
}  // namespace wire

extern template class DenseNet<double>;
extern template class Adam<double>;

}  // namespace sbf::nn
