#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sdi/error.hpp"

namespace sdi::sim {

/// Fully connected scalar-output network with SiLU hidden activations.
///
/// All parameters live in one flat buffer in declaration order: for each
/// layer, the weight matrix (out x in, row-major) followed by its bias. The
/// same buffer is what AdamW updates and what the model file stores.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using WeightMap =
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstWeightMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using BiasMap = Eigen::Map<Vector>;
  using ConstBiasMap = Eigen::Map<const Vector>;

  /// Activations cached by forward() for backward().
  struct Workspace {
    std::vector<Matrix> pre;   // pre-activation of each hidden layer
    std::vector<Matrix> post;  // post[0] is the input, post[l] feeds layer l
    RowVector output;
  };

  Mlp() = default;

  /// `sizes` lists input width, hidden widths, then 1.
  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2 || sizes_.back() != 1) {
      throw Error(ErrorCode::kShape, "network must end in a single output");
    }
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] <= 0) throw Error(ErrorCode::kShape, "layer widths must be positive");
      weight_offsets_.push_back(offset);
      offset += static_cast<std::size_t>(sizes_[l + 1]) * sizes_[l];
      bias_offsets_.push_back(offset);
      offset += static_cast<std::size_t>(sizes_[l + 1]);
    }
    params_.assign(offset, Scalar(0));
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int layer_count() const { return static_cast<int>(sizes_.size()) - 1; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<Scalar> parameters() { return params_; }
  std::span<const Scalar> parameters() const { return params_; }

  WeightMap weight(int l) {
    return WeightMap(params_.data() + weight_offsets_[l], sizes_[l + 1], sizes_[l]);
  }
  ConstWeightMap weight(int l) const {
    return ConstWeightMap(params_.data() + weight_offsets_[l], sizes_[l + 1], sizes_[l]);
  }
  BiasMap bias(int l) { return BiasMap(params_.data() + bias_offsets_[l], sizes_[l + 1]); }
  ConstBiasMap bias(int l) const {
    return ConstBiasMap(params_.data() + bias_offsets_[l], sizes_[l + 1]);
  }

  /// 1 for weight entries, 0 for biases.
  std::vector<std::uint8_t> decay_mask() const {
    std::vector<std::uint8_t> mask(params_.size(), 0);
    for (int l = 0; l < layer_count(); ++l) {
      std::fill(mask.begin() + static_cast<std::ptrdiff_t>(weight_offsets_[l]),
                mask.begin() + static_cast<std::ptrdiff_t>(bias_offsets_[l]), 1);
    }
    return mask;
  }

  template <typename Other>
  Mlp<Other> cast() const {
    Mlp<Other> out(sizes_);
    auto dst = out.parameters();
    for (std::size_t i = 0; i < params_.size(); ++i) dst[i] = static_cast<Other>(params_[i]);
    return out;
  }

  /// Forward pass over a batch (one input per column).
  void forward(const Matrix& input, Workspace& ws) const {
    if (input.rows() != input_dim()) throw Error(ErrorCode::kShape, "network input width mismatch");
    const int hidden = layer_count() - 1;
    ws.pre.resize(static_cast<std::size_t>(hidden));
    ws.post.resize(static_cast<std::size_t>(hidden) + 1);
    ws.post[0] = input;
    for (int l = 0; l < hidden; ++l) {
      Matrix& z = ws.pre[static_cast<std::size_t>(l)];
      z.noalias() = weight(l) * ws.post[static_cast<std::size_t>(l)];
      z.colwise() += bias(l);
      ws.post[static_cast<std::size_t>(l) + 1] =
          (z.array() / (Scalar(1) + (-z.array()).exp())).matrix();
    }
    ws.output.noalias() = weight(hidden) * ws.post.back();
    ws.output.array() += bias(hidden)(0);
  }

  /// Back-propagates d(loss)/d(output). Accumulates parameter gradients into
  /// `param_grad` when it is non-empty and writes input gradients when
  /// `input_grad` is non-null.
  void backward(const Workspace& ws, const RowVector& output_grad, std::span<Scalar> param_grad,
                Matrix* input_grad) const {
    const bool want_params = !param_grad.empty();
    if (want_params && param_grad.size() != params_.size()) {
      throw Error(ErrorCode::kShape, "gradient buffer size mismatch");
    }
    Matrix delta = output_grad;
    for (int l = layer_count() - 1; l >= 0; --l) {
      const Matrix& in = ws.post[static_cast<std::size_t>(l)];
      if (want_params) {
        WeightMap(param_grad.data() + weight_offsets_[l], sizes_[l + 1], sizes_[l]).noalias() +=
            delta * in.transpose();
        const Vector bias_grad = delta.rowwise().sum();
        BiasMap(param_grad.data() + bias_offsets_[l], sizes_[l + 1]) += bias_grad;
      }
      if (l == 0) {
        if (input_grad != nullptr) input_grad->noalias() = weight(0).transpose() * delta;
        break;
      }
      Matrix back = weight(l).transpose() * delta;
      const auto z = ws.pre[static_cast<std::size_t>(l) - 1].array();
      auto s = (Scalar(1) / (Scalar(1) + (-z).exp()));
      delta = (back.array() * s * (Scalar(1) + z * (Scalar(1) - s))).matrix();
    }
  }

 private:
  std::vector<int> sizes_;
  std::vector<std::size_t> weight_offsets_;
  std::vector<std::size_t> bias_offsets_;
  std::vector<Scalar> params_;
};

}  // namespace sdi::sim
