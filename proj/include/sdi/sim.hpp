#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sdi/energy_field.hpp"
#include "sdi/geometry.hpp"
#include "sdi/mlp.hpp"
#include "sdi/random.hpp"

namespace sdi::sim {

// ---------------------------------------------------------------------------
// Optimiser

struct AdamWState {
  std::vector<float> first_moment;
  std::vector<float> second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamWState zeros(std::size_t parameter_count);
};

/// One decoupled-weight-decay Adam update. Decay applies only where
/// `decay_mask` is non-zero (weights, not biases).
void adamw_step(std::span<float> params, std::span<const float> grads,
                std::span<const std::uint8_t> decay_mask, AdamWState& state,
                double learning_rate, double weight_decay);

// ---------------------------------------------------------------------------
// Model

/// Per-axis affine input map x -> (x - center) / scale.
struct Normalizer {
  Eigen::VectorXf center;
  Eigen::VectorXf scale;

  /// Mean and standard deviation of the points. Each scale is floored at
  /// kMinScale and at `relative_floor` times the largest axis scale, so flat
  /// (e.g. tabletop) regions stay well conditioned away from the data.
  static Normalizer fit(const Eigen::MatrixXd& points, double relative_floor = 0.0);
  static constexpr double kMinScale = 0.005;
};

/// Spatial instruction map: E(x) = mlp((x - center) / scale).
///
/// Parameters are held in float (the stored representation); evaluation runs
/// in double so input gradients are accurate enough for finite-difference
/// checks and Newton projection. Immutable once constructed.
class EnergyModel final : public EnergyField {
 public:
  EnergyModel(Mlp<float> network, Normalizer normalizer);

  int input_dim() const override { return network_.input_dim(); }
  void evaluate(const Eigen::Ref<const Eigen::MatrixXd>& points, Eigen::VectorXd& values,
                Eigen::MatrixXd* gradients) const override;
  /// Single-precision pass over the stored parameters.
  void evaluate_fast(const Eigen::Ref<const Eigen::MatrixXd>& points, Eigen::VectorXd& values,
                     Eigen::MatrixXd* gradients) const override;

  const Mlp<float>& network() const { return network_; }
  const Normalizer& normalizer() const { return normalizer_; }

  /// "SDIM", u32 version, u32 input dim, u32 layer count, u32 sizes...,
  /// float32 parameters in declaration order, float32 center, float32 scale.
  std::vector<std::uint8_t> serialize() const;
  static EnergyModel deserialize(const std::vector<std::uint8_t>& bytes);
  void save(const std::filesystem::path& path) const;
  static EnergyModel load(const std::filesystem::path& path);

  static constexpr std::uint32_t kFormatVersion = 1;

 private:
  Mlp<float> network_;
  Normalizer normalizer_;
  Mlp<double> eval_network_;
  Eigen::VectorXd center_;
  Eigen::VectorXd inv_scale_;
};

/// Fan-in uniform initialisation: weights of layer l are drawn from
/// U(-k/sqrt(fan_in), k/sqrt(fan_in)) with k = first_layer_scale for the
/// first layer and 1 elsewhere; biases from U(-1/sqrt(fan_in), 1/sqrt(fan_in))
/// (scaled by k on the first layer).
Mlp<float> init_network(int input_dim, const std::vector<int>& hidden, std::uint64_t seed,
                        double first_layer_scale);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  int batch_size = 512;
  int epochs = 200;
  double padding = 0.5;         // negative box growth, fraction of axis extent
  double negative_ratio = 1.0;  // negatives per positive in each batch
  std::uint64_t seed = 0;
  std::vector<int> hidden{256, 256};
  double first_layer_scale = 4.0;
  double average_fraction = 0.1;  // final share of epochs whose parameters are averaged
  double relative_scale_floor = 1.0;  // 1 gives one isotropic scale; see Normalizer::fit

  void validate() const;
};

/// Axis-aligned box that negatives are drawn from.
struct SamplingBox {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  double volume() const { return (hi - lo).prod(); }
  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }
};

/// Bounding box of the points grown by padding x extent per side; an axis
/// with zero extent is grown by kMinHalfWidth per side instead.
SamplingBox negative_box(const Eigen::MatrixXd& points, double padding);
inline constexpr double kMinHalfWidth = 0.1;

Eigen::MatrixXd sample_box(const SamplingBox& box, Eigen::Index count, Rng& rng);
Eigen::MatrixXd sample_negatives(const Eigen::MatrixXd& points, Eigen::Index count,
                                 double padding, std::uint64_t seed);

struct FitReport {
  std::vector<double> epoch_loss;
};

/// Binary cross-entropy of positives against negatives, normalised by the
/// positive count. The gradient outputs receive d(loss)/d(energy) per column.
double nce_loss(const Eigen::RowVectorXf& positive_energy, const Eigen::RowVectorXf& negative_energy,
                Eigen::RowVectorXf* positive_grad, Eigen::RowVectorXf* negative_grad);

/// Fits an energy model to `points` (one per column) by noise-contrastive
/// estimation against uniform negatives from the padded bounding box.
EnergyModel nce_fit(const Eigen::MatrixXd& points, const TrainConfig& config,
                    FitReport* report = nullptr);
EnergyModel nce_fit(const geometry::PointSet& points, const TrainConfig& config,
                    FitReport* report = nullptr);

/// Fraction of positives with sigma(E) > 0.5 and negatives with sigma(E) < 0.5.
double classification_accuracy(const EnergyField& model, const Eigen::MatrixXd& positives,
                               const Eigen::MatrixXd& negatives);

}  // namespace sdi::sim
