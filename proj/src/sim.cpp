#include "sdi/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

#include "sdi/binary_io.hpp"
#include "sdi/error.hpp"

namespace sdi::sim {

namespace {

// log(1 + exp(x)) without overflow.
inline float softplus(float x) {
  return x > 0.0F ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline float logistic(float x) {
  return x >= 0.0F ? 1.0F / (1.0F + std::exp(-x)) : std::exp(x) / (1.0F + std::exp(x));
}

Eigen::MatrixXf normalize(const Eigen::MatrixXd& points, const Normalizer& n) {
  Eigen::VectorXd c = n.center.cast<double>();
  Eigen::ArrayXd inv = n.scale.cast<double>().array().inverse();
  return ((points.colwise() - c).array().colwise() * inv).matrix().cast<float>();
}

// Flushes float subnormals to zero for the guard's lifetime. Tiny Adam
// moments otherwise fall into the slow subnormal path.
class FlushDenormals {
 public:
#if defined(__SSE__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned int saved_;
#endif
};

}  // namespace

// --- AdamW -----------------------------------------------------------------

AdamWState AdamWState::zeros(std::size_t parameter_count) {
  AdamWState state;
  state.first_moment.assign(parameter_count, 0.0F);
  state.second_moment.assign(parameter_count, 0.0F);
  return state;
}

void adamw_step(std::span<float> params, std::span<const float> grads,
                std::span<const std::uint8_t> decay_mask, AdamWState& state,
                double learning_rate, double weight_decay) {
  const std::size_t n = params.size();
  if (grads.size() != n || decay_mask.size() != n || state.first_moment.size() != n ||
      state.second_moment.size() != n) {
    throw Error(ErrorCode::kShape, "adamw: parameter, gradient and moment sizes differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const float b1 = static_cast<float>(state.beta1);
  const float b2 = static_cast<float>(state.beta2);
  const float correction1 = static_cast<float>(1.0 - std::pow(state.beta1, t));
  const float correction2 = static_cast<float>(1.0 - std::pow(state.beta2, t));
  const float lr = static_cast<float>(learning_rate);
  const float shrink = static_cast<float>(1.0 - learning_rate * weight_decay);
  const float eps = static_cast<float>(state.epsilon);
  float* m = state.first_moment.data();
  float* v = state.second_moment.data();
  for (std::size_t i = 0; i < n; ++i) {
    if (decay_mask[i]) params[i] *= shrink;
    m[i] = b1 * m[i] + (1.0F - b1) * grads[i];
    v[i] = b2 * v[i] + (1.0F - b2) * grads[i] * grads[i];
    float m_hat = m[i] / correction1;
    float v_hat = v[i] / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

// --- Model -----------------------------------------------------------------

Normalizer Normalizer::fit(const Eigen::MatrixXd& points, double relative_floor) {
  if (points.cols() == 0) throw Error(ErrorCode::kInsufficientData, "cannot normalise empty data");
  Eigen::VectorXd mean = points.rowwise().mean();
  Eigen::VectorXd var = (points.colwise() - mean).array().square().rowwise().mean();
  Normalizer n;
  n.center = mean.cast<float>();
  Eigen::ArrayXd scale = var.array().sqrt().max(kMinScale);
  scale = scale.max(relative_floor * scale.maxCoeff());
  n.scale = scale.matrix().cast<float>();
  return n;
}

EnergyModel::EnergyModel(Mlp<float> network, Normalizer normalizer)
    : network_(std::move(network)),
      normalizer_(std::move(normalizer)),
      eval_network_(network_.cast<double>()) {
  const auto d = static_cast<Eigen::Index>(network_.input_dim());
  if (normalizer_.center.size() != d || normalizer_.scale.size() != d) {
    throw Error(ErrorCode::kShape, "normaliser does not match network input width");
  }
  if ((normalizer_.scale.array() <= 0.0F).any() || !normalizer_.scale.allFinite() ||
      !normalizer_.center.allFinite()) {
    throw Error(ErrorCode::kConfiguration, "normaliser scale must be positive and finite");
  }
  for (float p : network_.parameters()) {
    if (!std::isfinite(p)) throw Error(ErrorCode::kDivergence, "model parameters are not finite");
  }
  center_ = normalizer_.center.cast<double>();
  inv_scale_ = normalizer_.scale.cast<double>().array().inverse();
}

void EnergyModel::evaluate(const Eigen::Ref<const Eigen::MatrixXd>& points,
                           Eigen::VectorXd& values, Eigen::MatrixXd* gradients) const {
  check_dim(points.rows());
  Mlp<double>::Workspace ws;
  Eigen::MatrixXd input = (points.colwise() - center_).array().colwise() * inv_scale_.array();
  eval_network_.forward(input, ws);
  values = ws.output.transpose();
  if (gradients != nullptr) {
    Eigen::RowVectorXd ones = Eigen::RowVectorXd::Ones(points.cols());
    eval_network_.backward(ws, ones, {}, gradients);
    gradients->array().colwise() *= inv_scale_.array();
  }
}

void EnergyModel::evaluate_fast(const Eigen::Ref<const Eigen::MatrixXd>& points,
                                Eigen::VectorXd& values, Eigen::MatrixXd* gradients) const {
  check_dim(points.rows());
  Mlp<float>::Workspace ws;
  Eigen::MatrixXf input =
      ((points.colwise() - center_).array().colwise() * inv_scale_.array()).cast<float>();
  network_.forward(input, ws);
  values = ws.output.transpose().cast<double>();
  if (gradients != nullptr) {
    Eigen::RowVectorXf ones = Eigen::RowVectorXf::Ones(points.cols());
    Eigen::MatrixXf g;
    network_.backward(ws, ones, {}, &g);
    *gradients = g.cast<double>();
    gradients->array().colwise() *= inv_scale_.array();
  }
}

std::vector<std::uint8_t> EnergyModel::serialize() const {
  io::ByteWriter w;
  w.put_magic("SDIM");
  w.put_u32(kFormatVersion);
  w.put_u32(static_cast<std::uint32_t>(network_.input_dim()));
  const auto& sizes = network_.sizes();
  w.put_u32(static_cast<std::uint32_t>(sizes.size()));
  for (int s : sizes) w.put_u32(static_cast<std::uint32_t>(s));
  for (float p : network_.parameters()) w.put_f32(p);
  for (Eigen::Index i = 0; i < normalizer_.center.size(); ++i) w.put_f32(normalizer_.center(i));
  for (Eigen::Index i = 0; i < normalizer_.scale.size(); ++i) w.put_f32(normalizer_.scale(i));
  return w.take();
}

EnergyModel EnergyModel::deserialize(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  if (!r.has(16) || !r.magic("SDIM")) throw Error(ErrorCode::kParse, "model file: bad magic");
  std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw Error(ErrorCode::kParse, "model file: unsupported version " + std::to_string(version));
  }
  std::uint32_t input_dim = r.u32();
  std::uint32_t layer_sizes = r.u32();
  if (layer_sizes < 2 || layer_sizes > 64 || !r.has(4ULL * layer_sizes)) {
    throw Error(ErrorCode::kParse, "model file: bad layer table");
  }
  std::vector<int> sizes(layer_sizes);
  for (auto& s : sizes) s = static_cast<int>(r.u32());
  if (sizes.front() != static_cast<int>(input_dim)) {
    throw Error(ErrorCode::kParse, "model file: input dim disagrees with layer table");
  }
  Mlp<float> net(sizes);
  const std::size_t expected = 4 * (net.parameter_count() + 2ULL * input_dim);
  if (r.remaining() != expected) throw Error(ErrorCode::kParse, "model file: truncated payload");
  for (float& p : net.parameters()) p = r.f32();
  Normalizer n;
  n.center.resize(input_dim);
  n.scale.resize(input_dim);
  for (std::uint32_t i = 0; i < input_dim; ++i) n.center(i) = r.f32();
  for (std::uint32_t i = 0; i < input_dim; ++i) n.scale(i) = r.f32();
  return EnergyModel(std::move(net), std::move(n));
}

void EnergyModel::save(const std::filesystem::path& path) const { io::write_file(path, serialize()); }

EnergyModel EnergyModel::load(const std::filesystem::path& path) {
  return deserialize(io::read_file(path));
}

Mlp<float> init_network(int input_dim, const std::vector<int>& hidden, std::uint64_t seed,
                        double first_layer_scale) {
  std::vector<int> sizes{input_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  Mlp<float> net(sizes);
  Rng rng(derive_seed(seed, 0x1417));
  for (int l = 0; l < net.layer_count(); ++l) {
    double k = (l == 0 ? first_layer_scale : 1.0) / std::sqrt(static_cast<double>(sizes[l]));
    std::uniform_real_distribution<float> dist(static_cast<float>(-k), static_cast<float>(k));
    auto w = net.weight(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
    auto b = net.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = dist(rng);
  }
  return net;
}

// --- Training --------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kConfiguration, "learning rate must be > 0");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::kConfiguration, "weight decay must be >= 0");
  if (!(negative_ratio > 0.0)) throw Error(ErrorCode::kConfiguration, "negative ratio must be > 0");
  if (!(padding >= 0.0)) throw Error(ErrorCode::kConfiguration, "padding must be >= 0");
  if (batch_size <= 0 || epochs <= 0) {
    throw Error(ErrorCode::kConfiguration, "batch size and epochs must be positive");
  }
  if (hidden.empty()) throw Error(ErrorCode::kConfiguration, "network needs a hidden layer");
  for (int width : hidden) {
    if (width <= 0) throw Error(ErrorCode::kConfiguration, "hidden widths must be positive");
  }
  if (!(first_layer_scale > 0.0)) throw Error(ErrorCode::kConfiguration, "init scale must be > 0");
  if (!(relative_scale_floor >= 0.0 && relative_scale_floor <= 1.0)) {
    throw Error(ErrorCode::kConfiguration, "relative scale floor must lie in [0, 1]");
  }
  if (!(average_fraction >= 0.0 && average_fraction <= 1.0)) {
    throw Error(ErrorCode::kConfiguration, "average fraction must lie in [0, 1]");
  }
}

SamplingBox negative_box(const Eigen::MatrixXd& points, double padding) {
  if (points.cols() == 0) throw Error(ErrorCode::kInsufficientData, "no points to bound");
  if (!(padding >= 0.0)) throw Error(ErrorCode::kConfiguration, "padding must be >= 0");
  SamplingBox box;
  box.lo = points.rowwise().minCoeff();
  box.hi = points.rowwise().maxCoeff();
  for (Eigen::Index i = 0; i < box.lo.size(); ++i) {
    double extent = box.hi(i) - box.lo(i);
    double grow = extent > 0.0 ? padding * extent : kMinHalfWidth;
    box.lo(i) -= grow;
    box.hi(i) += grow;
  }
  return box;
}

Eigen::MatrixXd sample_box(const SamplingBox& box, Eigen::Index count, Rng& rng) {
  Eigen::MatrixXd out(box.lo.size(), count);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index j = 0; j < count; ++j) {
    for (Eigen::Index i = 0; i < box.lo.size(); ++i) {
      out(i, j) = box.lo(i) + unit(rng) * (box.hi(i) - box.lo(i));
    }
  }
  return out;
}

Eigen::MatrixXd sample_negatives(const Eigen::MatrixXd& points, Eigen::Index count,
                                 double padding, std::uint64_t seed) {
  SamplingBox box = negative_box(points, padding);
  Rng rng(seed);
  return sample_box(box, count, rng);
}

double nce_loss(const Eigen::RowVectorXf& positive_energy, const Eigen::RowVectorXf& negative_energy,
                Eigen::RowVectorXf* positive_grad, Eigen::RowVectorXf* negative_grad) {
  const float inv = 1.0F / static_cast<float>(positive_energy.size());
  double loss = 0.0;
  // -log sigma(E) = softplus(-E);  -log(1 - sigma(E)) = softplus(E)
  for (Eigen::Index i = 0; i < positive_energy.size(); ++i) loss += softplus(-positive_energy(i));
  for (Eigen::Index i = 0; i < negative_energy.size(); ++i) loss += softplus(negative_energy(i));
  if (positive_grad != nullptr) {
    positive_grad->resize(positive_energy.size());
    for (Eigen::Index i = 0; i < positive_energy.size(); ++i)
      (*positive_grad)(i) = (logistic(positive_energy(i)) - 1.0F) * inv;
  }
  if (negative_grad != nullptr) {
    negative_grad->resize(negative_energy.size());
    for (Eigen::Index i = 0; i < negative_energy.size(); ++i)
      (*negative_grad)(i) = logistic(negative_energy(i)) * inv;
  }
  return loss * inv;
}

EnergyModel nce_fit(const Eigen::MatrixXd& points, const TrainConfig& config, FitReport* report) {
  config.validate();
  FlushDenormals guard;
  const Eigen::Index n = points.cols();
  if (n < 16) {
    throw Error(ErrorCode::kInsufficientData,
                "need at least 16 points to fit a map, got " + std::to_string(n));
  }
  if (!points.allFinite()) throw Error(ErrorCode::kShape, "training points must be finite");
  const int d = static_cast<int>(points.rows());

  Normalizer normalizer = Normalizer::fit(points, config.relative_scale_floor);
  SamplingBox box = negative_box(points, config.padding);
  Mlp<float> net = init_network(d, config.hidden, config.seed, config.first_layer_scale);
  const auto decay = net.decay_mask();
  AdamWState state = AdamWState::zeros(net.parameter_count());
  std::vector<float> grad(net.parameter_count());

  Rng rng(derive_seed(config.seed, 0x7E4A));
  const Eigen::MatrixXf positives = normalize(points, normalizer);
  const auto neg_count =
      static_cast<Eigen::Index>(std::llround(config.negative_ratio * static_cast<double>(n)));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));

  Mlp<float>::Workspace ws;
  Eigen::MatrixXf batch;
  Eigen::RowVectorXf pos_grad, neg_grad, out_grad;

  // Parameters are averaged over the final epochs (Polyak tail averaging).
  const int average_from =
      config.epochs - static_cast<int>(std::lround(config.average_fraction * config.epochs));
  std::vector<double> average(net.parameter_count(), 0.0);
  int averaged = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const Eigen::MatrixXf negatives = normalize(sample_box(box, neg_count, rng), normalizer);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index pos_b = std::min<Eigen::Index>(config.batch_size, n - start);
      const Eigen::Index neg_start = start * neg_count / n;
      const Eigen::Index neg_b = (start + pos_b) * neg_count / n - neg_start;
      batch.resize(d, pos_b + neg_b);
      for (Eigen::Index j = 0; j < pos_b; ++j) {
        batch.col(j) = positives.col(order[static_cast<std::size_t>(start + j)]);
      }
      batch.rightCols(neg_b) = negatives.middleCols(neg_start, neg_b);

      net.forward(batch, ws);
      double loss = nce_loss(ws.output.leftCols(pos_b), ws.output.rightCols(neg_b), &pos_grad,
                             &neg_grad);
      out_grad.resize(pos_b + neg_b);
      out_grad << pos_grad, neg_grad;
      std::fill(grad.begin(), grad.end(), 0.0F);
      net.backward(ws, out_grad, grad, nullptr);
      adamw_step(net.parameters(), grad, decay, state, config.learning_rate, config.weight_decay);
      epoch_loss += loss;
      ++batches;
    }
    epoch_loss /= batches;
    if (!std::isfinite(epoch_loss)) {
      throw Error(ErrorCode::kDivergence, "training loss became non-finite at epoch " +
                                              std::to_string(epoch));
    }
    if (report != nullptr) report->epoch_loss.push_back(epoch_loss);
    if (epoch >= average_from) {
      auto params = net.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) average[i] += params[i];
      ++averaged;
    }
  }
  if (averaged > 1) {
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i] = static_cast<float>(average[i] / averaged);
    }
  }
  return EnergyModel(std::move(net), std::move(normalizer));
}

EnergyModel nce_fit(const geometry::PointSet& points, const TrainConfig& config, FitReport* report) {
  return nce_fit(geometry::to_matrix(points), config, report);
}

double classification_accuracy(const EnergyField& model, const Eigen::MatrixXd& positives,
                               const Eigen::MatrixXd& negatives) {
  Eigen::VectorXd pos, neg;
  model.evaluate(positives, pos, nullptr);
  model.evaluate(negatives, neg, nullptr);
  double correct = (pos.array() > 0.0).count() + (neg.array() <= 0.0).count();
  return correct / static_cast<double>(pos.size() + neg.size());
}

}  // namespace sdi::sim
