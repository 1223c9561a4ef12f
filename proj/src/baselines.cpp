#include "sdi/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "sdi/error.hpp"
#include "sdi/random.hpp"

namespace sdi::baselines {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2 pi)

void check_dims(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) throw Error(ErrorCode::kShape, "test points have the wrong dimension");
  if (b.cols() == 0) throw Error(ErrorCode::kInsufficientData, "no test points");
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

Eigen::MatrixXd columns(const Eigen::MatrixXd& points, const std::vector<Eigen::Index>& idx,
                        std::size_t begin, std::size_t end) {
  Eigen::MatrixXd out(points.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) {
    out.col(static_cast<Eigen::Index>(i - begin)) = points.col(idx[i]);
  }
  return out;
}

}  // namespace

// --- KDE -------------------------------------------------------------------

Eigen::VectorXd kde_log_density(const Eigen::MatrixXd& train, const Eigen::MatrixXd& test,
                                double bandwidth) {
  if (!(bandwidth > 0.0)) throw Error(ErrorCode::kConfiguration, "bandwidth must be > 0");
  check_dims(train, test);
  const double d = static_cast<double>(train.rows());
  const double log_norm = std::log(static_cast<double>(train.cols())) +
                          0.5 * d * (kLog2Pi + 2.0 * std::log(bandwidth));
  const double inv_two_h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  const Eigen::RowVectorXd train_sq = train.colwise().squaredNorm();

  Eigen::VectorXd out(test.cols());
  constexpr Eigen::Index kBlock = 256;
  Eigen::MatrixXd dist;
  for (Eigen::Index start = 0; start < test.cols(); start += kBlock) {
    const Eigen::Index m = std::min(kBlock, test.cols() - start);
    auto block = test.middleCols(start, m);
    dist.noalias() = -2.0 * block.transpose() * train;
    dist.rowwise() += train_sq;
    dist.colwise() += block.colwise().squaredNorm().transpose();
    for (Eigen::Index i = 0; i < m; ++i) {
      Eigen::VectorXd row = -(dist.row(i).transpose().array().max(0.0) * inv_two_h2);
      out(start + i) = log_sum_exp(row) - log_norm;
    }
  }
  return out;
}

double KdeModel::log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  Eigen::MatrixXd one = x;
  return kde_log_density(points, one, bandwidth)(0);
}

std::vector<double> default_bandwidth_grid(const Eigen::MatrixXd& points) {
  double scale = 1.0;
  if (points.cols() > 1) {
    Eigen::VectorXd mean = points.rowwise().mean();
    double var = (points.colwise() - mean).array().square().rowwise().mean().mean();
    if (var > 0.0) scale = std::sqrt(var);
  }
  std::vector<double> grid(20);
  for (int i = 0; i < 20; ++i) grid[i] = scale * std::pow(10.0, -2.0 + 2.0 * i / 19.0);
  return grid;
}

KdeModel kde_fit(const Eigen::MatrixXd& points, const std::vector<double>& grid,
                 std::uint64_t seed) {
  if (grid.empty()) throw Error(ErrorCode::kConfiguration, "bandwidth grid is empty");
  for (double h : grid) {
    if (!(h > 0.0)) throw Error(ErrorCode::kConfiguration, "bandwidths must be > 0");
  }
  if (points.cols() < 2) throw Error(ErrorCode::kInsufficientData, "KDE needs at least 2 points");

  KdeModel model;
  model.points = points;
  model.grid = grid;
  if ((points.colwise() - points.col(0)).cwiseAbs().maxCoeff() == 0.0) {
    model.degenerate = true;
    model.bandwidth = *std::min_element(grid.begin(), grid.end());
    return model;
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(points.cols()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(derive_seed(seed, 0xCDE));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t held = std::max<std::size_t>(1, order.size() / 5);
  Eigen::MatrixXd validation = columns(points, order, 0, held);
  Eigen::MatrixXd train = columns(points, order, held, order.size());

  double best = -std::numeric_limits<double>::infinity();
  for (double h : grid) {
    double score = kde_log_density(train, validation, h).mean();
    model.grid_scores.push_back(score);
    if (score > best) {
      best = score;
      model.bandwidth = h;
    }
  }
  return model;
}

double log_likelihood(const KdeModel& model, const Eigen::MatrixXd& test) {
  return kde_log_density(model.points, test, model.bandwidth).mean();
}

// --- GMM -------------------------------------------------------------------

namespace {

// Per-point features [x_r x_q for q <= r, x, 1] of shifted points (n x m).
// Gaussian log densities and EM moments are both linear in these.
Eigen::MatrixXd quadratic_features(const Eigen::MatrixXd& points, const Eigen::VectorXd& shift) {
  const Eigen::Index d = points.rows();
  const Eigen::Index n = points.cols();
  Eigen::MatrixXd x = (points.colwise() - shift).transpose();
  Eigen::MatrixXd f(n, d * (d + 1) / 2 + d + 1);
  Eigen::Index col = 0;
  for (Eigen::Index r = 0; r < d; ++r) {
    for (Eigen::Index q = 0; q <= r; ++q) f.col(col++) = x.col(r).cwiseProduct(x.col(q));
  }
  f.middleCols(col, d) = x;
  f.col(col + d).setOnes();
  return f;
}

Eigen::VectorXd model_shift(const GmmModel& model) {
  Eigen::VectorXd shift = Eigen::VectorXd::Zero(model.means.front().size());
  for (int c = 0; c < model.components(); ++c) shift += model.weights[c] * model.means[c];
  return shift;
}

// log p(x) per point plus the log joint table (k x n, one column per point).
Eigen::VectorXd mixture_log_density(const GmmModel& model, const Eigen::MatrixXd& features,
                                    const Eigen::VectorXd& shift, Eigen::MatrixXd* joint) {
  const int k = model.components();
  const Eigen::Index d = shift.size();
  Eigen::MatrixXd coef(k, features.cols());
  for (int c = 0; c < k; ++c) {
    Eigen::LLT<Eigen::MatrixXd> llt(model.covariances[c]);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::kDivergence, "mixture covariance lost positive definiteness");
    }
    const Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(d, d));
    const Eigen::VectorXd mu = model.means[c] - shift;
    const Eigen::VectorXd pm = precision * mu;
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    Eigen::Index col = 0;
    for (Eigen::Index r = 0; r < d; ++r) {
      for (Eigen::Index q = 0; q <= r; ++q) {
        coef(c, col++) = r == q ? -0.5 * precision(r, r) : -precision(r, q);
      }
    }
    coef.block(c, col, 1, d) = pm.transpose();
    coef(c, col + d) = std::log(std::max(model.weights[c], 1e-300)) - 0.5 * mu.dot(pm) -
                       0.5 * (static_cast<double>(d) * kLog2Pi + log_det);
  }
  Eigen::MatrixXd table = coef * features.transpose();
  Eigen::VectorXd out(table.cols());
  for (Eigen::Index j = 0; j < table.cols(); ++j) out(j) = log_sum_exp(table.col(j));
  if (joint != nullptr) *joint = std::move(table);
  return out;
}

std::vector<Eigen::Index> kmeans_pp_seeds(const Eigen::MatrixXd& points, int k, Rng& rng) {
  const Eigen::Index n = points.cols();
  std::vector<Eigen::Index> seeds;
  seeds.push_back(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
  Eigen::VectorXd nearest = (points.colwise() - points.col(seeds[0])).colwise().squaredNorm();
  while (static_cast<int>(seeds.size()) < k) {
    double total = nearest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      double acc = 0.0;
      for (pick = 0; pick < n - 1; ++pick) {
        acc += nearest(pick);
        if (acc >= target) break;
      }
    } else {
      pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
    }
    seeds.push_back(pick);
    nearest = nearest.cwiseMin((points.colwise() - points.col(pick)).colwise().squaredNorm().transpose());
  }
  return seeds;
}

// `resp` is k x n; moments come from one product with the feature matrix.
void m_step(const Eigen::MatrixXd& features, const Eigen::VectorXd& shift,
            const Eigen::MatrixXd& resp, double regularization, GmmModel& model) {
  const Eigen::Index d = shift.size();
  const double n = static_cast<double>(features.rows());
  const Eigen::MatrixXd moments = resp * features;
  const Eigen::Index linear = d * (d + 1) / 2;
  for (int c = 0; c < model.components(); ++c) {
    const double mass = moments(c, linear + d);
    model.weights[c] = mass / n;
    if (mass < 1e-10) continue;  // starved component keeps its shape at ~zero weight
    Eigen::VectorXd mu = moments.block(c, linear, 1, d).transpose() / mass;
    Eigen::MatrixXd cov(d, d);
    Eigen::Index col = 0;
    for (Eigen::Index r = 0; r < d; ++r) {
      for (Eigen::Index q = 0; q <= r; ++q) {
        cov(r, q) = cov(q, r) = moments(c, col++) / mass - mu(r) * mu(q);
      }
    }
    cov.diagonal().array() += regularization;
    model.means[c] = mu + shift;
    model.covariances[c] = cov;
  }
}

}  // namespace

Eigen::VectorXd GmmModel::log_density(const Eigen::MatrixXd& points) const {
  if (points.rows() != means.front().size()) {
    throw Error(ErrorCode::kShape, "test points have the wrong dimension");
  }
  Eigen::VectorXd shift = model_shift(*this);
  return mixture_log_density(*this, quadratic_features(points, shift), shift, nullptr);
}

GmmModel gmm_fit(const Eigen::MatrixXd& points, int components, std::uint64_t seed,
                 const GmmOptions& options) {
  if (components < 1) throw Error(ErrorCode::kConfiguration, "need at least one component");
  if (points.cols() < components) {
    throw Error(ErrorCode::kInsufficientData, "fewer points than mixture components");
  }
  const Eigen::Index n = points.cols();
  const Eigen::Index d = points.rows();
  Rng rng(derive_seed(seed, 0x6A3));

  GmmModel model;
  model.weights.assign(static_cast<std::size_t>(components), 1.0 / components);
  model.means.assign(static_cast<std::size_t>(components), Eigen::VectorXd::Zero(d));
  Eigen::VectorXd mean = points.rowwise().mean();
  Eigen::MatrixXd centred = points.colwise() - mean;
  Eigen::MatrixXd global = centred * centred.transpose() / static_cast<double>(n) +
                           options.regularization * Eigen::MatrixXd::Identity(d, d);
  model.covariances.assign(static_cast<std::size_t>(components), global);

  // Hard assignment to k-means++ seeds gives the initial responsibilities.
  auto seeds = kmeans_pp_seeds(points, components, rng);
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(components, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < components; ++c) {
      double dist = (points.col(j) - points.col(seeds[static_cast<std::size_t>(c)])).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    resp(best, j) = 1.0;
  }
  for (int c = 0; c < components; ++c) model.means[c] = points.col(seeds[static_cast<std::size_t>(c)]);
  const Eigen::MatrixXd features = quadratic_features(points, mean);
  m_step(features, mean, resp, options.regularization, model);

  Eigen::MatrixXd joint;
  double previous = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < options.max_iterations; ++it) {
    Eigen::VectorXd log_p = mixture_log_density(model, features, mean, &joint);
    double ll = log_p.mean();
    model.log_likelihood_history.push_back(ll);
    model.iterations = it + 1;
    if (!std::isfinite(ll)) throw Error(ErrorCode::kDivergence, "EM log-likelihood is not finite");
    if (it > 0 && ll - previous < options.tolerance) break;
    previous = ll;
    resp = (joint.rowwise() - log_p.transpose()).array().exp();
    m_step(features, mean, resp, options.regularization, model);
  }
  return model;
}

double log_likelihood(const GmmModel& model, const Eigen::MatrixXd& test) {
  if (test.cols() == 0) throw Error(ErrorCode::kInsufficientData, "no test points");
  return model.log_density(test).mean();
}

// --- Energy model ----------------------------------------------------------

EnergyLikelihood log_likelihood(const EnergyField& model, const Eigen::MatrixXd& test,
                                const sim::SamplingBox& box, Eigen::Index samples,
                                std::uint64_t seed) {
  if (test.rows() != model.input_dim() || box.lo.size() != model.input_dim()) {
    throw Error(ErrorCode::kShape, "test points have the wrong dimension");
  }
  if (test.cols() == 0) throw Error(ErrorCode::kInsufficientData, "no test points");
  if (samples < 2) throw Error(ErrorCode::kConfiguration, "need at least 2 partition samples");

  Rng rng(derive_seed(seed, 0x2A2));
  Eigen::VectorXd energies(samples);
  constexpr Eigen::Index kBlock = 4096;
  Eigen::VectorXd values;
  for (Eigen::Index start = 0; start < samples; start += kBlock) {
    const Eigen::Index m = std::min(kBlock, samples - start);
    model.evaluate(sim::sample_box(box, m, rng), values, nullptr);
    energies.segment(start, m) = values;
  }
  const double max_e = energies.maxCoeff();
  Eigen::ArrayXd w = (energies.array() - max_e).exp();
  const double mean_w = w.mean();
  const double sd_w = std::sqrt((w - mean_w).square().sum() / static_cast<double>(samples - 1));

  EnergyLikelihood out;
  out.log_partition = std::log(box.volume()) + max_e + std::log(mean_w);
  out.log_partition_stderr = sd_w / (mean_w * std::sqrt(static_cast<double>(samples)));
  Eigen::VectorXd test_energy;
  model.evaluate(test, test_energy, nullptr);
  out.mean_log_likelihood = test_energy.mean() - out.log_partition;
  return out;
}

double DensityComparison::value(const std::string& method) const {
  for (const auto& r : rows) {
    if (r.method == method) return r.log_likelihood;
  }
  throw Error(ErrorCode::kConfiguration, "no method '" + method + "' in comparison");
}

DensityComparison compare_density(const datasets::ShapeSpec& spec, const sim::TrainConfig& train,
                                  Eigen::Index partition_samples) {
  spec.validate();
  datasets::ShapeSpec test_spec = spec;
  test_spec.seed = derive_seed(spec.seed, 0x7E57);
  const Eigen::MatrixXd points = geometry::to_matrix(datasets::generate_shape(spec));
  const Eigen::MatrixXd test = geometry::to_matrix(datasets::generate_shape(test_spec));

  DensityComparison out;
  out.shape = std::string(datasets::shape_name(spec.kind));
  out.train_points = static_cast<int>(points.cols());
  out.test_points = static_cast<int>(test.cols());

  const KdeModel kde = kde_fit(points, default_bandwidth_grid(points), spec.seed);
  out.rows.push_back({"kde", log_likelihood(kde, test), 0.0});
  for (int k : {10, 50, 100}) {
    const GmmModel gmm = gmm_fit(points, k, spec.seed);
    out.rows.push_back({"gmm-" + std::to_string(k), log_likelihood(gmm, test), 0.0});
  }
  sim::TrainConfig config = train;
  config.seed = derive_seed(spec.seed, 0xEB);
  const sim::EnergyModel model = sim::nce_fit(points, config);
  const EnergyLikelihood e = log_likelihood(model, test, sim::negative_box(points, config.padding),
                                            partition_samples, derive_seed(spec.seed, 0x2));
  out.rows.push_back({"ebm", e.mean_log_likelihood, e.log_partition_stderr});
  return out;
}

std::string density_table(const DensityComparison& comparison) {
  std::string out = "method log_likelihood partition_stderr\n";
  char line[128];
  for (const auto& r : comparison.rows) {
    std::snprintf(line, sizeof line, "%s %.6g %.6g\n", r.method.c_str(), r.log_likelihood,
                  r.partition_stderr);
    out += line;
  }
  return out;
}

}  // namespace sdi::baselines
