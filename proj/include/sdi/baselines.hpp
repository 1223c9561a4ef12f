#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sdi/datasets.hpp"
#include "sdi/energy_field.hpp"
#include "sdi/sim.hpp"

namespace sdi::baselines {

/// Gaussian kernel density estimate with one isotropic bandwidth.
struct KdeModel {
  Eigen::MatrixXd points;  // d x n
  double bandwidth = 0.0;
  bool degenerate = false;  // zero-variance data; bandwidth is the grid minimum
  std::vector<double> grid;
  std::vector<double> grid_scores;  // held-out mean log-likelihood per grid entry

  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

/// Twenty log-spaced bandwidths over [0.01, 1.0] x data scale, where the data
/// scale is the RMS per-axis standard deviation (1 m if the data is flat).
std::vector<double> default_bandwidth_grid(const Eigen::MatrixXd& points);

/// Picks the grid bandwidth with the best mean log-likelihood on a seeded 20%
/// hold-out split, then keeps all points with the winner.
KdeModel kde_fit(const Eigen::MatrixXd& points, const std::vector<double>& grid,
                 std::uint64_t seed = 0);

/// Per-point log density of `test` (d x m) under a KDE over `train`.
Eigen::VectorXd kde_log_density(const Eigen::MatrixXd& train, const Eigen::MatrixXd& test,
                                double bandwidth);

/// Gaussian mixture with full covariances.
struct GmmModel {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;
  std::vector<double> log_likelihood_history;  // mean per-sample, one per E-step
  int iterations = 0;

  int components() const { return static_cast<int>(weights.size()); }
  Eigen::VectorXd log_density(const Eigen::MatrixXd& points) const;
};

struct GmmOptions {
  double regularization = 1e-6;
  double tolerance = 1e-6;
  int max_iterations = 500;
};

/// EM from k-means++ seeding; adds regularization * I to every covariance in
/// each M-step and stops when the mean log-likelihood gains less than the
/// tolerance.
GmmModel gmm_fit(const Eigen::MatrixXd& points, int components, std::uint64_t seed,
                 const GmmOptions& options = {});

double log_likelihood(const KdeModel& model, const Eigen::MatrixXd& test);
double log_likelihood(const GmmModel& model, const Eigen::MatrixXd& test);

/// Energy-model log-likelihood with the partition function estimated by
/// uniform importance sampling over `box`. The estimate's standard error (in
/// log units, delta method) is reported alongside.
struct EnergyLikelihood {
  double mean_log_likelihood = 0.0;
  double log_partition = 0.0;
  double log_partition_stderr = 0.0;
};

EnergyLikelihood log_likelihood(const EnergyField& model, const Eigen::MatrixXd& test,
                                const sim::SamplingBox& box, Eigen::Index samples = 200000,
                                std::uint64_t seed = 0);

struct DensityRow {
  std::string method;  // kde, gmm-10, gmm-50, gmm-100, ebm
  double log_likelihood = 0.0;
  double partition_stderr = 0.0;  // ebm only
};

struct DensityComparison {
  std::string shape;
  int train_points = 0;
  int test_points = 0;
  std::vector<DensityRow> rows;

  double value(const std::string& method) const;
};

/// Fits KDE, GMM-10/50/100 and the energy model on `spec` and scores each by
/// mean per-sample log-likelihood on an independent draw of the same shape.
DensityComparison compare_density(const datasets::ShapeSpec& spec, const sim::TrainConfig& train,
                                  Eigen::Index partition_samples = 200000);

/// "method log_likelihood partition_stderr", one row per method.
std::string density_table(const DensityComparison& comparison);

}  // namespace sdi::baselines
