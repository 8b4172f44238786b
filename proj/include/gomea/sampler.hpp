#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "gomea/fos.hpp"
#include "gomea/random.hpp"

namespace gomea {

/// Lower Cholesky factor of `a` after adding 1e-12 * trace/dim to the diagonal; falls back to
/// the square root of the (clamped) diagonal when the factorization fails.
inline Eigen::MatrixXd regularized_cholesky(const Eigen::MatrixXd& a) {
  const auto dim = a.rows();
  if (dim == 0) return {};
  Eigen::MatrixXd reg = a;
  reg.diagonal().array() += 1e-12 * a.trace() / static_cast<double>(dim);
  Eigen::LLT<Eigen::MatrixXd> llt(reg);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) diag(i, i) = std::sqrt(std::max(0.0, a(i, i)));
  return diag;
}

/// Inverse of `a` with the same regularization; the fallback inverts the diagonal and treats
/// zero variances as carrying no information.
inline Eigen::MatrixXd regularized_inverse(const Eigen::MatrixXd& a) {
  const auto dim = a.rows();
  if (dim == 0) return {};
  Eigen::MatrixXd reg = a;
  reg.diagonal().array() += 1e-12 * a.trace() / static_cast<double>(dim);
  Eigen::LLT<Eigen::MatrixXd> llt(reg);
  if (llt.info() == Eigen::Success) return llt.solve(Eigen::MatrixXd::Identity(dim, dim));
  Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    if (a(i, i) > 0.0) inv(i, i) = 1.0 / a(i, i);
  return inv;
}

/// Gaussian over an element's variables, conditioned on its parents.
class ElementSampler {
 public:
  ElementSampler() = default;

  /// Maximum-likelihood mean and (1/|S|) covariance over variables followed by parents.
  static ElementSampler estimate(std::span<const std::vector<double>* const> selection, const FosElement& element) {
    if (selection.size() < 2) throw std::invalid_argument("estimation needs at least two selected solutions");
    ElementSampler s;
    s.variables_ = element.variables;
    s.parents_ = element.parents;
    const Index nv = s.variables_.size();
    const Index np = s.parents_.size();
    const auto dim = static_cast<Eigen::Index>(nv + np);
    auto coord = [&](Index c) { return c < nv ? s.variables_[c] : s.parents_[c - nv]; };

    const auto count = static_cast<double>(selection.size());
    s.mean_ = Eigen::VectorXd::Zero(dim);
    for (const auto* x : selection)
      for (Eigen::Index c = 0; c < dim; ++c) s.mean_(c) += (*x)[coord(c)];
    s.mean_ /= count;
    s.covariance_ = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd d(dim);
    for (const auto* x : selection) {
      for (Eigen::Index c = 0; c < dim; ++c) d(c) = (*x)[coord(c)] - s.mean_(c);
      s.covariance_.selfadjointView<Eigen::Lower>().rankUpdate(d);
    }
    s.covariance_ = s.covariance_.selfadjointView<Eigen::Lower>();
    s.covariance_ /= count;
    s.prepare();
    return s;
  }

  /// Direct construction from a known distribution, mainly for tests.
  static ElementSampler from_moments(const FosElement& element, Eigen::VectorXd mean, Eigen::MatrixXd covariance) {
    ElementSampler s;
    s.variables_ = element.variables;
    s.parents_ = element.parents;
    if (mean.size() != static_cast<Eigen::Index>(s.variables_.size() + s.parents_.size()) ||
        covariance.rows() != mean.size() || covariance.cols() != mean.size())
      throw std::invalid_argument("moments do not match the element");
    s.mean_ = std::move(mean);
    s.covariance_ = std::move(covariance);
    s.prepare();
    return s;
  }

  const std::vector<Index>& variables() const { return variables_; }
  const std::vector<Index>& parents() const { return parents_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  const Eigen::MatrixXd& conditional_covariance() const { return schur_; }

  /// Conditional mean of the variables given parent values read from `genotype`.
  Eigen::VectorXd conditional_mean(std::span<const double> genotype) const {
    const Index nv = variables_.size();
    Eigen::VectorXd mu = mean_.head(static_cast<Eigen::Index>(nv));
    if (parents_.empty()) return mu;
    Eigen::VectorXd dp(static_cast<Eigen::Index>(parents_.size()));
    for (Index p = 0; p < parents_.size(); ++p) {
      const double value = genotype[parents_[p]];
      if (!std::isfinite(value)) throw std::domain_error("non-finite parent value");
      dp(static_cast<Eigen::Index>(p)) = value - mean_(static_cast<Eigen::Index>(nv + p));
    }
    return mu + regression_ * dp;
  }

  /// Draws the variables from N(conditional mean, multiplier * conditional covariance), parents
  /// taken from `genotype`. Returns values in the order of variables().
  std::vector<double> sample(std::span<const double> genotype, double multiplier, Rng& rng) const {
    const Eigen::VectorXd mu = conditional_mean(genotype);
    Eigen::VectorXd z(mu.size());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index c = 0; c < z.size(); ++c) z(c) = normal(rng);
    const Eigen::VectorXd draw = mu + std::sqrt(multiplier) * (chol_ * z);
    return {draw.data(), draw.data() + draw.size()};
  }

  /// Marginal standard deviation of each variable.
  double stddev(Index c) const { return std::sqrt(std::max(0.0, covariance_(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)))); }

 private:
  void prepare() {
    const auto nv = static_cast<Eigen::Index>(variables_.size());
    const auto np = static_cast<Eigen::Index>(parents_.size());
    const Eigen::MatrixXd svv = covariance_.topLeftCorner(nv, nv);
    if (np == 0) {
      schur_ = svv;
      regression_ = Eigen::MatrixXd::Zero(nv, 0);
    } else {
      const Eigen::MatrixXd svp = covariance_.topRightCorner(nv, np);
      const Eigen::MatrixXd spp = covariance_.bottomRightCorner(np, np);
      regression_ = svp * regularized_inverse(spp);
      schur_ = svv - regression_ * svp.transpose();
      schur_ = 0.5 * (schur_ + schur_.transpose());
    }
    chol_ = regularized_cholesky(schur_);
  }

  std::vector<Index> variables_;
  std::vector<Index> parents_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd regression_;
  Eigen::MatrixXd schur_;
  Eigen::MatrixXd chol_;
};

/// Samples every factor in order, each conditioned on values already written to `genotype`.
inline void forward_sample(const Factorization& factorization, std::span<const ElementSampler> samplers,
                           std::vector<double>& genotype, double multiplier, Rng& rng) {
  if (samplers.size() != factorization.factors.size()) throw std::invalid_argument("one sampler per factor required");
  for (Index f = 0; f < samplers.size(); ++f) {
    const auto values = samplers[f].sample(genotype, multiplier, rng);
    const auto& vars = samplers[f].variables();
    for (Index c = 0; c < vars.size(); ++c) genotype[vars[c]] = values[c];
  }
}

struct AvsConfig {
  double decay = 0.9;
  double sdr_threshold = 1.0;
  double min_multiplier = 1e-10;
  double max_multiplier = 1e3;
};

/// One adaptive-variance-scaling update. On improvement the multiplier is first lifted to at
/// least 1 and then grown by 1/decay when improvements landed beyond `sdr_threshold` standard
/// deviations; without improvement, multipliers above 1 decay.
inline double adapt_variance(double multiplier, bool improved, double sdr, const AvsConfig& config = {}) {
  if (improved) {
    multiplier = std::max(multiplier, 1.0);
    if (sdr > config.sdr_threshold) multiplier /= config.decay;
  } else if (multiplier > 1.0) {
    multiplier *= config.decay;
  }
  return std::clamp(multiplier, config.min_multiplier, config.max_multiplier);
}

/// Largest |mean of improving values - distribution mean| / marginal stddev over the
/// element's variables, reading values from full improving genotypes.
inline double standard_deviation_ratio(const ElementSampler& sampler, const std::vector<std::vector<double>>& improvers) {
  if (improvers.empty()) return 0.0;
  double best = 0.0;
  const auto& vars = sampler.variables();
  for (Index c = 0; c < vars.size(); ++c) {
    double mean = 0.0;
    for (const auto& x : improvers) mean += x[vars[c]];
    mean /= static_cast<double>(improvers.size());
    const double sd = sampler.stddev(c);
    if (sd > 0.0) best = std::max(best, std::abs(mean - sampler.mean()(static_cast<Eigen::Index>(c))) / sd);
  }
  return best;
}

struct AmsConfig {
  double fraction = 0.5;  // of the selection size
  double multiplier = 2.0;
};

inline void apply_ams(std::vector<double>& genotype, std::span<const double> mean_shift, double distribution_multiplier,
                      const AmsConfig& config = {}) {
  for (Index v = 0; v < genotype.size(); ++v) genotype[v] += config.multiplier * distribution_multiplier * mean_shift[v];
}

}  // namespace gomea
