#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tempocf/ratings.hpp"

namespace tempocf {

struct TrainConfig {
  int d = 10;
  double learning_rate = 0.01;
  double regularization = 0.05;
  int epochs = 30;
  std::uint64_t seed = 42;
  double wrmf_alpha = 40.0;
  int wrmf_iterations = 15;
};

struct Observation {
  std::uint32_t user;
  std::uint32_t item;
  double rating;
};

// Observed entries in (user asc, item asc) order.
std::vector<Observation> observations_from(const RatingMatrix& ratings);

// Dense latent-factor model. Plain dot-product scores, optionally with
// global/user/item bias terms. Immutable after training; scoring is
// thread-safe.
class FactorModel {
 public:
  FactorModel() = default;
  FactorModel(std::vector<std::string> user_ids, std::vector<std::string> item_ids, int d,
              bool biased);

  int d() const { return d_; }
  bool biased() const { return biased_; }
  std::size_t user_count() const { return user_ids_.size(); }
  std::size_t item_count() const { return item_ids_.size(); }
  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }

  std::span<double> user_row(std::uint32_t u) { return {user_factors_.data() + std::size_t(u) * d_, std::size_t(d_)}; }
  std::span<double> item_row(std::uint32_t i) { return {item_factors_.data() + std::size_t(i) * d_, std::size_t(d_)}; }
  std::span<const double> user_row(std::uint32_t u) const { return {user_factors_.data() + std::size_t(u) * d_, std::size_t(d_)}; }
  std::span<const double> item_row(std::uint32_t i) const { return {item_factors_.data() + std::size_t(i) * d_, std::size_t(d_)}; }

  double& mu() { return mu_; }
  double mu() const { return mu_; }
  std::vector<double>& user_bias() { return user_bias_; }
  std::vector<double>& item_bias() { return item_bias_; }
  const std::vector<double>& user_bias() const { return user_bias_; }
  const std::vector<double>& item_bias() const { return item_bias_; }

  double score(std::uint32_t user, std::uint32_t item) const;

  // Global mean for the biased variant, 0 otherwise.
  double fallback_score() const { return biased_ ? mu_ : 0.0; }

  // Scoring with cold handling: a missing user or item yields the fallback,
  // flagged.
  struct Scored {
    double value;
    bool fallback;
  };
  Scored predict(std::optional<std::uint32_t> user, std::optional<std::uint32_t> item) const;

  // Flat parameter vector (user factors, item factors, then biases when
  // present; the global mean stays fixed). For numerical checks.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> params);

  std::uint64_t seed = 0;
  int trained_epochs = 0;
  std::vector<double> objective_history;

  friend bool operator==(const FactorModel&, const FactorModel&) = default;

 private:
  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  int d_ = 0;
  bool biased_ = false;
  double mu_ = 0.0;
  std::vector<double> user_factors_;
  std::vector<double> item_factors_;
  std::vector<double> user_bias_;
  std::vector<double> item_bias_;
};

// Squared-error SGD over observed entries with L2 regularization. The biased
// variant adds mu + b_u + b_i. Objective is recorded per epoch; a non-finite
// value raises DivergedTrainingError naming the epoch.
FactorModel train_mf(const RatingMatrix& ratings, const TrainConfig& cfg, bool biased);

// Implicit-feedback ALS: preference 1/0, confidence 1 + alpha * rating,
// closed-form user and item solves per sweep. Objective recorded before
// training and after every sweep.
FactorModel train_wrmf(const RatingMatrix& ratings, const TrainConfig& cfg);

struct BprTriple {
  std::uint32_t user;
  std::uint32_t pos;
  std::uint32_t neg;
};

// Pairwise ranking SGD over sampled (user, positive, negative) triples.
FactorModel train_bpr(const RatingMatrix& ratings, const TrainConfig& cfg);

// Seeded triple sampler used by train_bpr; exposed so evaluation sets can be
// drawn reproducibly. Raises DegenerateDataError when no user has both an
// observed and an unobserved item.
std::vector<BprTriple> sample_bpr_triples(const RatingMatrix& ratings, std::size_t count,
                                          std::uint64_t seed);

// The objectives the trainers descend, for loss tracking and finite-difference
// verification. Gradients come back in parameters() layout.
double mf_objective(const FactorModel& model, std::span<const Observation> obs, double reg);
std::vector<double> mf_gradient(const FactorModel& model, std::span<const Observation> obs,
                                double reg);
double bpr_objective(const FactorModel& model, std::span<const BprTriple> triples, double reg);
std::vector<double> bpr_gradient(const FactorModel& model, std::span<const BprTriple> triples,
                                 double reg);
double wrmf_objective(const FactorModel& model, const RatingMatrix& ratings, double alpha,
                      double reg);

// Mean sigmoid of score differences over a triple set (the quantity BPR
// training pushes up).
double bpr_mean_sigmoid(const FactorModel& model, std::span<const BprTriple> triples);

// Text dump: header with dimensions and hyperparameters, then one row per
// factor vector at 9 significant digits.
void write_factor_model(const FactorModel& model, const TrainConfig& cfg, std::ostream& out);

}  // namespace tempocf
