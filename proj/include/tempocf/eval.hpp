#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "tempocf/latent.hpp"
#include "tempocf/neighbors.hpp"
#include "tempocf/playlog.hpp"
#include "tempocf/ratings.hpp"

namespace tempocf {

// ---------------------------------------------------------------------------
// Rating-prediction metrics
// ---------------------------------------------------------------------------

// Mean absolute error over paired predictions/actuals.
double mae(std::span<const double> predictions, std::span<const double> actuals);

double rmse(std::span<const double> predictions, std::span<const double> actuals);

// MAE normalized by the rating range.
double nmae(double mae_value, double r_max, double r_min);

// ---------------------------------------------------------------------------
// Ranking metrics (all order-only)
// ---------------------------------------------------------------------------

// Share of the first k ranked items that are relevant; k stays in the
// denominator even when the list is shorter.
double precision_at_k(std::span<const std::uint32_t> ranked,
                      const std::unordered_set<std::uint32_t>& relevant, int k);

// Mean precision at the ranks of found relevant items, divided by the size
// of the full relevant set; unlisted relevant items contribute zero.
// `relevant_total` >= the number of relevant items that can appear at all.
double average_precision(std::span<const std::uint32_t> ranked,
                         const std::unordered_set<std::uint32_t>& relevant,
                         std::size_t relevant_total);

double dcg(std::span<const double> gains);

// DCG of the listed gains over the ideal DCG of `ideal_gains_desc` truncated
// to n. nullopt when the ideal gain is zero (nothing to normalize by).
std::optional<double> ndcg(std::span<const double> list_gains,
                           std::span<const double> ideal_gains_desc, int n);

// Probability that a relevant candidate outranks a non-relevant one, ties
// counted half; computed by rank statistics over the scores. nullopt without
// at least one relevant and one non-relevant candidate.
std::optional<double> auc_from_scores(std::span<const std::pair<double, bool>> scored);

// ---------------------------------------------------------------------------
// Experiment harness
// ---------------------------------------------------------------------------

enum class Method { KnnPearson, KnnCosine, UserTimeKnn, MF, BMF, WRMF, BPRMF };

std::string_view method_name(Method m);
std::optional<Method> method_from_name(std::string_view name);

// Which tables a method belongs to: error metrics for the rating predictors,
// rank metrics for the top-N recommenders.
bool method_has_rating_metrics(Method m);
bool method_has_ranking_metrics(Method m);

enum class DtavgScope { TrainOnly, TrainAndTest };

struct ExperimentConfig {
  DecayConfig decay;       // lambda = 0.4 by default; Plain runs force 0
  int k = 15;              // neighbor count
  int top_n = 100;         // recommendation list length
  SimilarityOptions sim;
  TrainConfig train;
  DtavgScope dtavg_scope = DtavgScope::TrainOnly;
};

// One grid cell's result. Metric fields are NaN when the family does not
// apply to the method.
struct EvalReport {
  std::string method;
  std::string context;
  std::string variant;
  double lambda = 0.0;
  int k = 0;
  int n = 0;
  double mae_value = nan_metric();
  double rmse_value = nan_metric();
  double nmae_value = nan_metric();
  double auc_value = nan_metric();
  double ndcg_value = nan_metric();
  double map_value = nan_metric();
  double prec5 = nan_metric();
  double prec10 = nan_metric();
  double prec15 = nan_metric();
  std::size_t prediction_count = 0;
  std::size_t fallback_count = 0;
  std::size_t skipped_users = 0;
  std::vector<std::string> skipped_notes;  // one line per (user, stage) skip

  static double nan_metric();

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Full protocol for one cell: context pre-filtering of both logs, the rating
// pipeline on each side separately, pair dedup against train, method
// training, then scoring against the test-side ground truth.
EvalReport run_experiment(const PlayLog& train, const PlayLog& test, ContextSegment context,
                          RatingVariant variant, Method method, const ExperimentConfig& cfg);

// Restricts the test set to the m users with the most recent first play
// (over train+test) and runs the 24-hour grid.
std::vector<EvalReport> cold_start_experiment(const PlayLog& train, const PlayLog& test, int m,
                                              std::span<const Method> methods,
                                              std::span<const RatingVariant> variants,
                                              const ExperimentConfig& cfg);

// Fixed-header CSV serialization.
extern const char* const kReportCsvHeader;
void write_report_csv_row(const EvalReport& report, std::ostream& out);

}  // namespace tempocf
