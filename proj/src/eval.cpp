#include "tempocf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <unordered_map>

#include "tempocf/errors.hpp"

namespace tempocf {

// ---------------------------------------------------------------------------
// Rating-prediction metrics
// ---------------------------------------------------------------------------

double mae(std::span<const double> predictions, std::span<const double> actuals) {
  if (predictions.size() != actuals.size()) throw Error("mae: length mismatch");
  if (predictions.empty()) throw EmptyEvaluationError("mae of an empty pairing");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    sum += std::abs(actuals[i] - predictions[i]);
  return sum / static_cast<double>(predictions.size());
}

double rmse(std::span<const double> predictions, std::span<const double> actuals) {
  if (predictions.size() != actuals.size()) throw Error("rmse: length mismatch");
  if (predictions.empty()) throw EmptyEvaluationError("rmse of an empty pairing");
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    double e = actuals[i] - predictions[i];
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(predictions.size()));
}

double nmae(double mae_value, double r_max, double r_min) {
  if (!(r_max > r_min)) throw InvalidRangeError("nmae: r_max must exceed r_min");
  return mae_value / (r_max - r_min);
}

// ---------------------------------------------------------------------------
// Ranking metrics
// ---------------------------------------------------------------------------

double precision_at_k(std::span<const std::uint32_t> ranked,
                      const std::unordered_set<std::uint32_t>& relevant, int k) {
  if (k < 1) throw InvalidRangeError("precision_at_k: k must be >= 1");
  std::size_t hits = 0;
  std::size_t limit = std::min(ranked.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < limit; ++i)
    if (relevant.count(ranked[i])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(k);
}

double average_precision(std::span<const std::uint32_t> ranked,
                         const std::unordered_set<std::uint32_t>& relevant,
                         std::size_t relevant_total) {
  if (relevant_total == 0) throw EmptyEvaluationError("average_precision without relevant items");
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (relevant.count(ranked[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(relevant_total);
}

double dcg(std::span<const double> gains) {
  double sum = 0.0;
  for (std::size_t i = 0; i < gains.size(); ++i)
    sum += gains[i] / std::log2(static_cast<double>(i + 2));
  return sum;
}

std::optional<double> ndcg(std::span<const double> list_gains,
                           std::span<const double> ideal_gains_desc, int n) {
  auto ideal = ideal_gains_desc.subspan(
      0, std::min(ideal_gains_desc.size(), static_cast<std::size_t>(n)));
  double idcg = dcg(ideal);
  if (idcg == 0.0) return std::nullopt;
  return dcg(list_gains) / idcg;
}

std::optional<double> auc_from_scores(std::span<const std::pair<double, bool>> scored) {
  std::size_t n_pos = 0;
  for (const auto& [score, rel] : scored) n_pos += rel ? 1 : 0;
  std::size_t n_neg = scored.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  // Rank-sum with average ranks on ties counts concordant pairs with ties
  // worth one half.
  std::vector<std::pair<double, bool>> sorted(scored.begin(), scored.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) ++j;
    double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (sorted[t].second) rank_sum_pos += avg_rank;
    i = j;
  }
  double u_stat = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u_stat / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// ---------------------------------------------------------------------------
// Methods
// ---------------------------------------------------------------------------

std::string_view method_name(Method m) {
  switch (m) {
    case Method::KnnPearson: return "knn-pearson";
    case Method::KnnCosine: return "knn-cosine";
    case Method::UserTimeKnn: return "user-time-knn";
    case Method::MF: return "mf";
    case Method::BMF: return "bmf";
    case Method::WRMF: return "wrmf";
    case Method::BPRMF: return "bprmf";
  }
  return "?";
}

std::optional<Method> method_from_name(std::string_view name) {
  for (Method m : {Method::KnnPearson, Method::KnnCosine, Method::UserTimeKnn, Method::MF,
                   Method::BMF, Method::WRMF, Method::BPRMF})
    if (method_name(m) == name) return m;
  return std::nullopt;
}

bool method_has_rating_metrics(Method m) {
  switch (m) {
    case Method::KnnPearson:
    case Method::KnnCosine:
    case Method::UserTimeKnn:
    case Method::MF:
    case Method::BMF:
      return true;
    case Method::WRMF:
    case Method::BPRMF:
      return false;
  }
  return false;
}

bool method_has_ranking_metrics(Method m) {
  switch (m) {
    case Method::KnnCosine:
    case Method::UserTimeKnn:
    case Method::WRMF:
    case Method::BPRMF:
      return true;
    case Method::KnnPearson:
    case Method::MF:
    case Method::BMF:
      return false;
  }
  return false;
}

double EvalReport::nan_metric() { return std::numeric_limits<double>::quiet_NaN(); }

// ---------------------------------------------------------------------------
// Harness internals
// ---------------------------------------------------------------------------

namespace {

RatingMatrix build_variant_ratings(const PlayLog& log, RatingVariant variant,
                                   const ExperimentConfig& cfg) {
  if (variant == RatingVariant::Plain) return plain_ratings(log);
  return ratings_from_frequencies(decay_frequencies(log, cfg.decay));
}

struct TestPair {
  std::optional<std::uint32_t> train_song;
  std::string song_id;
  double actual;
};

struct UserTestSet {
  std::uint32_t train_user;
  std::string user_id;
  std::vector<TestPair> pairs;  // ascending test song id
};

struct DedupedTest {
  std::vector<UserTestSet> users;
  std::vector<std::string> notes;
  std::unordered_set<std::string> skipped_user_ids;
};

// Maps the test-side rating records into the train universe and drops pairs
// already rated in train.
DedupedTest dedupe_against_train(const RatingMatrix& train_r, const RatingMatrix& test_r) {
  DedupedTest out;
  std::size_t total_pairs = 0;
  for (std::uint32_t tu = 0; tu < test_r.user_count(); ++tu) {
    const std::string& user_id = test_r.user_id(tu);
    auto train_user = train_r.user_index(user_id);
    if (!train_user) {
      out.notes.push_back("user " + user_id + ": not in training set");
      out.skipped_user_ids.insert(user_id);
      continue;
    }
    UserTestSet set;
    set.train_user = *train_user;
    set.user_id = user_id;
    for (const auto& e : test_r.row(tu)) {
      const std::string& song_id = test_r.song_id(e.song);
      auto train_song = train_r.song_index(song_id);
      if (train_song && train_r.rating_for(*train_user, *train_song)) continue;  // seen in train
      set.pairs.push_back({train_song, song_id, e.rating});
    }
    if (set.pairs.empty()) {
      out.notes.push_back("user " + user_id + ": every test pair occurs in train");
      out.skipped_user_ids.insert(user_id);
      continue;
    }
    total_pairs += set.pairs.size();
    out.users.push_back(std::move(set));
  }
  if (total_pairs == 0)
    throw EmptyEvaluationError("no evaluable test pairs after dedup against train");
  return out;
}

// Uniform scoring interface over K-NN and latent-factor methods.
class Scorer {
 public:
  virtual ~Scorer() = default;
  // Unknown songs (nullopt) score as the method's fallback.
  virtual Prediction score_pair(std::uint32_t user, std::optional<std::uint32_t> song) const = 0;
  // Full ranked candidate list: train catalog minus the user's rated songs.
  virtual std::vector<ScoredSong> rank(std::uint32_t user) const = 0;
};

class KnnScorer final : public Scorer {
 public:
  KnnScorer(const RatingMatrix& ratings, std::vector<UserProfile> profiles, SimilarityKind kind,
            const ExperimentConfig& cfg)
      : ratings_(ratings), profiles_(std::move(profiles)),
        model_(build_neighbor_model(ratings, profiles_, kind, cfg.k, cfg.sim)) {}

  Prediction score_pair(std::uint32_t user, std::optional<std::uint32_t> song) const override {
    if (!song) return {profiles_[user].mean_rating, true};
    return predict(model_, ratings_, profiles_, user, *song);
  }

  std::vector<ScoredSong> rank(std::uint32_t user) const override {
    // Same arithmetic as predict(), batched: accumulate neighbor
    // contributions per song in neighbor-list order.
    auto n_songs = static_cast<std::uint32_t>(ratings_.song_count());
    std::vector<double> num(n_songs, 0.0), den(n_songs, 0.0);
    for (const auto& nb : model_.neighbors_of(user)) {
      double nb_mean = profiles_[nb.user].mean_rating;
      for (const auto& e : ratings_.row(nb.user)) {
        num[e.song] += nb.score * (e.rating - nb_mean);
        den[e.song] += std::abs(nb.score);
      }
    }
    double user_mean = profiles_[user].mean_rating;
    auto rated = ratings_.row(user);
    std::vector<ScoredSong> out;
    out.reserve(n_songs - rated.size());
    std::size_t r = 0;
    for (std::uint32_t s = 0; s < n_songs; ++s) {
      if (r < rated.size() && rated[r].song == s) {
        ++r;
        continue;
      }
      if (den[s] == 0.0) out.push_back({s, user_mean, true});
      else out.push_back({s, user_mean + num[s] / den[s], false});
    }
    std::sort(out.begin(), out.end(), [](const ScoredSong& a, const ScoredSong& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.song < b.song;
    });
    return out;
  }

 private:
  const RatingMatrix& ratings_;
  std::vector<UserProfile> profiles_;
  NeighborModel model_;
};

class FactorScorer final : public Scorer {
 public:
  FactorScorer(const RatingMatrix& ratings, FactorModel model)
      : ratings_(ratings), model_(std::move(model)) {}

  Prediction score_pair(std::uint32_t user, std::optional<std::uint32_t> song) const override {
    auto scored = model_.predict(user, song);
    return {scored.value, scored.fallback};
  }

  std::vector<ScoredSong> rank(std::uint32_t user) const override {
    auto n_songs = static_cast<std::uint32_t>(ratings_.song_count());
    auto rated = ratings_.row(user);
    std::vector<ScoredSong> out;
    out.reserve(n_songs - rated.size());
    std::size_t r = 0;
    for (std::uint32_t s = 0; s < n_songs; ++s) {
      if (r < rated.size() && rated[r].song == s) {
        ++r;
        continue;
      }
      out.push_back({s, model_.score(user, s), false});
    }
    std::sort(out.begin(), out.end(), [](const ScoredSong& a, const ScoredSong& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.song < b.song;
    });
    return out;
  }

 private:
  const RatingMatrix& ratings_;
  FactorModel model_;
};

std::unique_ptr<Scorer> make_scorer(Method method, const RatingMatrix& train_r,
                                    std::vector<UserProfile> profiles,
                                    const ExperimentConfig& cfg) {
  TrainConfig tc = cfg.train;
  switch (method) {
    case Method::KnnPearson:
      return std::make_unique<KnnScorer>(train_r, std::move(profiles), SimilarityKind::Pearson, cfg);
    case Method::KnnCosine:
      return std::make_unique<KnnScorer>(train_r, std::move(profiles), SimilarityKind::Cosine, cfg);
    case Method::UserTimeKnn:
      return std::make_unique<KnnScorer>(train_r, std::move(profiles),
                                         SimilarityKind::UserTimeCosine, cfg);
    case Method::MF:
      return std::make_unique<FactorScorer>(train_r, train_mf(train_r, tc, false));
    case Method::BMF:
      return std::make_unique<FactorScorer>(train_r, train_mf(train_r, tc, true));
    case Method::WRMF:
      return std::make_unique<FactorScorer>(train_r, train_wrmf(train_r, tc));
    case Method::BPRMF:
      return std::make_unique<FactorScorer>(train_r, train_bpr(train_r, tc));
  }
  throw Error("unknown method");
}

struct UserRankMetrics {
  bool ranked = false;
  double prec5 = 0, prec10 = 0, prec15 = 0;
  std::optional<double> ap;
  std::optional<double> ndcg_value;
  std::optional<double> auc_value;
  std::vector<std::string> notes;
};

UserRankMetrics rank_metrics_for_user(const UserTestSet& set, const Scorer& scorer,
                                      const RatingMatrix& train_r, int top_n_len) {
  UserRankMetrics out;
  std::uint32_t u = set.train_user;

  if (train_r.row(u).size() >= train_r.song_count()) {
    out.notes.push_back("user " + set.user_id + ": no candidate songs (rated full catalog)");
    return out;
  }

  // Relevant items: the N highest-rated test songs (all of them when the
  // user has fewer than N).
  std::vector<const TestPair*> by_rating;
  by_rating.reserve(set.pairs.size());
  for (const auto& p : set.pairs) by_rating.push_back(&p);
  std::sort(by_rating.begin(), by_rating.end(), [](const TestPair* a, const TestPair* b) {
    if (a->actual != b->actual) return a->actual > b->actual;
    return a->song_id < b->song_id;
  });
  std::size_t relevant_total = std::min(by_rating.size(), static_cast<std::size_t>(top_n_len));

  std::unordered_set<std::uint32_t> relevant_idx;
  for (std::size_t i = 0; i < relevant_total; ++i)
    if (by_rating[i]->train_song) relevant_idx.insert(*by_rating[i]->train_song);

  std::unordered_map<std::uint32_t, double> gain_by_song;
  for (const auto& p : set.pairs)
    if (p.train_song) gain_by_song.emplace(*p.train_song, p.actual);

  std::vector<double> ideal_gains;
  ideal_gains.reserve(set.pairs.size());
  for (const auto* p : by_rating) ideal_gains.push_back(p->actual);

  auto ranked = scorer.rank(u);
  out.ranked = true;

  std::size_t list_len = std::min(ranked.size(), static_cast<std::size_t>(top_n_len));
  std::vector<std::uint32_t> top_songs(list_len);
  std::vector<double> list_gains(list_len);
  for (std::size_t i = 0; i < list_len; ++i) {
    top_songs[i] = ranked[i].song;
    auto it = gain_by_song.find(ranked[i].song);
    list_gains[i] = it == gain_by_song.end() ? 0.0 : it->second;
  }

  out.prec5 = precision_at_k(top_songs, relevant_idx, 5);
  out.prec10 = precision_at_k(top_songs, relevant_idx, 10);
  out.prec15 = precision_at_k(top_songs, relevant_idx, 15);

  if (relevant_total == 0) {
    out.notes.push_back("user " + set.user_id + ": no relevant test items (map)");
  } else {
    out.ap = average_precision(top_songs, relevant_idx, relevant_total);
  }

  out.ndcg_value = ndcg(list_gains, ideal_gains, top_n_len);
  if (!out.ndcg_value)
    out.notes.push_back("user " + set.user_id + ": zero ideal gain (ndcg)");

  std::vector<std::pair<double, bool>> scored;
  scored.reserve(ranked.size());
  for (const auto& s : ranked) scored.emplace_back(s.score, relevant_idx.count(s.song) > 0);
  out.auc_value = auc_from_scores(scored);
  if (!out.auc_value)
    out.notes.push_back("user " + set.user_id +
                        ": auc needs a relevant and a non-relevant candidate");
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// run_experiment
// ---------------------------------------------------------------------------

EvalReport run_experiment(const PlayLog& train, const PlayLog& test, ContextSegment context,
                          RatingVariant variant, Method method, const ExperimentConfig& cfg) {
  PlayLog train_ctx = filter_context(train, context);
  PlayLog test_ctx = filter_context(test, context);

  ExperimentConfig effective = cfg;
  if (variant == RatingVariant::Plain) effective.decay.lambda = 0.0;

  RatingMatrix train_r = build_variant_ratings(train_ctx, variant, effective);
  RatingMatrix test_r = build_variant_ratings(test_ctx, variant, effective);
  DedupedTest deduped = dedupe_against_train(train_r, test_r);

  PlayLog merged;
  const PlayLog* dtavg_log = nullptr;
  if (cfg.dtavg_scope == DtavgScope::TrainAndTest) {
    merged = merge_logs(train_ctx, test_ctx);
    dtavg_log = &merged;
  }
  auto profiles = user_profiles(train_ctx, train_r, dtavg_log);

  auto scorer = make_scorer(method, train_r, std::move(profiles), effective);

  EvalReport report;
  report.method = std::string(method_name(method));
  report.context = std::string(context.name());
  report.variant = std::string(variant_name(variant));
  report.lambda = variant == RatingVariant::Plain ? 0.0 : cfg.decay.lambda;
  report.k = cfg.k;
  report.n = cfg.top_n;
  report.skipped_notes = deduped.notes;
  auto skipped_ids = deduped.skipped_user_ids;

  if (method_has_rating_metrics(method)) {
    std::vector<double> predictions, actuals;
    for (const auto& set : deduped.users) {
      for (const auto& pair : set.pairs) {
        Prediction p = scorer->score_pair(set.train_user, pair.train_song);
        predictions.push_back(p.value);
        actuals.push_back(pair.actual);
        if (p.fallback) ++report.fallback_count;
      }
    }
    report.prediction_count = predictions.size();
    report.mae_value = mae(predictions, actuals);
    report.rmse_value = rmse(predictions, actuals);
    report.nmae_value = nmae(report.mae_value, 4.0, 0.0);
  }

  if (method_has_ranking_metrics(method)) {
    std::vector<UserRankMetrics> per_user(deduped.users.size());
    std::vector<std::string> failures(deduped.users.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(deduped.users.size()); ++i) {
      try {
        per_user[static_cast<std::size_t>(i)] = rank_metrics_for_user(
            deduped.users[static_cast<std::size_t>(i)], *scorer, train_r, cfg.top_n);
      } catch (const std::exception& ex) {
        failures[static_cast<std::size_t>(i)] = ex.what();
      }
    }
    for (const auto& f : failures)
      if (!f.empty()) throw Error("ranking evaluation failed: " + f);

    double prec5_sum = 0, prec10_sum = 0, prec15_sum = 0;
    std::size_t ranked_n = 0;
    double ap_sum = 0, ndcg_sum = 0, auc_sum = 0;
    std::size_t ap_n = 0, ndcg_n = 0, auc_n = 0;
    for (std::size_t i = 0; i < per_user.size(); ++i) {
      const auto& m = per_user[i];
      for (const auto& note : m.notes) {
        report.skipped_notes.push_back(note);
        skipped_ids.insert(deduped.users[i].user_id);
      }
      if (!m.ranked) continue;
      ++ranked_n;
      prec5_sum += m.prec5;
      prec10_sum += m.prec10;
      prec15_sum += m.prec15;
      if (m.ap) { ap_sum += *m.ap; ++ap_n; }
      if (m.ndcg_value) { ndcg_sum += *m.ndcg_value; ++ndcg_n; }
      if (m.auc_value) { auc_sum += *m.auc_value; ++auc_n; }
    }
    if (ranked_n == 0) throw EmptyEvaluationError("no users could be ranked");
    report.prec5 = prec5_sum / static_cast<double>(ranked_n);
    report.prec10 = prec10_sum / static_cast<double>(ranked_n);
    report.prec15 = prec15_sum / static_cast<double>(ranked_n);
    if (ap_n == 0) throw EmptyEvaluationError("no users eligible for MAP");
    report.map_value = ap_sum / static_cast<double>(ap_n);
    if (ndcg_n == 0) throw EmptyEvaluationError("no users eligible for NDCG");
    report.ndcg_value = ndcg_sum / static_cast<double>(ndcg_n);
    if (auc_n == 0) throw EmptyEvaluationError("no users eligible for AUC");
    report.auc_value = auc_sum / static_cast<double>(auc_n);
  }

  report.skipped_users = skipped_ids.size();
  return report;
}

std::vector<EvalReport> cold_start_experiment(const PlayLog& train, const PlayLog& test, int m,
                                              std::span<const Method> methods,
                                              std::span<const RatingVariant> variants,
                                              const ExperimentConfig& cfg) {
  if (m < 1) throw InvalidRangeError("cold_start_experiment: m must be >= 1");
  PlayLog merged = merge_logs(train, test);
  if (static_cast<std::size_t>(m) > merged.user_count())
    throw DegenerateDataError("cold_start_experiment: fewer users than requested");

  // First play per user over the whole history; newest first.
  struct FirstPlay {
    std::string user;
    Instant first;
  };
  std::vector<FirstPlay> firsts;
  firsts.reserve(merged.user_count());
  for (std::uint32_t u = 0; u < merged.user_count(); ++u) {
    Instant first = merged.events_for_user(u).front().instant;
    for (const auto& e : merged.events_for_user(u)) first = std::min(first, e.instant);
    firsts.push_back({merged.user_id(u), first});
  }
  std::sort(firsts.begin(), firsts.end(), [](const FirstPlay& a, const FirstPlay& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.user < b.user;
  });
  std::vector<std::string> newest;
  for (int i = 0; i < m; ++i) newest.push_back(firsts[static_cast<std::size_t>(i)].user);

  PlayLog restricted_test = filter_users(test, newest);

  std::vector<EvalReport> reports;
  for (Method method : methods)
    for (RatingVariant variant : variants)
      reports.push_back(run_experiment(train, restricted_test, ContextSegment::day24h(), variant,
                                       method, cfg));
  return reports;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

const char* const kReportCsvHeader =
    "method,context,variant,lambda,k,N,mae,rmse,nmae,auc,ndcg,map,prec5,prec10,prec15,"
    "fallback_count,skipped_users";

namespace {

std::string metric_cell(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void write_report_csv_row(const EvalReport& r, std::ostream& out) {
  char lambda_buf[32];
  std::snprintf(lambda_buf, sizeof(lambda_buf), "%g", r.lambda);
  out << r.method << ',' << r.context << ',' << r.variant << ',' << lambda_buf << ',' << r.k
      << ',' << r.n << ',' << metric_cell(r.mae_value) << ',' << metric_cell(r.rmse_value) << ','
      << metric_cell(r.nmae_value) << ',' << metric_cell(r.auc_value) << ','
      << metric_cell(r.ndcg_value) << ',' << metric_cell(r.map_value) << ','
      << metric_cell(r.prec5) << ',' << metric_cell(r.prec10) << ',' << metric_cell(r.prec15)
      << ',' << r.fallback_count << ',' << r.skipped_users << '\n';
}

}  // namespace tempocf
