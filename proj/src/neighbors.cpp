#include "tempocf/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "tempocf/errors.hpp"

namespace tempocf {

namespace {

double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

// Accumulates sums over the co-rated songs of two ascending rows.
struct CoRated {
  std::size_t n = 0;
  double sum_a = 0, sum_b = 0, dot = 0;
};

CoRated co_rated_sums(std::span<const RatingMatrix::Entry> a,
                      std::span<const RatingMatrix::Entry> b) {
  CoRated c;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].song < b[j].song) ++i;
    else if (b[j].song < a[i].song) ++j;
    else {
      c.sum_a += a[i].rating;
      c.sum_b += b[j].rating;
      c.dot += a[i].rating * b[j].rating;
      ++c.n; ++i; ++j;
    }
  }
  return c;
}

double row_norm_sq(std::span<const RatingMatrix::Entry> row) {
  double s = 0;
  for (const auto& e : row) s += e.rating * e.rating;
  return s;
}

}  // namespace

std::optional<double> pearson_similarity(std::span<const RatingMatrix::Entry> a,
                                         std::span<const RatingMatrix::Entry> b) {
  // Two-pass centered sums over the co-rated set.
  std::vector<std::pair<double, double>> pairs;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].song < b[j].song) ++i;
    else if (b[j].song < a[i].song) ++j;
    else {
      pairs.emplace_back(a[i].rating, b[j].rating);
      ++i; ++j;
    }
  }
  if (pairs.size() < 2) return std::nullopt;

  double mean_a = 0, mean_b = 0;
  for (const auto& [x, y] : pairs) { mean_a += x; mean_b += y; }
  mean_a /= static_cast<double>(pairs.size());
  mean_b /= static_cast<double>(pairs.size());

  double cov = 0, var_a = 0, var_b = 0;
  for (const auto& [x, y] : pairs) {
    double dx = x - mean_a, dy = y - mean_b;
    cov += dx * dy;
    var_a += dx * dx;
    var_b += dy * dy;
  }
  if (var_a == 0.0 || var_b == 0.0) return std::nullopt;
  return clamp_unit(cov / std::sqrt(var_a * var_b));
}

std::optional<double> cosine_similarity(std::span<const RatingMatrix::Entry> a,
                                        std::span<const RatingMatrix::Entry> b) {
  double na = row_norm_sq(a), nb = row_norm_sq(b);
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  CoRated c = co_rated_sums(a, b);
  return std::clamp(c.dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

std::optional<double> attribute_cosine_similarity(double attr_a,
                                                  std::span<const RatingMatrix::Entry> a,
                                                  double attr_b,
                                                  std::span<const RatingMatrix::Entry> b) {
  double na = row_norm_sq(a) + attr_a * attr_a;
  double nb = row_norm_sq(b) + attr_b * attr_b;
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  CoRated c = co_rated_sums(a, b);
  double dot = c.dot + attr_a * attr_b;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0);
}

NeighborModel build_neighbor_model(const RatingMatrix& ratings,
                                   const std::vector<UserProfile>& profiles,
                                   SimilarityKind kind, int k,
                                   const SimilarityOptions& options) {
  if (k < 1) throw Error("neighbor count k must be >= 1");
  auto n_users = static_cast<std::uint32_t>(ratings.user_count());

  // Scaled time-of-day attribute, only for the user-time kind.
  std::vector<double> attr;
  if (kind == SimilarityKind::UserTimeCosine) {
    if (profiles.size() != n_users)
      throw Error("user-time similarity requires a profile per user");
    attr.resize(n_users);
    double lo = profiles.empty() ? 0.0 : profiles[0].dtavg;
    double hi = lo;
    for (const auto& p : profiles) {
      lo = std::min(lo, p.dtavg);
      hi = std::max(hi, p.dtavg);
    }
    for (std::uint32_t u = 0; u < n_users; ++u) {
      double v = profiles[u].dtavg;
      if (options.scale_dtavg) {
        // All-equal attribute degenerates to the scale midpoint so identical
        // habits still count as agreement.
        v = hi > lo ? (v - lo) / (hi - lo) * options.dtavg_scale_max
                    : options.dtavg_scale_max / 2.0;
      }
      attr[u] = v;
    }
  }

  std::vector<std::vector<Neighbor>> lists(n_users);

#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t ai = 0; ai < static_cast<std::int64_t>(n_users); ++ai) {
    auto a = static_cast<std::uint32_t>(ai);
    auto row_a = ratings.row(a);
    std::vector<Neighbor> scored;
    for (std::uint32_t b = 0; b < n_users; ++b) {
      if (b == a) continue;
      std::optional<double> sim;
      switch (kind) {
        case SimilarityKind::Pearson:
          sim = pearson_similarity(row_a, ratings.row(b));
          if (sim && options.exclude_negative_pearson && *sim < 0) sim.reset();
          break;
        case SimilarityKind::Cosine: {
          sim = cosine_similarity(row_a, ratings.row(b));
          // Neighbors must share at least one co-rated song.
          if (sim && co_rated_sums(row_a, ratings.row(b)).n == 0) sim.reset();
          break;
        }
        case SimilarityKind::UserTimeCosine:
          sim = attribute_cosine_similarity(attr[a], row_a, attr[b], ratings.row(b));
          break;
      }
      if (sim) scored.push_back({b, *sim});
    }
    std::sort(scored.begin(), scored.end(), [](const Neighbor& x, const Neighbor& y) {
      if (x.score != y.score) return x.score > y.score;
      return x.user < y.user;
    });
    if (scored.size() > static_cast<std::size_t>(k)) scored.resize(static_cast<std::size_t>(k));
    lists[a] = std::move(scored);
  }

  return {kind, k, std::move(lists)};
}

Prediction predict(const NeighborModel& model, const RatingMatrix& ratings,
                   const std::vector<UserProfile>& profiles, std::uint32_t user,
                   std::uint32_t song) {
  if (user >= ratings.user_count())
    throw UnknownUserError("predict: user index out of range");
  double user_mean = profiles[user].mean_rating;

  double num = 0.0, den = 0.0;
  for (const auto& nb : model.neighbors_of(user)) {
    auto r = ratings.rating_for(nb.user, song);
    if (!r) continue;
    num += nb.score * (*r - profiles[nb.user].mean_rating);
    den += std::abs(nb.score);
  }
  if (den == 0.0) return {user_mean, true};
  double value = user_mean + num / den;
  if (!std::isfinite(value)) throw DivergedTrainingError("non-finite neighbor prediction");
  return {value, false};
}

std::vector<ScoredSong> rank_candidates(const NeighborModel& model, const RatingMatrix& ratings,
                                        const std::vector<UserProfile>& profiles,
                                        std::uint32_t user) {
  if (user >= ratings.user_count())
    throw UnknownUserError("rank_candidates: user index out of range");
  auto rated = ratings.row(user);
  std::vector<ScoredSong> out;
  out.reserve(ratings.song_count() - rated.size());
  std::size_t r = 0;
  for (std::uint32_t s = 0; s < ratings.song_count(); ++s) {
    if (r < rated.size() && rated[r].song == s) {
      ++r;
      continue;
    }
    Prediction p = predict(model, ratings, profiles, user, s);
    out.push_back({s, p.value, p.fallback});
  }
  if (out.empty()) throw EmptyCandidatesError("user rated every song in the catalog");
  std::sort(out.begin(), out.end(), [](const ScoredSong& a, const ScoredSong& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.song < b.song;
  });
  return out;
}

TopNList top_n(const NeighborModel& model, const RatingMatrix& ratings,
               const std::vector<UserProfile>& profiles, std::uint32_t user, int n) {
  auto ranked = rank_candidates(model, ratings, profiles, user);
  TopNList list;
  list.user = user;
  list.n = n;
  if (ranked.size() > static_cast<std::size_t>(n)) ranked.resize(static_cast<std::size_t>(n));
  list.items = std::move(ranked);
  return list;
}

void write_top_n_tsv(const RatingMatrix& ratings, const TopNList& list, std::ostream& out) {
  char buf[32];
  for (std::size_t i = 0; i < list.items.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f", list.items[i].score);
    out << ratings.user_id(list.user) << '\t' << (i + 1) << '\t'
        << ratings.song_id(list.items[i].song) << '\t' << buf << '\n';
  }
}

}  // namespace tempocf
