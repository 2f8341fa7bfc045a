#include "tempocf/ratings.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "tempocf/errors.hpp"

namespace tempocf {

double decay_play(Instant instant, Instant t_max, const DecayConfig& cfg) {
  if (instant > t_max)
    throw InvalidTimestampError("play instant after t_max: " + format_iso8601_utc(instant));
  if (cfg.lambda == 0.0) return 1.0;
  double age = static_cast<double>(t_max - instant);
  return std::exp(-cfg.lambda * age / cfg.time_unit_seconds);
}

DecayPlayMatrix decay_frequencies(const PlayLog& log, const DecayConfig& cfg) {
  if (log.empty()) throw EmptyLogError("decay_frequencies on an empty log");
  Instant t_max = cfg.t_max_override.value_or(log.t_max());
  if (t_max < log.t_max())
    throw InvalidTimestampError("t_max override predates the newest play: " +
                                format_iso8601_utc(t_max));

  auto n_users = static_cast<std::uint32_t>(log.user_count());
  std::vector<DecayPlayMatrix::Row> rows(n_users);

#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t ui = 0; ui < static_cast<std::int64_t>(n_users); ++ui) {
    auto u = static_cast<std::uint32_t>(ui);
    auto& row = rows[u];
    // Events are sorted by (song, instant), so numerators accumulate in a
    // fixed order and songs come out ascending.
    for (const auto& e : log.events_for_user(u)) {
      double w = decay_play(e.instant, t_max, cfg);
      if (row.songs.empty() || row.songs.back() != e.song) {
        row.songs.push_back(e.song);
        row.numerator.push_back(w);
      } else {
        row.numerator.back() += w;
      }
    }
    row.denominator = 0.0;
    for (double num : row.numerator) row.denominator += num;
    row.frequency.resize(row.numerator.size());
    for (std::size_t i = 0; i < row.numerator.size(); ++i)
      row.frequency[i] = row.numerator[i] / row.denominator;
  }

  return {log.user_ids(), log.song_ids(), std::move(rows), cfg.lambda};
}

std::optional<double> RatingMatrix::rating_for(std::uint32_t u, std::uint32_t s) const {
  const auto& row = rows_[u];
  auto it = std::lower_bound(row.begin(), row.end(), s,
                             [](const Entry& e, std::uint32_t song) { return e.song < song; });
  if (it == row.end() || it->song != s) return std::nullopt;
  return it->rating;
}

std::optional<std::uint32_t> RatingMatrix::user_index(std::string_view id) const {
  auto it = std::lower_bound(user_ids_.begin(), user_ids_.end(), id);
  if (it == user_ids_.end() || *it != id) return std::nullopt;
  return static_cast<std::uint32_t>(it - user_ids_.begin());
}

std::optional<std::uint32_t> RatingMatrix::song_index(std::string_view id) const {
  auto it = std::lower_bound(song_ids_.begin(), song_ids_.end(), id);
  if (it == song_ids_.end() || *it != id) return std::nullopt;
  return static_cast<std::uint32_t>(it - song_ids_.begin());
}

std::size_t RatingMatrix::entry_count() const {
  std::size_t n = 0;
  for (const auto& row : rows_) n += row.size();
  return n;
}

bool operator==(const RatingMatrix& a, const RatingMatrix& b) {
  return a.user_ids_ == b.user_ids_ && a.song_ids_ == b.song_ids_ && a.rows_ == b.rows_ &&
         a.variant_ == b.variant_;
}

RatingMatrix ratings_from_frequencies(const DecayPlayMatrix& freqs) {
  auto n_users = static_cast<std::uint32_t>(freqs.user_count());
  std::vector<std::vector<RatingMatrix::Entry>> rows(n_users);

#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t ui = 0; ui < static_cast<std::int64_t>(n_users); ++ui) {
    auto u = static_cast<std::uint32_t>(ui);
    const auto& row = freqs.row(u);
    std::size_t n = row.songs.size();

    // Sort song positions by frequency descending, song index ascending.
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      if (row.frequency[a] != row.frequency[b]) return row.frequency[a] > row.frequency[b];
      return row.songs[a] < row.songs[b];
    });

    // Walk groups of equal frequency: every member gets the prefix sum of the
    // strictly greater frequencies, so ties share a rank.
    std::vector<RatingMatrix::Entry> entries(n);
    double prefix = 0.0;
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      double f = row.frequency[order[i]];
      double group_sum = 0.0;
      while (j < n && row.frequency[order[j]] == f) {
        group_sum += row.frequency[order[j]];
        ++j;
      }
      double rating = 4.0 * (1.0 - prefix);
      for (std::size_t p = i; p < j; ++p)
        entries[p] = {row.songs[order[p]], rating};
      prefix += group_sum;
      i = j;
    }

    std::sort(entries.begin(), entries.end(),
              [](const RatingMatrix::Entry& a, const RatingMatrix::Entry& b) {
                return a.song < b.song;
              });
    rows[u] = std::move(entries);
  }

  RatingVariant variant = freqs.lambda() == 0.0 ? RatingVariant::Plain : RatingVariant::Decay;
  return {freqs.user_ids(), freqs.song_ids(), std::move(rows), variant};
}

RatingMatrix plain_ratings(const PlayLog& log) {
  DecayConfig cfg;
  cfg.lambda = 0.0;
  return ratings_from_frequencies(decay_frequencies(log, cfg));
}

std::vector<UserProfile> user_profiles(const PlayLog& log, const RatingMatrix& ratings,
                                       const PlayLog* dtavg_log) {
  if (log.user_ids() != ratings.user_ids())
    throw Error("user_profiles: ratings were not derived from this log");
  const PlayLog& hours_from = dtavg_log ? *dtavg_log : log;

  std::vector<UserProfile> profiles(log.user_count());
  for (std::uint32_t u = 0; u < log.user_count(); ++u) {
    UserProfile& p = profiles[u];
    p.user = log.user_id(u);

    auto events = log.events_for_user(u);
    p.total_plays = events.size();

    auto hu = hours_from.user_index(p.user);
    if (!hu) throw UnknownUserError("dtavg source log lacks user " + p.user);
    double hour_sum = 0.0;
    std::uint64_t hour_n = 0;
    for (const auto& e : hours_from.events_for_user(*hu)) {
      hour_sum += hours_from.event_local_fractional_hour(e);
      ++hour_n;
    }
    p.dtavg = hour_sum / static_cast<double>(hour_n);

    double rating_sum = 0.0;
    auto row = ratings.row(u);
    for (const auto& e : row) rating_sum += e.rating;
    p.mean_rating = row.empty() ? 0.0 : rating_sum / static_cast<double>(row.size());
  }
  return profiles;
}

void write_ratings_tsv(const RatingMatrix& ratings, std::ostream& out) {
  char buf[32];
  for (std::uint32_t u = 0; u < ratings.user_count(); ++u) {
    auto row = ratings.row(u);
    std::vector<RatingMatrix::Entry> sorted(row.begin(), row.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const RatingMatrix::Entry& a, const RatingMatrix::Entry& b) {
                if (a.rating != b.rating) return a.rating > b.rating;
                return a.song < b.song;
              });
    for (const auto& e : sorted) {
      std::snprintf(buf, sizeof(buf), "%.6f", e.rating);
      out << ratings.user_id(u) << '\t' << ratings.song_id(e.song) << '\t' << buf << '\n';
    }
  }
}

}  // namespace tempocf
