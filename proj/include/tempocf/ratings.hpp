#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tempocf/playlog.hpp"
#include "tempocf/time.hpp"

namespace tempocf {

// Exponential recency weighting of plays: weight = exp(-lambda * age / time_unit).
// lambda = 0 disables decay (every play weighs 1).
struct DecayConfig {
  double lambda = 0.4;
  double time_unit_seconds = kJulianYearSeconds;
  // Reference instant for ages; defaults to the processed log's own maximum.
  std::optional<Instant> t_max_override;
};

// Weight of one play relative to t_max. Strictly increasing in `instant` for
// lambda > 0. Throws InvalidTimestampError when instant > t_max.
double decay_play(Instant instant, Instant t_max, const DecayConfig& cfg);

// Per-user share of total decayed play weight per song. Rows sum to 1.
class DecayPlayMatrix {
 public:
  struct Row {
    std::vector<std::uint32_t> songs;   // ascending song index
    std::vector<double> frequency;      // dPlayF, in (0, 1]
    std::vector<double> numerator;      // summed decay plays per song
    double denominator = 0.0;           // summed decay plays of the user
  };

  DecayPlayMatrix(std::vector<std::string> user_ids, std::vector<std::string> song_ids,
                  std::vector<Row> rows, double lambda)
      : user_ids_(std::move(user_ids)), song_ids_(std::move(song_ids)),
        rows_(std::move(rows)), lambda_(lambda) {}

  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& song_ids() const { return song_ids_; }
  const Row& row(std::uint32_t u) const { return rows_[u]; }
  std::size_t user_count() const { return rows_.size(); }
  double lambda() const { return lambda_; }

 private:
  std::vector<std::string> user_ids_;
  std::vector<std::string> song_ids_;
  std::vector<Row> rows_;
  double lambda_;
};

DecayPlayMatrix decay_frequencies(const PlayLog& log, const DecayConfig& cfg);

enum class RatingVariant { Plain, Decay };

inline std::string_view variant_name(RatingVariant v) {
  return v == RatingVariant::Plain ? "plain" : "decay";
}

// Sparse user x song implicit ratings in (0, 4]. Unplayed pairs are absent,
// never stored as zero.
class RatingMatrix {
 public:
  struct Entry {
    std::uint32_t song;
    double rating;
  };

  RatingMatrix() = default;
  RatingMatrix(std::vector<std::string> user_ids, std::vector<std::string> song_ids,
               std::vector<std::vector<Entry>> rows, RatingVariant variant)
      : user_ids_(std::move(user_ids)), song_ids_(std::move(song_ids)),
        rows_(std::move(rows)), variant_(variant) {}

  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& song_ids() const { return song_ids_; }
  std::size_t user_count() const { return user_ids_.size(); }
  std::size_t song_count() const { return song_ids_.size(); }
  RatingVariant variant() const { return variant_; }

  std::span<const Entry> row(std::uint32_t u) const { return rows_[u]; }
  std::optional<double> rating_for(std::uint32_t u, std::uint32_t s) const;

  std::optional<std::uint32_t> user_index(std::string_view id) const;
  std::optional<std::uint32_t> song_index(std::string_view id) const;
  const std::string& user_id(std::uint32_t u) const { return user_ids_[u]; }
  const std::string& song_id(std::uint32_t s) const { return song_ids_[s]; }

  std::size_t entry_count() const;

  friend bool operator==(const RatingMatrix& a, const RatingMatrix& b);

 private:
  std::vector<std::string> user_ids_;
  std::vector<std::string> song_ids_;
  std::vector<std::vector<Entry>> rows_;  // per user, ascending song index
  RatingVariant variant_ = RatingVariant::Plain;
};

inline bool operator==(const RatingMatrix::Entry& a, const RatingMatrix::Entry& b) {
  return a.song == b.song && a.rating == b.rating;
}

// Frequency-percentile rating rule: per user, a song with decay-play
// frequency f is rated 4 * (1 - sum of all strictly greater frequencies).
// Songs with equal frequency share a rank and receive equal ratings. Tagged
// Plain when the frequencies were built with lambda = 0.
RatingMatrix ratings_from_frequencies(const DecayPlayMatrix& freqs);

// Ratings without temporal effects; identical to the decay pipeline at
// lambda = 0, summation order included.
RatingMatrix plain_ratings(const PlayLog& log);

struct UserProfile {
  std::string user;
  double mean_rating = 0.0;
  std::uint64_t total_plays = 0;
  double dtavg = 0.0;  // average local time of day, fractional hours in [0, 24)
};

// Per-user aggregates. `dtavg_log` overrides the log used for the average
// time of day (e.g. to include test plays); it must cover every rated user.
std::vector<UserProfile> user_profiles(const PlayLog& log, const RatingMatrix& ratings,
                                       const PlayLog* dtavg_log = nullptr);

// TSV export: user, song, rating (6 decimals), by user then rating
// descending (ties by song id).
void write_ratings_tsv(const RatingMatrix& ratings, std::ostream& out);

}  // namespace tempocf
