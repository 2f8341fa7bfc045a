#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tempocf/ratings.hpp"

namespace tempocf {

enum class SimilarityKind { Pearson, Cosine, UserTimeCosine };

inline std::string_view similarity_name(SimilarityKind k) {
  switch (k) {
    case SimilarityKind::Pearson: return "pearson";
    case SimilarityKind::Cosine: return "cosine";
    case SimilarityKind::UserTimeCosine: return "user-time-cosine";
  }
  return "?";
}

struct SimilarityOptions {
  // Drop neighbors with negative Pearson correlation.
  bool exclude_negative_pearson = false;
  // Min-max scale dtavg across users before concatenating it with the
  // ratings row, so hours and ratings live on comparable scales.
  bool scale_dtavg = true;
  double dtavg_scale_max = 4.0;
};

// Pearson correlation over the co-rated songs, means taken over that set.
// Undefined (nullopt) when fewer than 2 co-rated songs or either side has
// zero variance.
std::optional<double> pearson_similarity(std::span<const RatingMatrix::Entry> a,
                                         std::span<const RatingMatrix::Entry> b);

// Cosine over the full song space (absent entries are zero). 0 when nothing
// is co-rated; undefined for a zero-norm row.
std::optional<double> cosine_similarity(std::span<const RatingMatrix::Entry> a,
                                        std::span<const RatingMatrix::Entry> b);

// Cosine over [time attribute] ++ ratings row.
std::optional<double> attribute_cosine_similarity(double attr_a,
                                                  std::span<const RatingMatrix::Entry> a,
                                                  double attr_b,
                                                  std::span<const RatingMatrix::Entry> b);

struct Neighbor {
  std::uint32_t user;
  double score;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Per-user ranked neighbor lists (score descending, user index ascending on
// ties, length <= k). Read-only after construction.
class NeighborModel {
 public:
  NeighborModel(SimilarityKind kind, int k, std::vector<std::vector<Neighbor>> neighbors)
      : kind_(kind), k_(k), neighbors_(std::move(neighbors)) {}

  SimilarityKind kind() const { return kind_; }
  int k() const { return k_; }
  std::span<const Neighbor> neighbors_of(std::uint32_t u) const { return neighbors_[u]; }
  std::size_t user_count() const { return neighbors_.size(); }

 private:
  SimilarityKind kind_;
  int k_;
  std::vector<std::vector<Neighbor>> neighbors_;
};

// Builds the k-nearest-neighbor lists for every user. Pairs are restricted
// to users sharing at least one co-rated song, except UserTimeCosine where
// the time attribute alone spans the space.
NeighborModel build_neighbor_model(const RatingMatrix& ratings,
                                   const std::vector<UserProfile>& profiles,
                                   SimilarityKind kind, int k,
                                   const SimilarityOptions& options = {});

struct Prediction {
  double value = 0.0;
  bool fallback = false;  // no usable neighbor rated the song
};

// Mean-centered weighted deviation from the user's neighbors; falls back to
// the user's mean rating when no neighbor rated the song. Throws
// UnknownUserError for a user outside the ratings matrix.
Prediction predict(const NeighborModel& model, const RatingMatrix& ratings,
                   const std::vector<UserProfile>& profiles, std::uint32_t user,
                   std::uint32_t song);

struct ScoredSong {
  std::uint32_t song;
  double score;
  bool fallback;
};

// Every candidate song (catalog minus the user's rated songs), ranked by
// score descending with song index as the deterministic tiebreak. Throws
// EmptyCandidatesError when the user rated the whole catalog.
std::vector<ScoredSong> rank_candidates(const NeighborModel& model, const RatingMatrix& ratings,
                                        const std::vector<UserProfile>& profiles,
                                        std::uint32_t user);

struct TopNList {
  std::uint32_t user = 0;
  int n = 0;
  std::vector<ScoredSong> items;  // <= n entries
};

TopNList top_n(const NeighborModel& model, const RatingMatrix& ratings,
               const std::vector<UserProfile>& profiles, std::uint32_t user, int n);

// TSV export: user, rank, song, score (6 decimals).
void write_top_n_tsv(const RatingMatrix& ratings, const TopNList& list, std::ostream& out);

}  // namespace tempocf
