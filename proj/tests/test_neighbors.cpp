#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "naive_ref.hpp"
#include "synthetic.hpp"
#include "tempocf/errors.hpp"
#include "tempocf/neighbors.hpp"

using namespace tempocf;

namespace {

using Entry = RatingMatrix::Entry;

std::vector<Entry> row(std::initializer_list<Entry> entries) { return entries; }

// Matrix from dense per-user (song -> rating) rows; 0 means absent.
RatingMatrix matrix_from(const std::vector<std::vector<double>>& dense) {
  std::vector<std::string> users, songs;
  for (std::size_t u = 0; u < dense.size(); ++u) users.push_back("u" + std::to_string(u));
  for (std::size_t s = 0; s < dense[0].size(); ++s) songs.push_back("s" + std::to_string(s));
  std::vector<std::vector<Entry>> rows(dense.size());
  for (std::size_t u = 0; u < dense.size(); ++u)
    for (std::size_t s = 0; s < dense[u].size(); ++s)
      if (dense[u][s] != 0.0) rows[u].push_back({static_cast<std::uint32_t>(s), dense[u][s]});
  return {users, songs, rows, RatingVariant::Plain};
}

std::vector<UserProfile> flat_profiles(const RatingMatrix& m, std::vector<double> dtavg = {}) {
  std::vector<UserProfile> profiles(m.user_count());
  for (std::uint32_t u = 0; u < m.user_count(); ++u) {
    profiles[u].user = m.user_id(u);
    double sum = 0;
    for (const auto& e : m.row(u)) sum += e.rating;
    profiles[u].mean_rating = m.row(u).empty() ? 0.0 : sum / static_cast<double>(m.row(u).size());
    profiles[u].total_plays = m.row(u).size();
    profiles[u].dtavg = dtavg.empty() ? 12.0 : dtavg[u];
  }
  return profiles;
}

naiveref::RatingMap to_naive(const RatingMatrix& m) {
  naiveref::RatingMap map;
  for (std::uint32_t u = 0; u < m.user_count(); ++u)
    for (const auto& e : m.row(u)) map[m.user_id(u)][m.song_id(e.song)] = e.rating;
  return map;
}

}  // namespace

TEST_CASE("pearson fixtures") {
  auto a = row({{0, 1}, {1, 2}, {2, 3}});
  auto b = row({{0, 1}, {1, 2}, {2, 3}});
  CHECK(*pearson_similarity(a, b) == doctest::Approx(1.0).epsilon(1e-12));

  auto c = row({{0, 3}, {1, 2}, {2, 1}});
  CHECK(*pearson_similarity(a, c) == doctest::Approx(-1.0).epsilon(1e-12));

  // Against an independent covariance computation.
  auto x = row({{0, 4}, {1, 2}, {2, 0.8}});
  auto y = row({{0, 4}, {1, 4}, {2, 0.8}});
  std::map<std::string, double> nx{{"s0", 4}, {"s1", 2}, {"s2", 0.8}};
  std::map<std::string, double> ny{{"s0", 4}, {"s1", 4}, {"s2", 0.8}};
  CHECK(*pearson_similarity(x, y) ==
        doctest::Approx(*naiveref::pearson(nx, ny)).epsilon(1e-12));
}

TEST_CASE("pearson undefined cases") {
  auto a = row({{0, 1}, {1, 2}});
  auto one_common = row({{1, 3}, {2, 4}});
  CHECK(!pearson_similarity(a, one_common));  // single co-rated song

  auto flat = row({{0, 2}, {1, 2}});
  CHECK(!pearson_similarity(a, flat));  // zero variance on one side
}

TEST_CASE("cosine fixtures") {
  CHECK(*cosine_similarity(row({{0, 4}}), row({{1, 4}})) == 0.0);
  CHECK(*cosine_similarity(row({{0, 4}, {1, 2}}), row({{0, 2}, {1, 1}})) ==
        doctest::Approx(1.0).epsilon(1e-12));
  // (4,2,0) . (4,0,2) = 16, norms both sqrt(20).
  CHECK(*cosine_similarity(row({{0, 4}, {1, 2}}), row({{0, 4}, {2, 2}})) ==
        doctest::Approx(0.8).epsilon(1e-12));
  CHECK(!cosine_similarity(row({}), row({{0, 1}})));
}

TEST_CASE("cosine self-similarity is one") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    std::vector<Entry> r;
    for (std::uint32_t s = 0; s < 6; ++s)
      if (rng() % 2) r.push_back({s, 0.5 + static_cast<double>(rng() % 8) / 2.0});
    if (r.empty()) continue;
    CHECK(*cosine_similarity(r, r) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("attribute cosine fixtures") {
  auto a = row({{0, 4}, {1, 1}});
  CHECK(*attribute_cosine_similarity(2.0, a, 2.0, a) == doctest::Approx(1.0).epsilon(1e-12));

  // No rating overlap, attributes at the scaled extremes: driven entirely by
  // the attribute term, which is zero.
  auto b = row({{2, 4}});
  CHECK(*attribute_cosine_similarity(0.0, a, 4.0, b) == doctest::Approx(0.0));

  // Hand evaluation of the concatenated-vector cosine.
  std::map<std::string, double> na{{"s0", 4.0}, {"s1", 1.0}};
  std::map<std::string, double> nb{{"s0", 2.0}, {"s2", 3.0}};
  CHECK(*attribute_cosine_similarity(1.5, a, 3.5, row({{0, 2}, {2, 3}})) ==
        doctest::Approx(*naiveref::attribute_cosine(1.5, na, 3.5, nb)).epsilon(1e-12));
}

TEST_CASE("similarity symmetry and bounds on random rows") {
  std::mt19937_64 rng(19);
  for (int i = 0; i < 50; ++i) {
    auto make_row = [&]() {
      std::vector<Entry> r;
      for (std::uint32_t s = 0; s < 8; ++s)
        if (rng() % 3) r.push_back({s, 0.25 + static_cast<double>(rng() % 16) / 4.0});
      return r;
    };
    auto a = make_row();
    auto b = make_row();
    auto p1 = pearson_similarity(a, b);
    auto p2 = pearson_similarity(b, a);
    CHECK(p1.has_value() == p2.has_value());
    if (p1) {
      CHECK(*p1 == doctest::Approx(*p2).epsilon(1e-12));
      CHECK(*p1 >= -1.0);
      CHECK(*p1 <= 1.0);
    }
    auto c1 = cosine_similarity(a, b);
    auto c2 = cosine_similarity(b, a);
    CHECK(c1.has_value() == c2.has_value());
    if (c1) {
      CHECK(*c1 == doctest::Approx(*c2).epsilon(1e-12));
      CHECK(*c1 >= 0.0);
      CHECK(*c1 <= 1.0);
    }
    auto t1 = attribute_cosine_similarity(1.0, a, 3.0, b);
    auto t2 = attribute_cosine_similarity(3.0, b, 1.0, a);
    if (t1) CHECK(*t1 == doctest::Approx(*t2).epsilon(1e-12));
  }
}

TEST_CASE("build_neighbor_model basics") {
  SUBCASE("two identical users are mutual neighbors") {
    auto m = matrix_from({{4, 2, 1}, {4, 2, 1}});
    auto model = build_neighbor_model(m, flat_profiles(m), SimilarityKind::Pearson, 15);
    REQUIRE(model.neighbors_of(0).size() == 1);
    CHECK(model.neighbors_of(0)[0].user == 1);
    CHECK(model.neighbors_of(0)[0].score == doctest::Approx(1.0));
  }

  SUBCASE("k=1 picks the brute-force argmax") {
    auto m = matrix_from({{4, 2, 1, 0}, {4, 2.5, 1, 0}, {1, 2, 4, 0}});
    auto model = build_neighbor_model(m, flat_profiles(m), SimilarityKind::Pearson, 1);
    auto naive = to_naive(m);
    for (std::uint32_t u = 0; u < 3; ++u) {
      auto picks = naiveref::top_k_neighbors(naive, m.user_id(u), 1, naiveref::Kind::Pearson,
                                             nullptr);
      REQUIRE(model.neighbors_of(u).size() == picks.size());
      CHECK(m.user_id(model.neighbors_of(u)[0].user) == picks[0].user);
      CHECK(model.neighbors_of(u)[0].score == doctest::Approx(picks[0].sim).epsilon(1e-12));
    }
  }

  SUBCASE("isolated user has no neighbors") {
    auto m = matrix_from({{4, 2, 0, 0}, {3, 1, 0, 0}, {0, 0, 4, 2}});
    auto model = build_neighbor_model(m, flat_profiles(m), SimilarityKind::Cosine, 15);
    CHECK(model.neighbors_of(2).empty());
    CHECK(model.neighbors_of(0).size() == 1);
  }
}

TEST_CASE("predict fixtures") {
  // Single neighbor with sim 1: active mean 2, neighbor rating 3.5, mean 2.5.
  auto m = matrix_from({{3, 1, 0}, {3, 1, 3.5}});
  auto profiles = flat_profiles(m);
  profiles[0].mean_rating = 2.0;
  profiles[1].mean_rating = 2.5;
  NeighborModel model(SimilarityKind::Pearson, 15, {{{1, 1.0}}, {{0, 1.0}}});

  auto p = predict(model, m, profiles, 0, 2);
  CHECK(!p.fallback);
  CHECK(p.value == doctest::Approx(3.0).epsilon(1e-12));  // 2 + (3.5 - 2.5)

  SUBCASE("zero deviations return the active mean") {
    auto m2 = matrix_from({{3, 1, 0}, {3, 1, 2.5}});
    auto p2 = predict(model, m2, profiles, 0, 2);
    CHECK(p2.value == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(!p2.fallback);
  }

  SUBCASE("no neighbor rated the song: fallback to the active mean") {
    auto m3 = matrix_from({{3, 1, 0, 0}, {3, 1, 0, 0}});
    auto p3 = predict(model, m3, profiles, 0, 3);
    CHECK(p3.fallback);
    CHECK(p3.value == doctest::Approx(2.0));
  }

  SUBCASE("unknown user") {
    CHECK_THROWS_AS(predict(model, m, profiles, 99, 0), UnknownUserError);
  }
}

TEST_CASE("top_n ordering and errors") {
  auto m = matrix_from({{4, 0, 0, 0}, {4, 3, 2, 1}});
  auto profiles = flat_profiles(m);
  auto model = build_neighbor_model(m, profiles, SimilarityKind::Cosine, 15);

  auto list = top_n(model, m, profiles, 0, 100);
  CHECK(list.items.size() == 3);
  for (std::size_t i = 1; i < list.items.size(); ++i) {
    CHECK(list.items[i - 1].score >= list.items[i].score);
    if (list.items[i - 1].score == list.items[i].score)
      CHECK(list.items[i - 1].song < list.items[i].song);
  }

  SUBCASE("truncation to n") {
    auto list2 = top_n(model, m, profiles, 0, 2);
    CHECK(list2.items.size() == 2);
  }

  SUBCASE("user who rated everything has no candidates") {
    auto full = matrix_from({{4, 3}, {2, 1}});
    auto fp = flat_profiles(full);
    auto fmodel = build_neighbor_model(full, fp, SimilarityKind::Cosine, 15);
    CHECK_THROWS_AS(rank_candidates(fmodel, full, fp, 0), EmptyCandidatesError);
  }
}

TEST_CASE("knn predictions match the naive transcription on random logs") {
  std::mt19937_64 rng(53);
  for (int round = 0; round < 6; ++round) {
    auto raw = synth::random_log(rng, 8, 16, 220);
    PlayLog log = PlayLog::from_raw(raw, 0);
    auto ratings = plain_ratings(log);
    auto profiles = user_profiles(log, ratings);
    auto naive = to_naive(ratings);

    for (auto kind : {SimilarityKind::Pearson, SimilarityKind::Cosine}) {
      auto model = build_neighbor_model(ratings, profiles, kind, 5);
      auto nkind = kind == SimilarityKind::Pearson ? naiveref::Kind::Pearson
                                                   : naiveref::Kind::Cosine;
      for (std::uint32_t u = 0; u < ratings.user_count(); ++u) {
        auto picks = naiveref::top_k_neighbors(naive, ratings.user_id(u), 5, nkind, nullptr);
        auto mine = model.neighbors_of(u);
        REQUIRE(mine.size() == picks.size());
        for (std::size_t i = 0; i < picks.size(); ++i)
          CHECK(mine[i].score == doctest::Approx(picks[i].sim).epsilon(1e-9));

        for (std::uint32_t s = 0; s < ratings.song_count(); ++s) {
          auto p = predict(model, ratings, profiles, u, s);
          double want = naiveref::predict(naive, picks, ratings.user_id(u), ratings.song_id(s));
          CHECK(p.value == doctest::Approx(want).epsilon(1e-9));
        }
      }
    }
  }
}

TEST_CASE("user-time knn matches the naive transcription") {
  std::mt19937_64 rng(59);
  auto raw = synth::random_log(rng, 7, 14, 180);
  PlayLog log = PlayLog::from_raw(raw, 0);
  auto ratings = plain_ratings(log);
  auto profiles = user_profiles(log, ratings);

  // Min-max scaling into [0, 4], the model-build rule.
  double lo = profiles[0].dtavg, hi = profiles[0].dtavg;
  for (const auto& p : profiles) {
    lo = std::min(lo, p.dtavg);
    hi = std::max(hi, p.dtavg);
  }
  std::map<std::string, double> attrs;
  for (const auto& p : profiles)
    attrs[p.user] = hi > lo ? (p.dtavg - lo) / (hi - lo) * 4.0 : 2.0;

  auto model = build_neighbor_model(ratings, profiles, SimilarityKind::UserTimeCosine, 5);
  auto naive = to_naive(ratings);
  for (std::uint32_t u = 0; u < ratings.user_count(); ++u) {
    auto picks = naiveref::top_k_neighbors(naive, ratings.user_id(u), 5,
                                           naiveref::Kind::UserTime, &attrs);
    auto mine = model.neighbors_of(u);
    REQUIRE(mine.size() == picks.size());
    for (std::size_t i = 0; i < picks.size(); ++i)
      CHECK(mine[i].score == doctest::Approx(picks[i].sim).epsilon(1e-9));
  }
}

TEST_CASE("rank_candidates agrees with per-pair predict") {
  std::mt19937_64 rng(61);
  auto raw = synth::random_log(rng, 6, 20, 200);
  PlayLog log = PlayLog::from_raw(raw, 0);
  auto ratings = plain_ratings(log);
  auto profiles = user_profiles(log, ratings);
  auto model = build_neighbor_model(ratings, profiles, SimilarityKind::Cosine, 5);

  for (std::uint32_t u = 0; u < ratings.user_count(); ++u) {
    if (ratings.row(u).size() == ratings.song_count()) continue;
    auto ranked = rank_candidates(model, ratings, profiles, u);
    for (const auto& s : ranked) {
      auto p = predict(model, ratings, profiles, u, s.song);
      CHECK(s.score == p.value);  // same accumulation order, bitwise equal
      CHECK(s.fallback == p.fallback);
    }
  }
}

TEST_CASE("negative pearson neighbors can be excluded") {
  auto m = matrix_from({{4, 2, 1, 0}, {1, 2, 4, 0}, {4, 2.5, 1.5, 0}});
  auto profiles = flat_profiles(m);
  auto with = build_neighbor_model(m, profiles, SimilarityKind::Pearson, 15);
  SimilarityOptions opts;
  opts.exclude_negative_pearson = true;
  auto without = build_neighbor_model(m, profiles, SimilarityKind::Pearson, 15, opts);
  CHECK(with.neighbors_of(0).size() == 2);
  CHECK(without.neighbors_of(0).size() == 1);
  for (const auto& nb : without.neighbors_of(0)) CHECK(nb.score >= 0.0);
}
