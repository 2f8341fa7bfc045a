#include "synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace synth {

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::string user_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "u%03d", i);
  return buf;
}

std::string song_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%04d", i);
  return buf;
}

// Zipf-weighted pick over a song block. The rank order is shared by the
// whole group; each user perturbs the weights, so group members mostly agree
// on favorites without being identical.
struct WeightedSet {
  std::vector<int> songs;
  std::vector<double> weights;

  int pick(std::mt19937_64& rng) const {
    double total = 0;
    for (double w : weights) total += w;
    double x = uniform01(rng) * total;
    double acc = 0;
    for (std::size_t i = 0; i < songs.size(); ++i) {
      acc += weights[i];
      if (x <= acc) return songs[i];
    }
    return songs.back();
  }

  // The same taste restricted to a subset of the songs.
  WeightedSet restricted_to(const std::vector<std::size_t>& positions) const {
    WeightedSet sub;
    for (std::size_t pos : positions) {
      sub.songs.push_back(songs[pos]);
      sub.weights.push_back(weights[pos]);
    }
    return sub;
  }
};

std::vector<int> group_order(std::mt19937_64& rng, int first_song, int count) {
  std::vector<int> songs(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) songs[static_cast<std::size_t>(i)] = first_song + i;
  for (std::size_t i = songs.size(); i > 1; --i) std::swap(songs[i - 1], songs[rng() % i]);
  return songs;
}

WeightedSet user_weights(const std::vector<int>& order, double noise_sigma,
                         std::mt19937_64& rng) {
  WeightedSet set;
  set.songs = order;
  set.weights.resize(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    // Box-Muller; two uniforms per draw keeps the stream deterministic.
    double u1 = std::max(uniform01(rng), 1e-12);
    double u2 = uniform01(rng);
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    set.weights[i] = std::exp(noise_sigma * z) / static_cast<double>(i + 1);
  }
  return set;
}

// A user-specific random draw of subset positions.
std::vector<std::size_t> random_positions(std::mt19937_64& rng, std::size_t total,
                                          std::size_t keep) {
  std::vector<std::size_t> all(total);
  for (std::size_t i = 0; i < total; ++i) all[i] = i;
  for (std::size_t i = total; i > 1; --i) std::swap(all[i - 1], all[rng() % i]);
  all.resize(keep);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

std::vector<tempocf::RawPlay> random_log(std::mt19937_64& rng, int n_users, int n_songs,
                                         int n_plays, long long t0, long long span_seconds) {
  std::vector<tempocf::RawPlay> plays;
  plays.reserve(static_cast<std::size_t>(n_plays));
  for (int p = 0; p < n_plays; ++p) {
    int u = static_cast<int>(rng() % static_cast<std::uint64_t>(n_users));
    int s = static_cast<int>(rng() % static_cast<std::uint64_t>(n_songs));
    long long t = t0 + static_cast<long long>(rng() % static_cast<std::uint64_t>(span_seconds));
    plays.push_back({user_name(u), song_name(s), t});
  }
  return plays;
}

DriftLog drift_log(std::uint64_t seed, const DriftParams& p) {
  std::mt19937_64 rng(seed);
  DriftLog out;
  out.boundary = p.base_instant + p.boundary_month * p.month_seconds;

  std::vector<std::vector<int>> a_orders, b_orders;
  for (int g = 0; g < p.n_groups; ++g) {
    std::mt19937_64 group_rng(seed * 1000003ull + static_cast<std::uint64_t>(g));
    int a_first = g * 2 * p.songs_per_set;
    a_orders.push_back(group_order(group_rng, a_first, p.songs_per_set));
    b_orders.push_back(group_order(group_rng, a_first + p.songs_per_set, p.songs_per_set));
  }

  const int n_users = p.n_groups * p.users_per_group;
  for (int u = 0; u < n_users; ++u) {
    int group = u / p.users_per_group;
    WeightedSet a_set = user_weights(a_orders[static_cast<std::size_t>(group)], p.taste_noise, rng);
    WeightedSet b_set = user_weights(b_orders[static_cast<std::size_t>(group)], p.taste_noise, rng);
    // During training each user only touches their own slice of the late
    // set; the rest shows up fresh in the test window while group mates
    // cover it.
    WeightedSet b_train = b_set.restricted_to(random_positions(
        rng, b_set.songs.size(), static_cast<std::size_t>(p.train_b_subset)));

    bool cold = u >= n_users - p.cold_users;
    int first_month = cold ? p.cold_start_month : 0;

    auto emit_month = [&](int month, int n_plays, double b_prob, bool restricted) {
      long long month_start = p.base_instant + month * p.month_seconds;
      for (int i = 0; i < n_plays; ++i) {
        bool from_b = uniform01(rng) < b_prob;
        int song = from_b ? (restricted ? b_train.pick(rng) : b_set.pick(rng)) : a_set.pick(rng);
        long long t = month_start +
                      static_cast<long long>(rng() % static_cast<std::uint64_t>(p.month_seconds));
        out.plays.push_back({user_name(u), song_name(song), t});
      }
    };

    for (int month = first_month; month < p.boundary_month; ++month) {
      bool late = month >= p.regime_switch_month;
      emit_month(month, late ? p.late_plays_per_month : p.early_plays_per_month,
                 late ? p.late_b_prob : p.early_b_prob, true);
    }
    for (int month = p.boundary_month; month < p.end_month; ++month)
      emit_month(month, p.test_plays_per_month, p.test_b_prob, false);
  }
  return out;
}

}  // namespace synth
