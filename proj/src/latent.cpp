#include "tempocf/latent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "tempocf/errors.hpp"

namespace tempocf {

namespace {

// Deterministic across platforms: uniform doubles and Fisher-Yates driven
// directly by mt19937_64 output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  std::uint64_t next_below(std::uint64_t n) { return engine_() % n; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[next_below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// In-place Cholesky solve of A x = b for symmetric positive definite A
// (row-major d x d). Returns false when a pivot is not positive.
bool cholesky_solve(std::vector<double>& a, std::vector<double>& b, int d) {
  for (int j = 0; j < d; ++j) {
    double diag = a[std::size_t(j) * d + j];
    for (int k = 0; k < j; ++k) diag -= a[std::size_t(j) * d + k] * a[std::size_t(j) * d + k];
    if (!(diag > 0.0)) return false;
    diag = std::sqrt(diag);
    a[std::size_t(j) * d + j] = diag;
    for (int i = j + 1; i < d; ++i) {
      double v = a[std::size_t(i) * d + j];
      for (int k = 0; k < j; ++k) v -= a[std::size_t(i) * d + k] * a[std::size_t(j) * d + k];
      a[std::size_t(i) * d + j] = v / diag;
    }
  }
  // Forward then backward substitution with the factor L.
  for (int i = 0; i < d; ++i) {
    double v = b[std::size_t(i)];
    for (int k = 0; k < i; ++k) v -= a[std::size_t(i) * d + k] * b[std::size_t(k)];
    b[std::size_t(i)] = v / a[std::size_t(i) * d + i];
  }
  for (int i = d - 1; i >= 0; --i) {
    double v = b[std::size_t(i)];
    for (int k = i + 1; k < d; ++k) v -= a[std::size_t(k) * d + i] * b[std::size_t(k)];
    b[std::size_t(i)] = v / a[std::size_t(i) * d + i];
  }
  return true;
}

void init_factors(FactorModel& m, Rng& rng) {
  for (std::uint32_t u = 0; u < m.user_count(); ++u)
    for (double& v : m.user_row(u)) v = rng.uniform(-0.01, 0.01);
  for (std::uint32_t i = 0; i < m.item_count(); ++i)
    for (double& v : m.item_row(i)) v = rng.uniform(-0.01, 0.01);
}

}  // namespace

std::vector<Observation> observations_from(const RatingMatrix& ratings) {
  std::vector<Observation> obs;
  obs.reserve(ratings.entry_count());
  for (std::uint32_t u = 0; u < ratings.user_count(); ++u)
    for (const auto& e : ratings.row(u)) obs.push_back({u, e.song, e.rating});
  return obs;
}

FactorModel::FactorModel(std::vector<std::string> user_ids, std::vector<std::string> item_ids,
                         int d, bool biased)
    : user_ids_(std::move(user_ids)), item_ids_(std::move(item_ids)), d_(d), biased_(biased) {
  user_factors_.assign(user_ids_.size() * std::size_t(d), 0.0);
  item_factors_.assign(item_ids_.size() * std::size_t(d), 0.0);
  if (biased_) {
    user_bias_.assign(user_ids_.size(), 0.0);
    item_bias_.assign(item_ids_.size(), 0.0);
  }
}

double FactorModel::score(std::uint32_t user, std::uint32_t item) const {
  double s = dot(user_row(user), item_row(item));
  if (biased_) s += mu_ + user_bias_[user] + item_bias_[item];
  return s;
}

FactorModel::Scored FactorModel::predict(std::optional<std::uint32_t> user,
                                         std::optional<std::uint32_t> item) const {
  if (!user || !item) return {fallback_score(), true};
  return {score(*user, *item), false};
}

std::vector<double> FactorModel::parameters() const {
  std::vector<double> p;
  p.reserve(user_factors_.size() + item_factors_.size() + user_bias_.size() + item_bias_.size());
  p.insert(p.end(), user_factors_.begin(), user_factors_.end());
  p.insert(p.end(), item_factors_.begin(), item_factors_.end());
  p.insert(p.end(), user_bias_.begin(), user_bias_.end());
  p.insert(p.end(), item_bias_.begin(), item_bias_.end());
  return p;
}

void FactorModel::set_parameters(std::span<const double> params) {
  std::size_t n = 0;
  for (double& v : user_factors_) v = params[n++];
  for (double& v : item_factors_) v = params[n++];
  for (double& v : user_bias_) v = params[n++];
  for (double& v : item_bias_) v = params[n++];
}

// ---------------------------------------------------------------------------
// MF / BMF
// ---------------------------------------------------------------------------

double mf_objective(const FactorModel& model, std::span<const Observation> obs, double reg) {
  double loss = 0.0;
  for (const auto& o : obs) {
    double e = o.rating - model.score(o.user, o.item);
    double sq = dot(model.user_row(o.user), model.user_row(o.user)) +
                dot(model.item_row(o.item), model.item_row(o.item));
    if (model.biased())
      sq += model.user_bias()[o.user] * model.user_bias()[o.user] +
            model.item_bias()[o.item] * model.item_bias()[o.item];
    loss += 0.5 * e * e + 0.5 * reg * sq;
  }
  return loss;
}

std::vector<double> mf_gradient(const FactorModel& model, std::span<const Observation> obs,
                                double reg) {
  const int d = model.d();
  const std::size_t nu = model.user_count(), ni = model.item_count();
  std::vector<double> g(nu * d + ni * d + (model.biased() ? nu + ni : 0), 0.0);
  double* gu = g.data();
  double* gi = g.data() + nu * d;
  double* gbu = g.data() + (nu + ni) * d;
  double* gbi = gbu + nu;
  for (const auto& o : obs) {
    double e = o.rating - model.score(o.user, o.item);
    auto urow = model.user_row(o.user);
    auto irow = model.item_row(o.item);
    for (int f = 0; f < d; ++f) {
      gu[std::size_t(o.user) * d + f] += -e * irow[f] + reg * urow[f];
      gi[std::size_t(o.item) * d + f] += -e * urow[f] + reg * irow[f];
    }
    if (model.biased()) {
      gbu[o.user] += -e + reg * model.user_bias()[o.user];
      gbi[o.item] += -e + reg * model.item_bias()[o.item];
    }
  }
  return g;
}

FactorModel train_mf(const RatingMatrix& ratings, const TrainConfig& cfg, bool biased) {
  if (ratings.entry_count() == 0) throw DegenerateDataError("train_mf: empty rating matrix");
  FactorModel model(ratings.user_ids(), ratings.song_ids(), cfg.d, biased);
  model.seed = cfg.seed;
  Rng rng(cfg.seed);
  init_factors(model, rng);

  auto obs = observations_from(ratings);
  if (biased) {
    double sum = 0.0;
    for (const auto& o : obs) sum += o.rating;
    model.mu() = sum / static_cast<double>(obs.size());
  }

  const double lr = cfg.learning_rate;
  const double reg = cfg.regularization;
  const int d = cfg.d;
  std::vector<double> old_user(static_cast<std::size_t>(d));

  std::vector<std::uint32_t> order(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) order[i] = static_cast<std::uint32_t>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::uint32_t idx : order) {
      const auto& o = obs[idx];
      auto urow = model.user_row(o.user);
      auto irow = model.item_row(o.item);
      double e = o.rating - model.score(o.user, o.item);
      std::copy(urow.begin(), urow.end(), old_user.begin());
      for (int f = 0; f < d; ++f) {
        urow[f] += lr * (e * irow[f] - reg * urow[f]);
        irow[f] += lr * (e * old_user[std::size_t(f)] - reg * irow[f]);
      }
      if (biased) {
        model.user_bias()[o.user] += lr * (e - reg * model.user_bias()[o.user]);
        model.item_bias()[o.item] += lr * (e - reg * model.item_bias()[o.item]);
      }
    }
    double loss = mf_objective(model, obs, reg);
    model.objective_history.push_back(loss);
    if (!std::isfinite(loss))
      throw DivergedTrainingError("MF training diverged at epoch " + std::to_string(epoch + 1));
    model.trained_epochs = epoch + 1;
  }
  return model;
}

// ---------------------------------------------------------------------------
// WRMF
// ---------------------------------------------------------------------------

double wrmf_objective(const FactorModel& model, const RatingMatrix& ratings, double alpha,
                      double reg) {
  const int d = model.d();
  const std::size_t nu = model.user_count(), ni = model.item_count();

  // Gramian of the item factors gives the sum of squared scores over the
  // full user x item grid without touching every cell.
  std::vector<double> gram(std::size_t(d) * d, 0.0);
  for (std::uint32_t i = 0; i < ni; ++i) {
    auto y = model.item_row(i);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) gram[std::size_t(a) * d + b] += y[a] * y[b];
  }

  double total = 0.0;
  for (std::uint32_t u = 0; u < nu; ++u) {
    auto x = model.user_row(u);
    double quad = 0.0;
    for (int a = 0; a < d; ++a) {
      double row = 0.0;
      for (int b = 0; b < d; ++b) row += gram[std::size_t(a) * d + b] * x[b];
      quad += x[a] * row;
    }
    total += quad;
    for (const auto& e : ratings.row(u)) {
      double s = dot(x, model.item_row(e.song));
      double c = 1.0 + alpha * e.rating;
      total += c * (1.0 - s) * (1.0 - s) - s * s;
    }
  }
  double sq = 0.0;
  for (std::uint32_t u = 0; u < nu; ++u) sq += dot(model.user_row(u), model.user_row(u));
  for (std::uint32_t i = 0; i < ni; ++i) sq += dot(model.item_row(i), model.item_row(i));
  return total + reg * sq;
}

FactorModel train_wrmf(const RatingMatrix& ratings, const TrainConfig& cfg) {
  if (ratings.entry_count() == 0) throw DegenerateDataError("train_wrmf: empty rating matrix");
  const int d = cfg.d;
  const auto nu = static_cast<std::uint32_t>(ratings.user_count());
  const auto ni = static_cast<std::uint32_t>(ratings.song_count());

  FactorModel model(ratings.user_ids(), ratings.song_ids(), d, false);
  model.seed = cfg.seed;
  Rng rng(cfg.seed);
  init_factors(model, rng);

  // Transposed observation lists, user-ascending per item.
  std::vector<std::vector<Observation>> by_item(ni);
  for (std::uint32_t u = 0; u < nu; ++u)
    for (const auto& e : ratings.row(u)) by_item[e.song].push_back({u, e.song, e.rating});

  const double alpha = cfg.wrmf_alpha;
  const double reg = cfg.regularization;

  auto solve_side = [&](bool users) {
    const std::uint32_t n_solve = users ? nu : ni;
    const std::uint32_t n_other = users ? ni : nu;
    auto other_row = [&](std::uint32_t idx) {
      return users ? model.item_row(idx) : model.user_row(idx);
    };

    std::vector<double> gram(std::size_t(d) * d, 0.0);
    for (std::uint32_t o = 0; o < n_other; ++o) {
      auto y = other_row(o);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) gram[std::size_t(a) * d + b] += y[a] * y[b];
    }

    bool singular = false;  // exceptions must not cross the parallel region
#pragma omp parallel for schedule(dynamic, 32)
    for (std::int64_t si = 0; si < static_cast<std::int64_t>(n_solve); ++si) {
      auto s = static_cast<std::uint32_t>(si);
      std::vector<double> a = gram;
      std::vector<double> b(static_cast<std::size_t>(d), 0.0);
      auto add_obs = [&](std::uint32_t other, double rating) {
        auto y = other_row(other);
        double extra = alpha * rating;  // c - 1
        for (int p = 0; p < d; ++p) {
          for (int q = 0; q < d; ++q) a[std::size_t(p) * d + q] += extra * y[p] * y[q];
          b[std::size_t(p)] += (1.0 + alpha * rating) * y[p];
        }
      };
      if (users) {
        for (const auto& e : ratings.row(s)) add_obs(e.song, e.rating);
      } else {
        for (const auto& o : by_item[s]) add_obs(o.user, o.rating);
      }
      for (int p = 0; p < d; ++p) a[std::size_t(p) * d + p] += reg;

      std::vector<double> a_try = a;
      std::vector<double> x = b;
      if (!cholesky_solve(a_try, x, d)) {
        // Regularization floor, then one retry.
        for (int p = 0; p < d; ++p) a[std::size_t(p) * d + p] += 1e-8;
        a_try = a;
        x = b;
        if (!cholesky_solve(a_try, x, d)) {
#pragma omp atomic write
          singular = true;
          continue;
        }
      }
      auto target = users ? model.user_row(s) : model.item_row(s);
      std::copy(x.begin(), x.end(), target.begin());
    }
    if (singular) throw DivergedTrainingError("WRMF normal equations singular");
  };

  model.objective_history.push_back(wrmf_objective(model, ratings, alpha, reg));
  for (int sweep = 0; sweep < cfg.wrmf_iterations; ++sweep) {
    solve_side(true);
    solve_side(false);
    double obj = wrmf_objective(model, ratings, alpha, reg);
    model.objective_history.push_back(obj);
    if (!std::isfinite(obj))
      throw DivergedTrainingError("WRMF diverged at sweep " + std::to_string(sweep + 1));
    model.trained_epochs = sweep + 1;
  }
  return model;
}

// ---------------------------------------------------------------------------
// BPR
// ---------------------------------------------------------------------------

namespace {

std::vector<std::uint32_t> bpr_eligible_users(const RatingMatrix& ratings) {
  std::vector<std::uint32_t> eligible;
  for (std::uint32_t u = 0; u < ratings.user_count(); ++u) {
    auto row = ratings.row(u);
    if (!row.empty() && row.size() < ratings.song_count()) eligible.push_back(u);
  }
  return eligible;
}

bool row_contains(std::span<const RatingMatrix::Entry> row, std::uint32_t song) {
  auto it = std::lower_bound(row.begin(), row.end(), song,
                             [](const RatingMatrix::Entry& e, std::uint32_t s) { return e.song < s; });
  return it != row.end() && it->song == song;
}

std::vector<BprTriple> sample_triples_impl(const RatingMatrix& ratings, std::size_t count,
                                           Rng& rng) {
  auto eligible = bpr_eligible_users(ratings);
  if (eligible.empty())
    throw DegenerateDataError("BPR needs a user with both observed and unobserved items");
  const auto ni = static_cast<std::uint32_t>(ratings.song_count());
  std::vector<BprTriple> triples;
  triples.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    std::uint32_t u = eligible[rng.next_below(eligible.size())];
    auto row = ratings.row(u);
    std::uint32_t pos = row[rng.next_below(row.size())].song;
    std::uint32_t neg = 0;
    bool found = false;
    for (int attempt = 0; attempt < 64 && !found; ++attempt) {
      neg = static_cast<std::uint32_t>(rng.next_below(ni));
      found = !row_contains(row, neg);
    }
    if (!found) {
      // Dense row: take the first unobserved item deterministically.
      for (std::uint32_t s = 0; s < ni; ++s) {
        if (!row_contains(row, s)) {
          neg = s;
          found = true;
          break;
        }
      }
    }
    triples.push_back({u, pos, neg});
  }
  return triples;
}

}  // namespace

std::vector<BprTriple> sample_bpr_triples(const RatingMatrix& ratings, std::size_t count,
                                          std::uint64_t seed) {
  Rng rng(seed);
  return sample_triples_impl(ratings, count, rng);
}

double bpr_objective(const FactorModel& model, std::span<const BprTriple> triples, double reg) {
  double loss = 0.0;
  for (const auto& t : triples) {
    double x = model.score(t.user, t.pos) - model.score(t.user, t.neg);
    loss += -std::log(sigmoid(x));
    loss += 0.5 * reg *
            (dot(model.user_row(t.user), model.user_row(t.user)) +
             dot(model.item_row(t.pos), model.item_row(t.pos)) +
             dot(model.item_row(t.neg), model.item_row(t.neg)));
  }
  return loss;
}

std::vector<double> bpr_gradient(const FactorModel& model, std::span<const BprTriple> triples,
                                 double reg) {
  const int d = model.d();
  const std::size_t nu = model.user_count(), ni = model.item_count();
  std::vector<double> g(nu * d + ni * d, 0.0);
  double* gu = g.data();
  double* gi = g.data() + nu * d;
  for (const auto& t : triples) {
    double x = model.score(t.user, t.pos) - model.score(t.user, t.neg);
    double w = sigmoid(-x);  // d(-ln sigma(x))/dx = -sigma(-x)
    auto urow = model.user_row(t.user);
    auto prow = model.item_row(t.pos);
    auto nrow = model.item_row(t.neg);
    for (int f = 0; f < d; ++f) {
      gu[std::size_t(t.user) * d + f] += -w * (prow[f] - nrow[f]) + reg * urow[f];
      gi[std::size_t(t.pos) * d + f] += -w * urow[f] + reg * prow[f];
      gi[std::size_t(t.neg) * d + f] += w * urow[f] + reg * nrow[f];
    }
  }
  return g;
}

double bpr_mean_sigmoid(const FactorModel& model, std::span<const BprTriple> triples) {
  double s = 0.0;
  for (const auto& t : triples)
    s += sigmoid(model.score(t.user, t.pos) - model.score(t.user, t.neg));
  return triples.empty() ? 0.0 : s / static_cast<double>(triples.size());
}

FactorModel train_bpr(const RatingMatrix& ratings, const TrainConfig& cfg) {
  if (ratings.entry_count() == 0) throw DegenerateDataError("train_bpr: empty rating matrix");
  FactorModel model(ratings.user_ids(), ratings.song_ids(), cfg.d, false);
  model.seed = cfg.seed;
  Rng rng(cfg.seed);
  init_factors(model, rng);

  const std::size_t per_epoch = ratings.entry_count();
  const double lr = cfg.learning_rate;
  const double reg = cfg.regularization;
  const int d = cfg.d;
  std::vector<double> old_user(static_cast<std::size_t>(d));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto triples = sample_triples_impl(ratings, per_epoch, rng);
    for (const auto& t : triples) {
      auto urow = model.user_row(t.user);
      auto prow = model.item_row(t.pos);
      auto nrow = model.item_row(t.neg);
      double x = model.score(t.user, t.pos) - model.score(t.user, t.neg);
      double w = sigmoid(-x);
      std::copy(urow.begin(), urow.end(), old_user.begin());
      for (int f = 0; f < d; ++f) {
        urow[f] += lr * (w * (prow[f] - nrow[f]) - reg * urow[f]);
        prow[f] += lr * (w * old_user[std::size_t(f)] - reg * prow[f]);
        nrow[f] += lr * (-w * old_user[std::size_t(f)] - reg * nrow[f]);
      }
    }
    double obj = bpr_objective(model, triples, reg);
    model.objective_history.push_back(obj);
    if (!std::isfinite(obj))
      throw DivergedTrainingError("BPR training diverged at epoch " + std::to_string(epoch + 1));
    model.trained_epochs = epoch + 1;
  }
  return model;
}

void write_factor_model(const FactorModel& model, const TrainConfig& cfg, std::ostream& out) {
  char buf[64];
  out << "tempocf-factor-model v1\n";
  out << "d=" << model.d() << " biased=" << (model.biased() ? 1 : 0) << " users="
      << model.user_count() << " items=" << model.item_count() << "\n";
  out << "seed=" << model.seed << " lr=" << cfg.learning_rate << " reg=" << cfg.regularization
      << " epochs=" << cfg.epochs << " wrmf_alpha=" << cfg.wrmf_alpha
      << " wrmf_iterations=" << cfg.wrmf_iterations << "\n";
  std::snprintf(buf, sizeof(buf), "%.9g", model.mu());
  out << "mu=" << buf << "\n";
  auto write_rows = [&](const char* tag, bool users) {
    std::size_t n = users ? model.user_count() : model.item_count();
    for (std::uint32_t r = 0; r < n; ++r) {
      out << tag << '\t' << (users ? model.user_ids()[r] : model.item_ids()[r]);
      auto row = users ? model.user_row(r) : model.item_row(r);
      for (double v : row) {
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        out << '\t' << buf;
      }
      if (model.biased()) {
        std::snprintf(buf, sizeof(buf), "%.9g",
                      users ? model.user_bias()[r] : model.item_bias()[r]);
        out << '\t' << buf;
      }
      out << '\n';
    }
  };
  write_rows("u", true);
  write_rows("i", false);
}

}  // namespace tempocf
