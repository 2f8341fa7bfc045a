#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tempocf/eval.hpp"
#include "tempocf/playlog.hpp"

namespace tempocf {

// Everything a run needs, resolved from flags and/or a config file. The
// defaults reproduce the reference setup: lambda 0.4, k 15, N 100, all three
// contexts, both rating variants, 15+2 month split anchored at the first
// event.
struct RunConfig {
  std::string input;
  std::string format = "auto";  // lastfm | normalized | auto
  std::string tz = "UTC";
  std::optional<std::string> boundary;  // ISO-8601 split instant
  int train_months = 15;
  int test_months = 2;
  double lambda = 0.4;
  int k = 15;
  int top_n = 100;
  std::vector<std::string> contexts = {"day", "morning", "evening"};
  std::vector<std::string> methods = {"knn-pearson", "knn-cosine", "user-time-knn",
                                      "mf",          "bmf",        "wrmf",
                                      "bprmf"};
  std::vector<std::string> variants = {"plain", "decay"};
  std::uint64_t seed = 42;
  int jobs = 1;  // concurrently running grid cells
  std::string out_dir = "out";
  int cold_users = 5;
  std::optional<std::string> habits_user;
  std::string dtavg_scope = "train";  // train | all
  bool scale_dtavg = true;
  double dtavg_scale_max = 4.0;
  bool exclude_negative_pearson = false;
  int mf_dim = 10;
  double mf_learning_rate = 0.01;
  double mf_regularization = 0.05;
  int mf_epochs = 30;
  double wrmf_alpha = 40.0;
  int wrmf_iterations = 15;
};

// Canonical one-line echo of every effective value; the config hash is the
// FNV-1a of this line. Both go into every output file header.
std::string config_echo(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

// Applies a key=value config file (keys are the long flag names without the
// dashes, e.g. "lambda=0.4", "methods=knn-pearson,bmf"). Values given on the
// command line afterwards override these. '#' starts a comment.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

// Resolved helpers (throw ConfigError on bad values).
int resolve_tz_offset(const RunConfig& cfg);
ExperimentConfig experiment_config(const RunConfig& cfg);
std::vector<Method> resolve_methods(const RunConfig& cfg);
std::vector<RatingVariant> resolve_variants(const RunConfig& cfg);
std::vector<ContextSegment> resolve_contexts(const RunConfig& cfg);

// Instant advanced by whole calendar months (UTC), day-of-month clamped.
Instant add_months_utc(Instant t, int months);

PlayLog load_log(const RunConfig& cfg, ParseReport* report = nullptr);

// Train/test split per config: explicit boundary, or train_months/test_months
// anchored at the log's first event (the test side is then truncated to the
// requested window).
TemporalSplit split_log(const PlayLog& log, const RunConfig& cfg);

struct IngestSummary {
  std::size_t users = 0;
  std::size_t songs = 0;
  std::size_t plays = 0;
  std::size_t rejected = 0;
  std::string first_instant;
  std::string last_instant;
};

// Parses the input, writes the normalized cache and the rejection sidecar.
IngestSummary cmd_ingest(const RunConfig& cfg);

struct GridOutcome {
  std::vector<EvalReport> reports;
  std::vector<std::string> failed_cells;  // "method=... context=... variant=...: reason"
};

// Full method x context x variant grid; writes report.csv,
// rating_metrics.csv, ranking_metrics.csv and plot_data.csv.
GridOutcome cmd_grid(const RunConfig& cfg);

// Day-24h grid over the newest users; writes cold_start.csv.
GridOutcome cmd_cold_start(const RunConfig& cfg);

// 24-bin play-fraction histograms and per-user dtavg; writes habits.csv and
// dtavg.csv.
void cmd_habits(const RunConfig& cfg);

}  // namespace tempocf
