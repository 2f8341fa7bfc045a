#include <cstdio>
#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "tempocf/errors.hpp"
#include "tempocf/runner.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

void add_common_options(CLI::App* cmd, tempocf::RunConfig& cfg, std::string& config_path) {
  cmd->add_option("--input", cfg.input, "play log file (TSV)");
  cmd->add_option("--format", cfg.format, "log format: lastfm | normalized | auto");
  cmd->add_option("--tz", cfg.tz, "timezone offset for local hours, e.g. UTC or +02:00");
  cmd->add_option("--out", cfg.out_dir, "output directory");
  cmd->add_option("--config", config_path,
                  "key=value config file; command-line flags override its values");
}

void add_split_options(CLI::App* cmd, tempocf::RunConfig& cfg) {
  std::string boundary;
  cmd->add_option_function<std::string>(
         "--boundary", [&cfg](const std::string& v) { cfg.boundary = v; },
         "explicit split instant (ISO-8601); overrides the month counts");
  cmd->add_option("--train-months", cfg.train_months, "training window in months from the first event");
  cmd->add_option("--test-months", cfg.test_months, "test window in months after the boundary");
}

void add_experiment_options(CLI::App* cmd, tempocf::RunConfig& cfg) {
  cmd->add_option("--lambda", cfg.lambda, "decay rate per year");
  cmd->add_option("--k", cfg.k, "neighbor count");
  cmd->add_option("--topn", cfg.top_n, "recommendation list length");
  cmd->add_option("--contexts", cfg.contexts, "contexts to run: day, morning, evening")
      ->delimiter(',');
  cmd->add_option("--methods", cfg.methods, "methods to run")->delimiter(',');
  cmd->add_option("--variants", cfg.variants, "rating variants: plain, decay")->delimiter(',');
  cmd->add_option("--seed", cfg.seed, "RNG seed for factor models");
  cmd->add_option("--jobs", cfg.jobs, "grid cells to run concurrently");
  cmd->add_option("--dtavg-scope", cfg.dtavg_scope, "plays behind dtavg: train | all");
  cmd->add_flag("--no-scale-dtavg{false}", cfg.scale_dtavg, "disable min-max scaling of dtavg")
      ->default_val(true);
  cmd->add_option("--dtavg-scale-max", cfg.dtavg_scale_max, "upper end of the scaled dtavg range");
  cmd->add_flag("--exclude-negative-pearson", cfg.exclude_negative_pearson,
                "drop negatively correlated neighbors");
  cmd->add_option("--mf-dim", cfg.mf_dim, "latent dimension");
  cmd->add_option("--mf-lr", cfg.mf_learning_rate, "SGD learning rate");
  cmd->add_option("--mf-reg", cfg.mf_regularization, "L2 regularization");
  cmd->add_option("--mf-epochs", cfg.mf_epochs, "SGD epochs");
  cmd->add_option("--wrmf-alpha", cfg.wrmf_alpha, "WRMF confidence scaling");
  cmd->add_option("--wrmf-iters", cfg.wrmf_iterations, "WRMF ALS sweeps");
}

void print_grid_outcome(const tempocf::GridOutcome& outcome) {
  std::printf("%zu cells completed, %zu failed\n", outcome.reports.size(),
              outcome.failed_cells.size());
  for (const auto& f : outcome.failed_cells) std::printf("failed cell: %s\n", f.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time-aware music recommendation experiments from raw play logs"};
  app.require_subcommand(1);

  tempocf::RunConfig cfg;
  std::string config_path;

  // The config file loads first so that flags override its values.
  for (int i = 1; i < argc; ++i) {
    std::string_view arg = argv[i];
    if (arg == "--config" && i + 1 < argc) config_path = argv[i + 1];
    else if (arg.rfind("--config=", 0) == 0) config_path = std::string(arg.substr(9));
  }
  if (!config_path.empty()) {
    try {
      tempocf::apply_config_file(cfg, config_path);
    } catch (const tempocf::ConfigError& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitUsage;
    }
  }

  auto* ingest = app.add_subcommand("ingest", "parse a play log, print a summary, cache it");
  add_common_options(ingest, cfg, config_path);

  auto* grid = app.add_subcommand("grid", "run the method x context x variant experiment grid");
  add_common_options(grid, cfg, config_path);
  add_split_options(grid, cfg);
  add_experiment_options(grid, cfg);

  auto* cold = app.add_subcommand("cold-start", "evaluate the newest users only (24h grid)");
  add_common_options(cold, cfg, config_path);
  add_split_options(cold, cfg);
  add_experiment_options(cold, cfg);
  cold->add_option("--cold-users", cfg.cold_users, "number of newest users to keep");

  auto* habits = app.add_subcommand("habits", "hourly play-frequency histograms and dtavg");
  add_common_options(habits, cfg, config_path);
  habits->add_option_function<std::string>(
      "--user", [&cfg](const std::string& v) { cfg.habits_user = v; },
      "restrict to one user");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (cfg.input.empty()) {
    std::fprintf(stderr, "error: --input is required (flag or config file)\n");
    return kExitUsage;
  }

  try {
    if (ingest->parsed()) {
      auto s = tempocf::cmd_ingest(cfg);
      std::printf("users=%zu songs=%zu plays=%zu rejected=%zu span=%s..%s\n", s.users, s.songs,
                  s.plays, s.rejected, s.first_instant.c_str(), s.last_instant.c_str());
    } else if (grid->parsed()) {
      print_grid_outcome(tempocf::cmd_grid(cfg));
    } else if (cold->parsed()) {
      print_grid_outcome(tempocf::cmd_cold_start(cfg));
    } else if (habits->parsed()) {
      tempocf::cmd_habits(cfg);
      std::printf("wrote habits.csv and dtavg.csv to %s\n", cfg.out_dir.c_str());
    }
  } catch (const tempocf::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const tempocf::DivergedTrainingError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const tempocf::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitOk;
}
