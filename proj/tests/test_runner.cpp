#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "synthetic.hpp"
#include "tempocf/errors.hpp"
#include "tempocf/runner.hpp"

using namespace tempocf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_drift_log(const fs::path& file, std::uint64_t seed,
                     const synth::DriftParams& params = {}) {
  auto data = synth::drift_log(seed, params);
  PlayLog log = PlayLog::from_raw(data.plays, 0);
  std::ofstream out(file);
  write_normalized_tsv(log, out);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Body = everything except comment lines (config headers are part of the
// determinism contract, so only the manifest is excluded from comparisons).
std::size_t count_data_rows(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++n;
  return n;
}

}  // namespace

TEST_CASE("add_months_utc walks calendar months") {
  Instant jan = *parse_iso8601("2007-01-15T10:30:00Z");
  CHECK(format_iso8601_utc(add_months_utc(jan, 1)) == "2007-02-15T10:30:00Z");
  CHECK(format_iso8601_utc(add_months_utc(jan, 12)) == "2008-01-15T10:30:00Z");
  // Day clamped to the end of a shorter month.
  Instant jan31 = *parse_iso8601("2007-01-31T00:00:00Z");
  CHECK(format_iso8601_utc(add_months_utc(jan31, 1)) == "2007-02-28T00:00:00Z");
}

TEST_CASE("config hash is stable and tracks changes") {
  RunConfig a;
  a.input = "x.tsv";
  RunConfig b = a;
  CHECK(config_hash(a) == config_hash(b));
  b.lambda = 0.5;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("ingest summarizes and caches the log") {
  TempDir dir("tempocf_test_ingest");
  auto input = dir.path / "log.tsv";
  {
    std::ofstream out(input);
    out << "alice\t2008-05-04T23:08:57Z\ta1\tA\tt1\tT\n"
        << "bob\t2008-05-05T10:00:00Z\ta1\tA\tt1\tT\n"
        << "alice\t2008-05-06T11:00:00Z\ta2\tB\tt2\tU\n"
        << "broken line\n";
  }
  RunConfig cfg;
  cfg.input = input.string();
  cfg.out_dir = (dir.path / "out").string();
  auto summary = cmd_ingest(cfg);
  CHECK(summary.users == 2);
  CHECK(summary.songs == 2);
  CHECK(summary.plays == 3);
  CHECK(summary.rejected == 1);
  CHECK(fs::exists(dir.path / "out" / "normalized.tsv"));
  auto rejections = read_file(dir.path / "out" / "rejections.tsv");
  CHECK(rejections.find("4\t") != std::string::npos);

  // The cache parses back to the same log.
  RunConfig cached = cfg;
  cached.input = (dir.path / "out" / "normalized.tsv").string();
  auto again = cmd_ingest(cached);
  CHECK(again.users == 2);
  CHECK(again.plays == 3);
}

TEST_CASE("grid writes one row per cell and honors method selections") {
  TempDir dir("tempocf_test_grid");
  auto input = dir.path / "drift.tsv";
  synth::DriftParams params;
  params.n_groups = 2;
  params.users_per_group = 5;
  params.cold_users = 2;
  write_drift_log(input, 11, params);

  RunConfig cfg;
  cfg.input = input.string();
  cfg.out_dir = (dir.path / "out").string();
  cfg.methods = {"user-time-knn"};
  cfg.contexts = {"day"};
  cfg.mf_epochs = 3;
  cfg.wrmf_iterations = 2;

  auto outcome = cmd_grid(cfg);
  CHECK(outcome.reports.size() == 2);  // plain + decay
  CHECK(outcome.failed_cells.empty());

  auto report = read_file(dir.path / "out" / "report.csv");
  CHECK(count_data_rows(report) == 3);  // header + 2 rows
  CHECK(report.find("config_hash=") != std::string::npos);
  CHECK(report.find("user-time-knn,day,plain") != std::string::npos);
  CHECK(report.find("user-time-knn,day,decay") != std::string::npos);

  auto rating_csv = read_file(dir.path / "out" / "rating_metrics.csv");
  CHECK(count_data_rows(rating_csv) == 3);
  auto ranking_csv = read_file(dir.path / "out" / "ranking_metrics.csv");
  CHECK(count_data_rows(ranking_csv) == 3);
}

TEST_CASE("grid with lambda zero yields identical plain and decay metrics") {
  TempDir dir("tempocf_test_grid_l0");
  auto input = dir.path / "drift.tsv";
  synth::DriftParams params;
  params.n_groups = 1;
  params.users_per_group = 6;
  params.cold_users = 1;
  write_drift_log(input, 13, params);

  RunConfig cfg;
  cfg.input = input.string();
  cfg.out_dir = (dir.path / "out").string();
  cfg.methods = {"knn-pearson"};
  cfg.contexts = {"day"};
  cfg.lambda = 0.0;

  auto outcome = cmd_grid(cfg);
  REQUIRE(outcome.reports.size() == 2);
  CHECK(outcome.reports[0].mae_value == outcome.reports[1].mae_value);
  CHECK(outcome.reports[0].rmse_value == outcome.reports[1].rmse_value);
}

TEST_CASE("grid runs are byte-identical under the same config") {
  TempDir dir("tempocf_test_grid_det");
  auto input = dir.path / "drift.tsv";
  synth::DriftParams params;
  params.n_groups = 1;
  params.users_per_group = 6;
  params.cold_users = 1;
  write_drift_log(input, 17, params);

  RunConfig cfg;
  cfg.input = input.string();
  cfg.methods = {"knn-cosine", "bmf"};
  cfg.contexts = {"day", "evening"};
  cfg.mf_epochs = 3;
  cfg.jobs = 2;

  cfg.out_dir = (dir.path / "a").string();
  cmd_grid(cfg);
  RunConfig cfg_b = cfg;
  cfg_b.out_dir = (dir.path / "b").string();
  cmd_grid(cfg_b);

  for (const char* name : {"report.csv", "rating_metrics.csv", "ranking_metrics.csv",
                           "plot_data.csv"}) {
    auto a = read_file(dir.path / "a" / name);
    auto b = read_file(dir.path / "b" / name);
    CHECK(a == b);
    CHECK(!a.empty());
  }
}

TEST_CASE("cold start command produces the table-2 shape") {
  TempDir dir("tempocf_test_cold");
  auto input = dir.path / "drift.tsv";
  write_drift_log(input, 19);

  RunConfig cfg;
  cfg.input = input.string();
  cfg.out_dir = (dir.path / "out").string();
  cfg.methods = {"knn-pearson", "knn-cosine", "user-time-knn", "mf", "bmf"};
  cfg.mf_epochs = 3;
  cfg.cold_users = 5;

  auto outcome = cmd_cold_start(cfg);
  CHECK(outcome.reports.size() == 10);  // 5 methods x 2 variants
  for (const auto& r : outcome.reports) CHECK(r.context == "day");
  CHECK(fs::exists(dir.path / "out" / "cold_start.csv"));
}

TEST_CASE("habits command emits histograms and dtavg") {
  TempDir dir("tempocf_test_habits");
  auto input = dir.path / "log.tsv";
  {
    std::ofstream out(input);
    out << "alice\t2008-05-04T08:00:00Z\tsx\n"
        << "alice\t2008-05-04T10:00:00Z\tsx\n"
        << "alice\t2008-05-04T12:00:00Z\tsy\n"
        << "bob\t2008-05-04T20:00:00Z\tsx\n";
  }
  RunConfig cfg;
  cfg.input = input.string();
  cfg.out_dir = (dir.path / "out").string();
  cmd_habits(cfg);

  auto habits = read_file(dir.path / "out" / "habits.csv");
  CHECK(habits.find("all,8,0.250000,morning") != std::string::npos);
  CHECK(habits.find("all,20,0.250000,evening") != std::string::npos);
  CHECK(habits.find("alice,10,0.333333,morning") != std::string::npos);
  auto dtavg = read_file(dir.path / "out" / "dtavg.csv");
  CHECK(dtavg.find("alice,3,10.000000") != std::string::npos);
  CHECK(dtavg.find("bob,1,20.000000") != std::string::npos);

  SUBCASE("unknown user is rejected") {
    cfg.habits_user = "nobody";
    CHECK_THROWS_AS(cmd_habits(cfg), UnknownUserError);
  }
}

TEST_CASE("split_log supports month counts and explicit boundaries") {
  TempDir dir("tempocf_test_split");
  synth::DriftParams params;
  params.n_groups = 1;
  params.users_per_group = 4;
  params.cold_users = 1;
  auto data = synth::drift_log(23, params);
  PlayLog log = PlayLog::from_raw(data.plays, 0);

  RunConfig cfg;
  cfg.train_months = 15;
  cfg.test_months = 2;
  auto split = split_log(log, cfg);
  CHECK(split.train.size() + split.test.size() <= log.size());
  CHECK(split.train.t_max() < split.test.t_min());

  RunConfig explicit_cfg;
  explicit_cfg.boundary = format_iso8601_utc(data.boundary);
  auto split2 = split_log(log, explicit_cfg);
  for (const auto& e : split2.test.events()) CHECK(e.instant >= data.boundary);
}

TEST_CASE("cli binary reports usage and data errors distinctly") {
  const char* bin = TEMPOCF_CLI_PATH;
  std::string missing = std::string(bin) + " grid --input /nonexistent/file.tsv --out /tmp/tempocf_cli_t1 2>/dev/null";
  int rc = std::system(missing.c_str());
  CHECK(WEXITSTATUS(rc) == 2);

  std::string usage = std::string(bin) + " grid 2>/dev/null";
  rc = std::system(usage.c_str());
  CHECK(WEXITSTATUS(rc) == 1);

  std::string help = std::string(bin) + " --help >/dev/null 2>&1";
  rc = std::system(help.c_str());
  CHECK(WEXITSTATUS(rc) == 0);
}

TEST_CASE("cli ingest runs end to end") {
  TempDir dir("tempocf_cli_ingest");
  auto input = dir.path / "log.tsv";
  {
    std::ofstream out(input);
    out << "alice\t2008-05-04T23:08:57Z\tsx\n"
        << "bob\t2008-05-05T10:00:00Z\tsy\n"
        << "alice\t2008-05-06T11:00:00Z\tsx\n";
  }
  std::string cmd = std::string(TEMPOCF_CLI_PATH) + " ingest --input " + input.string() +
                    " --out " + (dir.path / "out").string() + " > " +
                    (dir.path / "stdout.txt").string();
  int rc = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(rc) == 0);
  auto stdout_text = read_file(dir.path / "stdout.txt");
  CHECK(stdout_text.find("users=2 songs=2 plays=3") != std::string::npos);
}

TEST_CASE("config file values apply and flags override them") {
  TempDir dir("tempocf_cli_config");
  auto input = dir.path / "drift.tsv";
  synth::DriftParams params;
  params.n_groups = 1;
  params.users_per_group = 5;
  params.cold_users = 1;
  write_drift_log(input, 29, params);

  auto config = dir.path / "run.cfg";
  {
    std::ofstream out(config);
    out << "lambda=0.2\nmethods=knn-pearson\ncontexts=day\nmf-epochs=2\n";
  }
  auto out_dir = dir.path / "out";
  std::string cmd = std::string(TEMPOCF_CLI_PATH) + " grid --input " + input.string() +
                    " --config " + config.string() + " --lambda 0.3 --out " + out_dir.string() +
                    " >/dev/null";
  int rc = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(rc) == 0);
  auto report = read_file(out_dir / "report.csv");
  // Flag wins over the file.
  CHECK(report.find("lambda=0.3") != std::string::npos);
  CHECK(report.find("methods=knn-pearson") != std::string::npos);
  CHECK(count_data_rows(report) == 3);  // header + 2 variants
}
