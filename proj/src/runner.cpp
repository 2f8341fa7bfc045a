#include "tempocf/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tempocf/errors.hpp"

namespace tempocf {

namespace {

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void write_header(std::ostream& out, const RunConfig& cfg, std::string_view what) {
  out << "# tempocf " << what << "\n";
  out << "# config_hash=" << config_hash(cfg) << "\n";
  out << "# " << config_echo(cfg) << "\n";
}

void write_manifest(const RunConfig& cfg, std::string_view command,
                    const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["command"] = std::string(command);
  j["config_hash"] = config_hash(cfg);
  j["config"] = config_echo(cfg);
  j["outputs"] = outputs;
  auto now = std::chrono::system_clock::now();
  j["run_at"] = format_iso8601_utc(std::chrono::duration_cast<std::chrono::seconds>(
                                       now.time_since_epoch())
                                       .count());
  auto out = open_out(std::filesystem::path(cfg.out_dir) / "manifest.json");
  out << j.dump(2) << "\n";
}

}  // namespace

std::string config_echo(const RunConfig& cfg) {
  std::ostringstream os;
  os << "input=" << cfg.input << " format=" << cfg.format << " tz=" << cfg.tz
     << " boundary=" << (cfg.boundary ? *cfg.boundary : "-")
     << " train_months=" << cfg.train_months << " test_months=" << cfg.test_months
     << " lambda=" << fmt_g(cfg.lambda) << " k=" << cfg.k << " topn=" << cfg.top_n
     << " contexts=" << join(cfg.contexts, ',') << " methods=" << join(cfg.methods, ',')
     << " variants=" << join(cfg.variants, ',') << " seed=" << cfg.seed
     << " jobs=" << cfg.jobs << " cold_users=" << cfg.cold_users
     << " habits_user=" << (cfg.habits_user ? *cfg.habits_user : "-")
     << " dtavg_scope=" << cfg.dtavg_scope << " scale_dtavg=" << (cfg.scale_dtavg ? 1 : 0)
     << " dtavg_scale_max=" << fmt_g(cfg.dtavg_scale_max)
     << " exclude_negative_pearson=" << (cfg.exclude_negative_pearson ? 1 : 0)
     << " mf_dim=" << cfg.mf_dim << " mf_lr=" << fmt_g(cfg.mf_learning_rate)
     << " mf_reg=" << fmt_g(cfg.mf_regularization) << " mf_epochs=" << cfg.mf_epochs
     << " wrmf_alpha=" << fmt_g(cfg.wrmf_alpha) << " wrmf_iterations=" << cfg.wrmf_iterations;
  return os.str();
}

std::string config_hash(const RunConfig& cfg) {
  // FNV-1a, stable across platforms.
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : config_echo(cfg)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());

  auto split_list = [](const std::string& v) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream ss(v);
    while (std::getline(ss, part, ','))
      if (!part.empty()) parts.push_back(part);
    return parts;
  };
  auto to_int = [](const std::string& v, const std::string& key) {
    try {
      return std::stoi(v);
    } catch (...) {
      throw ConfigError("config: bad integer for " + key + ": " + v);
    }
  };
  auto to_double = [](const std::string& v, const std::string& key) {
    try {
      return std::stod(v);
    } catch (...) {
      throw ConfigError("config: bad number for " + key + ": " + v);
    }
  };
  auto to_bool = [](const std::string& v, const std::string& key) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError("config: bad boolean for " + key + ": " + v);
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
      line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    auto eq = line.find('=', start);
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    std::string key = line.substr(start, eq - start);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    std::size_t vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? "" : value.substr(vstart);

    if (key == "input") cfg.input = value;
    else if (key == "format") cfg.format = value;
    else if (key == "tz") cfg.tz = value;
    else if (key == "out") cfg.out_dir = value;
    else if (key == "boundary") cfg.boundary = value;
    else if (key == "train-months") cfg.train_months = to_int(value, key);
    else if (key == "test-months") cfg.test_months = to_int(value, key);
    else if (key == "lambda") cfg.lambda = to_double(value, key);
    else if (key == "k") cfg.k = to_int(value, key);
    else if (key == "topn") cfg.top_n = to_int(value, key);
    else if (key == "contexts") cfg.contexts = split_list(value);
    else if (key == "methods") cfg.methods = split_list(value);
    else if (key == "variants") cfg.variants = split_list(value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "jobs") cfg.jobs = to_int(value, key);
    else if (key == "cold-users") cfg.cold_users = to_int(value, key);
    else if (key == "user") cfg.habits_user = value;
    else if (key == "dtavg-scope") cfg.dtavg_scope = value;
    else if (key == "scale-dtavg") cfg.scale_dtavg = to_bool(value, key);
    else if (key == "dtavg-scale-max") cfg.dtavg_scale_max = to_double(value, key);
    else if (key == "exclude-negative-pearson") cfg.exclude_negative_pearson = to_bool(value, key);
    else if (key == "mf-dim") cfg.mf_dim = to_int(value, key);
    else if (key == "mf-lr") cfg.mf_learning_rate = to_double(value, key);
    else if (key == "mf-reg") cfg.mf_regularization = to_double(value, key);
    else if (key == "mf-epochs") cfg.mf_epochs = to_int(value, key);
    else if (key == "wrmf-alpha") cfg.wrmf_alpha = to_double(value, key);
    else if (key == "wrmf-iters") cfg.wrmf_iterations = to_int(value, key);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
}

int resolve_tz_offset(const RunConfig& cfg) {
  auto off = parse_utc_offset(cfg.tz);
  if (!off) throw ConfigError("bad timezone offset: " + cfg.tz);
  return *off;
}

ExperimentConfig experiment_config(const RunConfig& cfg) {
  ExperimentConfig ec;
  ec.decay.lambda = cfg.lambda;
  ec.k = cfg.k;
  ec.top_n = cfg.top_n;
  ec.sim.scale_dtavg = cfg.scale_dtavg;
  ec.sim.dtavg_scale_max = cfg.dtavg_scale_max;
  ec.sim.exclude_negative_pearson = cfg.exclude_negative_pearson;
  ec.train.d = cfg.mf_dim;
  ec.train.learning_rate = cfg.mf_learning_rate;
  ec.train.regularization = cfg.mf_regularization;
  ec.train.epochs = cfg.mf_epochs;
  ec.train.seed = cfg.seed;
  ec.train.wrmf_alpha = cfg.wrmf_alpha;
  ec.train.wrmf_iterations = cfg.wrmf_iterations;
  if (cfg.dtavg_scope == "train") ec.dtavg_scope = DtavgScope::TrainOnly;
  else if (cfg.dtavg_scope == "all") ec.dtavg_scope = DtavgScope::TrainAndTest;
  else throw ConfigError("dtavg_scope must be 'train' or 'all'");
  if (cfg.lambda < 0) throw ConfigError("lambda must be >= 0");
  if (cfg.k < 1) throw ConfigError("k must be >= 1");
  if (cfg.top_n < 1) throw ConfigError("topn must be >= 1");
  return ec;
}

std::vector<Method> resolve_methods(const RunConfig& cfg) {
  std::vector<Method> out;
  for (const auto& name : cfg.methods) {
    auto m = method_from_name(name);
    if (!m) throw ConfigError("unknown method: " + name);
    out.push_back(*m);
  }
  if (out.empty()) throw ConfigError("no methods selected");
  return out;
}

std::vector<RatingVariant> resolve_variants(const RunConfig& cfg) {
  std::vector<RatingVariant> out;
  for (const auto& name : cfg.variants) {
    if (name == "plain") out.push_back(RatingVariant::Plain);
    else if (name == "decay") out.push_back(RatingVariant::Decay);
    else throw ConfigError("unknown variant: " + name);
  }
  if (out.empty()) throw ConfigError("no variants selected");
  return out;
}

std::vector<ContextSegment> resolve_contexts(const RunConfig& cfg) {
  std::vector<ContextSegment> out;
  for (const auto& name : cfg.contexts) {
    auto c = ContextSegment::from_name(name);
    if (!c) throw ConfigError("unknown context: " + name);
    out.push_back(*c);
  }
  if (out.empty()) throw ConfigError("no contexts selected");
  return out;
}

Instant add_months_utc(Instant t, int months) {
  std::int64_t days = t / kSecondsPerDay - (t % kSecondsPerDay < 0 ? 1 : 0);
  std::int64_t sod = t - days * kSecondsPerDay;
  int year, month, day;
  civil_from_days(days, year, month, day);
  int total = year * 12 + (month - 1) + months;
  year = total / 12;
  month = total % 12 + 1;
  while (!valid_civil_date(year, month, day)) --day;  // clamp to month end
  return days_from_civil(year, month, day) * kSecondsPerDay + sod;
}

PlayLog load_log(const RunConfig& cfg, ParseReport* report) {
  auto format = log_format_from_name(cfg.format);
  if (!format) throw ConfigError("unknown log format: " + cfg.format);
  return parse_log_file(cfg.input, *format, resolve_tz_offset(cfg), report);
}

TemporalSplit split_log(const PlayLog& log, const RunConfig& cfg) {
  if (cfg.boundary) {
    auto instant = parse_iso8601(*cfg.boundary, resolve_tz_offset(cfg));
    if (!instant) throw ConfigError("unparseable boundary: " + *cfg.boundary);
    return split_temporal(log, *instant);
  }
  if (cfg.train_months < 1 || cfg.test_months < 1)
    throw ConfigError("train_months and test_months must be >= 1");
  Instant anchor = log.t_min();
  Instant boundary = add_months_utc(anchor, cfg.train_months);
  auto split = split_temporal(log, boundary);
  Instant end = add_months_utc(anchor, cfg.train_months + cfg.test_months);
  if (split.test.t_max() >= end) {
    auto trimmed = split_temporal(split.test, end);
    split.test = trimmed.train;
  }
  return split;
}

IngestSummary cmd_ingest(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  ParseReport report;
  PlayLog log = load_log(cfg, &report);

  auto norm_path = std::filesystem::path(cfg.out_dir) / "normalized.tsv";
  {
    auto out = open_out(norm_path);
    write_normalized_tsv(log, out);
  }
  auto rej_path = std::filesystem::path(cfg.out_dir) / "rejections.tsv";
  {
    auto out = open_out(rej_path);
    write_rejections_tsv(report, out);
  }
  write_manifest(cfg, "ingest", {"normalized.tsv", "rejections.tsv"});

  IngestSummary s;
  s.users = log.user_count();
  s.songs = log.song_count();
  s.plays = log.size();
  s.rejected = report.rejections.size();
  s.first_instant = format_iso8601_utc(log.t_min());
  s.last_instant = format_iso8601_utc(log.t_max());
  return s;
}

namespace {

struct Cell {
  ContextSegment context;
  Method method;
  RatingVariant variant;
};

GridOutcome run_cells(const PlayLog& train, const PlayLog& test, const std::vector<Cell>& cells,
                      const ExperimentConfig& ec, int jobs, bool cold, int cold_users) {
  std::vector<std::optional<EvalReport>> results(cells.size());
  std::vector<std::string> errors(cells.size());

  auto run_one = [&](std::size_t i) {
    const Cell& cell = cells[i];
    try {
      if (cold) {
        std::vector<Method> ms{cell.method};
        std::vector<RatingVariant> vs{cell.variant};
        auto reports = cold_start_experiment(train, test, cold_users, ms, vs, ec);
        results[i] = reports.at(0);
      } else {
        results[i] = run_experiment(train, test, cell.context, cell.variant, cell.method, ec);
      }
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
    }
  };

  if (jobs > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(cells.size()); ++i)
      run_one(static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < cells.size(); ++i) run_one(i);
  }

  GridOutcome outcome;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (results[i]) {
      outcome.reports.push_back(std::move(*results[i]));
    } else {
      outcome.failed_cells.push_back(
          "method=" + std::string(method_name(cells[i].method)) +
          " context=" + std::string(cells[i].context.name()) +
          " variant=" + std::string(variant_name(cells[i].variant)) + ": " + errors[i]);
    }
  }
  return outcome;
}

void write_report_files(const RunConfig& cfg, const GridOutcome& outcome,
                        std::string_view main_name, bool with_split_views) {
  auto dir = std::filesystem::path(cfg.out_dir);

  {
    auto out = open_out(dir / std::filesystem::path(std::string(main_name)));
    write_header(out, cfg, main_name);
    out << kReportCsvHeader << "\n";
    for (const auto& r : outcome.reports) write_report_csv_row(r, out);
    for (const auto& r : outcome.reports)
      for (const auto& note : r.skipped_notes)
        out << "# skip " << r.method << '/' << r.context << '/' << r.variant << ": " << note
            << "\n";
    for (const auto& f : outcome.failed_cells) out << "# failed " << f << "\n";
  }

  if (!with_split_views) return;

  {
    auto out = open_out(dir / "rating_metrics.csv");
    write_header(out, cfg, "rating metrics");
    out << "method,context,variant,lambda,k,N,mae,rmse,nmae,fallback_count,skipped_users\n";
    char lb[32], buf[32];
    for (const auto& r : outcome.reports) {
      if (std::isnan(r.mae_value)) continue;
      std::snprintf(lb, sizeof(lb), "%g", r.lambda);
      out << r.method << ',' << r.context << ',' << r.variant << ',' << lb << ',' << r.k << ','
          << r.n;
      for (double v : {r.mae_value, r.rmse_value, r.nmae_value}) {
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        out << ',' << buf;
      }
      out << ',' << r.fallback_count << ',' << r.skipped_users << "\n";
    }
    for (const auto& f : outcome.failed_cells) out << "# failed " << f << "\n";
  }

  {
    auto out = open_out(dir / "ranking_metrics.csv");
    write_header(out, cfg, "ranking metrics");
    out << "method,context,variant,lambda,k,N,auc,ndcg,map,prec5,prec10,prec15,skipped_users\n";
    char lb[32], buf[32];
    for (const auto& r : outcome.reports) {
      if (std::isnan(r.auc_value)) continue;
      std::snprintf(lb, sizeof(lb), "%g", r.lambda);
      out << r.method << ',' << r.context << ',' << r.variant << ',' << lb << ',' << r.k << ','
          << r.n;
      for (double v : {r.auc_value, r.ndcg_value, r.map_value, r.prec5, r.prec10, r.prec15}) {
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        out << ',' << buf;
      }
      out << ',' << r.skipped_users << "\n";
    }
    for (const auto& f : outcome.failed_cells) out << "# failed " << f << "\n";
  }

  {
    auto out = open_out(dir / "plot_data.csv");
    write_header(out, cfg, "plot data");
    out << "metric,value,method,context,variant\n";
    char buf[32];
    auto emit = [&](const char* metric, double v, const EvalReport& r) {
      if (std::isnan(v)) return;
      std::snprintf(buf, sizeof(buf), "%.6f", v);
      out << metric << ',' << buf << ',' << r.method << ',' << r.context << ',' << r.variant
          << "\n";
    };
    for (const auto& r : outcome.reports) {
      emit("mae", r.mae_value, r);
      emit("rmse", r.rmse_value, r);
      emit("nmae", r.nmae_value, r);
      emit("auc", r.auc_value, r);
      emit("ndcg", r.ndcg_value, r);
      emit("map", r.map_value, r);
      emit("prec5", r.prec5, r);
      emit("prec10", r.prec10, r);
      emit("prec15", r.prec15, r);
    }
  }
}

}  // namespace

GridOutcome cmd_grid(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  ParseReport parse_report;
  PlayLog log = load_log(cfg, &parse_report);
  {
    auto out = open_out(std::filesystem::path(cfg.out_dir) / "rejections.tsv");
    write_rejections_tsv(parse_report, out);
  }
  auto split = split_log(log, cfg);
  auto ec = experiment_config(cfg);

  std::vector<Cell> cells;
  for (const auto& ctx : resolve_contexts(cfg))
    for (Method m : resolve_methods(cfg))
      for (RatingVariant v : resolve_variants(cfg)) cells.push_back({ctx, m, v});

  auto outcome = run_cells(split.train, split.test, cells, ec, cfg.jobs, false, 0);
  write_report_files(cfg, outcome, "report.csv", true);
  write_manifest(cfg, "grid",
                 {"report.csv", "rating_metrics.csv", "ranking_metrics.csv", "plot_data.csv",
                  "rejections.tsv"});
  return outcome;
}

GridOutcome cmd_cold_start(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  PlayLog log = load_log(cfg);
  auto split = split_log(log, cfg);
  auto ec = experiment_config(cfg);

  std::vector<Cell> cells;
  for (Method m : resolve_methods(cfg))
    for (RatingVariant v : resolve_variants(cfg))
      cells.push_back({ContextSegment::day24h(), m, v});

  auto outcome =
      run_cells(split.train, split.test, cells, ec, cfg.jobs, true, cfg.cold_users);
  write_report_files(cfg, outcome, "cold_start.csv", false);
  write_manifest(cfg, "cold-start", {"cold_start.csv"});
  return outcome;
}

void cmd_habits(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  PlayLog log = load_log(cfg);
  auto dir = std::filesystem::path(cfg.out_dir);

  if (cfg.habits_user && !log.user_index(*cfg.habits_user))
    throw UnknownUserError("unknown user: " + *cfg.habits_user);

  char buf[32];
  {
    auto out = open_out(dir / "habits.csv");
    write_header(out, cfg, "listening habits");
    out << "scope,hour,fraction,segment\n";
    auto emit = [&](std::string_view scope, const std::array<double, 24>& hist) {
      for (int h = 0; h < 24; ++h) {
        std::snprintf(buf, sizeof(buf), "%.6f", hist[static_cast<std::size_t>(h)]);
        bool morning = ContextSegment::morning().admits(h);
        out << scope << ',' << h << ',' << buf << ',' << (morning ? "morning" : "evening")
            << "\n";
      }
    };
    emit("all", hourly_frequencies(log));
    if (cfg.habits_user) {
      emit(*cfg.habits_user, hourly_frequencies(log, *cfg.habits_user));
    } else {
      for (const auto& user : log.user_ids()) emit(user, hourly_frequencies(log, user));
    }
  }

  {
    auto profiles = user_profiles(log, plain_ratings(log));
    auto out = open_out(dir / "dtavg.csv");
    write_header(out, cfg, "average time of day");
    out << "user,total_plays,dtavg\n";
    for (const auto& p : profiles) {
      if (cfg.habits_user && p.user != *cfg.habits_user) continue;
      std::snprintf(buf, sizeof(buf), "%.6f", p.dtavg);
      out << p.user << ',' << p.total_plays << ',' << buf << "\n";
    }
  }

  write_manifest(cfg, "habits", {"habits.csv", "dtavg.csv"});
}

}  // namespace tempocf
