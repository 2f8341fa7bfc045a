#include "tempocf/playlog.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "tempocf/errors.hpp"

namespace tempocf {

namespace {

std::vector<std::string> sorted_unique(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::optional<std::uint32_t> index_in_sorted(const std::vector<std::string>& ids,
                                             std::string_view id) {
  auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) return std::nullopt;
  return static_cast<std::uint32_t>(it - ids.begin());
}

}  // namespace

PlayLog PlayLog::from_raw(std::vector<RawPlay> raw, int utc_offset_seconds) {
  PlayLog log;
  log.utc_offset_seconds_ = utc_offset_seconds;
  if (raw.empty()) return log;

  std::vector<std::string> users, songs;
  users.reserve(raw.size());
  songs.reserve(raw.size());
  for (const auto& r : raw) {
    users.push_back(r.user);
    songs.push_back(r.song);
  }
  log.user_ids_ = sorted_unique(std::move(users));
  log.song_ids_ = sorted_unique(std::move(songs));

  log.events_.reserve(raw.size());
  for (const auto& r : raw) {
    PlayEvent e;
    e.user = *index_in_sorted(log.user_ids_, r.user);
    e.song = *index_in_sorted(log.song_ids_, r.song);
    e.instant = r.instant;
    log.events_.push_back(e);
  }
  std::sort(log.events_.begin(), log.events_.end(), [](const PlayEvent& a, const PlayEvent& b) {
    if (a.user != b.user) return a.user < b.user;
    if (a.song != b.song) return a.song < b.song;
    return a.instant < b.instant;
  });

  log.user_offsets_.assign(log.user_ids_.size() + 1, 0);
  for (const auto& e : log.events_) ++log.user_offsets_[e.user + 1];
  for (std::size_t u = 1; u < log.user_offsets_.size(); ++u)
    log.user_offsets_[u] += log.user_offsets_[u - 1];

  log.t_min_ = log.events_.front().instant;
  log.t_max_ = log.t_min_;
  for (const auto& e : log.events_) {
    log.t_min_ = std::min(log.t_min_, e.instant);
    log.t_max_ = std::max(log.t_max_, e.instant);
  }
  return log;
}

std::optional<std::uint32_t> PlayLog::user_index(std::string_view id) const {
  return index_in_sorted(user_ids_, id);
}

std::optional<std::uint32_t> PlayLog::song_index(std::string_view id) const {
  return index_in_sorted(song_ids_, id);
}

std::span<const PlayEvent> PlayLog::events_for_user(std::uint32_t u) const {
  return {events_.data() + user_offsets_[u], events_.data() + user_offsets_[u + 1]};
}

std::uint64_t PlayLog::play_count(std::uint32_t u, std::uint32_t s) const {
  auto span = events_for_user(u);
  auto lo = std::lower_bound(span.begin(), span.end(), s,
                             [](const PlayEvent& e, std::uint32_t song) { return e.song < song; });
  auto hi = std::upper_bound(span.begin(), span.end(), s,
                             [](std::uint32_t song, const PlayEvent& e) { return song < e.song; });
  return static_cast<std::uint64_t>(hi - lo);
}

Instant PlayLog::t_max() const {
  if (events_.empty()) throw EmptyLogError("t_max of an empty log");
  return t_max_;
}

Instant PlayLog::t_min() const {
  if (events_.empty()) throw EmptyLogError("t_min of an empty log");
  return t_min_;
}

std::optional<ContextSegment> ContextSegment::from_name(std::string_view name) {
  if (name == "day" || name == "day24h" || name == "24h") return day24h();
  if (name == "morning") return morning();
  if (name == "evening") return evening();
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace {

// Fallback song identity when the track id is missing. The unit separator
// cannot occur in tab-separated fields, so the join is collision-free.
constexpr char kNameJoin = '\x1f';

std::vector<std::string_view> split_tabs(std::string_view line, std::size_t max_fields) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (fields.size() + 1 < max_fields) {
    auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) break;
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  fields.push_back(line.substr(start));
  return fields;
}

struct LineOutcome {
  bool ok = false;
  RawPlay play;
  std::string reason;
};

LineOutcome parse_line(std::string_view line, LogFormat format, int utc_offset_seconds) {
  LineOutcome out;
  std::size_t want = format == LogFormat::Lastfm360k ? 6 : 3;
  auto fields = split_tabs(line, want);
  if (fields.size() < want) {
    out.reason = "expected " + std::to_string(want) + " tab-separated columns";
    return out;
  }

  std::string_view user = fields[0];
  std::string_view ts = fields[1];
  std::string song;
  if (format == LogFormat::Lastfm360k) {
    std::string_view track_id = fields[4];
    if (!track_id.empty()) {
      song = std::string(track_id);
    } else {
      std::string_view artist_name = fields[3];
      std::string_view track_name = fields[5];
      if (artist_name.empty() && track_name.empty()) {
        out.reason = "no song identifier (empty track id and names)";
        return out;
      }
      song = std::string(artist_name) + kNameJoin + std::string(track_name);
    }
  } else {
    song = std::string(fields[2]);
  }

  if (user.empty()) {
    out.reason = "empty user identifier";
    return out;
  }
  if (song.empty()) {
    out.reason = "empty song identifier";
    return out;
  }
  auto instant = parse_iso8601(ts, utc_offset_seconds);
  if (!instant) {
    out.reason = "unparseable timestamp";
    return out;
  }

  out.ok = true;
  out.play = RawPlay{std::string(user), std::move(song), *instant};
  return out;
}

}  // namespace

std::optional<LogFormat> log_format_from_name(std::string_view name) {
  if (name == "lastfm" || name == "lastfm360k") return LogFormat::Lastfm360k;
  if (name == "normalized" || name == "tsv3") return LogFormat::NormalizedTsv;
  if (name == "auto") return LogFormat::Auto;
  return std::nullopt;
}

PlayLog parse_log(std::istream& in, LogFormat format, int utc_offset_seconds,
                  ParseReport* report) {
  std::vector<RawPlay> plays;
  ParseReport local;
  ParseReport& rep = report ? *report : local;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++rep.total_lines;

    if (format == LogFormat::Auto) {
      auto tabs = static_cast<std::size_t>(std::count(line.begin(), line.end(), '\t'));
      format = tabs >= 5 ? LogFormat::Lastfm360k : LogFormat::NormalizedTsv;
    }

    auto outcome = parse_line(line, format, utc_offset_seconds);
    if (outcome.ok) {
      plays.push_back(std::move(outcome.play));
      ++rep.accepted;
    } else {
      rep.rejections.push_back({line_no, std::move(outcome.reason)});
    }
  }
  if (in.bad()) throw IoError("I/O error while reading play log");
  if (plays.empty()) throw EmptyLogError("no well-formed play records in input");
  return PlayLog::from_raw(std::move(plays), utc_offset_seconds);
}

PlayLog parse_log_file(const std::filesystem::path& path, LogFormat format,
                       int utc_offset_seconds, ParseReport* report) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open play log: " + path.string());
  return parse_log(in, format, utc_offset_seconds, report);
}

void write_normalized_tsv(const PlayLog& log, std::ostream& out) {
  for (const auto& e : log.events()) {
    out << log.user_id(e.user) << '\t' << format_iso8601_utc(e.instant) << '\t'
        << log.song_id(e.song) << '\n';
  }
}

void write_rejections_tsv(const ParseReport& report, std::ostream& out) {
  out << "line\treason\n";
  for (const auto& r : report.rejections) out << r.line << '\t' << r.reason << '\n';
}

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

namespace {

PlayLog rebuild_from_events(const PlayLog& src, const std::vector<PlayEvent>& kept) {
  std::vector<RawPlay> raw;
  raw.reserve(kept.size());
  for (const auto& e : kept)
    raw.push_back({src.user_id(e.user), src.song_id(e.song), e.instant});
  return PlayLog::from_raw(std::move(raw), src.utc_offset_seconds());
}

}  // namespace

PlayLog filter_context(const PlayLog& log, const ContextSegment& segment) {
  if (log.empty()) throw EmptyLogError("filter_context on an empty log");
  if (segment.label == ContextSegment::Label::Day24h) return log;
  std::vector<PlayEvent> kept;
  for (const auto& e : log.events())
    if (segment.admits(log.event_local_hour(e))) kept.push_back(e);
  if (kept.empty())
    throw EmptyLogError(std::string("no events in segment ") + std::string(segment.name()));
  return rebuild_from_events(log, kept);
}

PlayLog filter_users(const PlayLog& log, const std::vector<std::string>& user_ids) {
  std::unordered_set<std::uint32_t> keep;
  for (const auto& id : user_ids) {
    auto idx = log.user_index(id);
    if (idx) keep.insert(*idx);
  }
  std::vector<PlayEvent> kept;
  for (const auto& e : log.events())
    if (keep.count(e.user)) kept.push_back(e);
  if (kept.empty()) throw EmptyLogError("no events left after user restriction");
  return rebuild_from_events(log, kept);
}

TemporalSplit split_temporal(const PlayLog& log, Instant boundary) {
  std::vector<PlayEvent> train_events, test_events;
  for (const auto& e : log.events()) {
    if (e.instant < boundary) train_events.push_back(e);
    else test_events.push_back(e);
  }
  if (train_events.empty()) throw DegenerateSplitError("no events before split boundary");
  if (test_events.empty()) throw DegenerateSplitError("no events at or after split boundary");
  TemporalSplit split;
  split.boundary = boundary;
  split.train = rebuild_from_events(log, train_events);
  split.test = rebuild_from_events(log, test_events);
  return split;
}

TemporalSplit dedupe_test_pairs(const TemporalSplit& split) {
  const PlayLog& train = split.train;
  const PlayLog& test = split.test;

  // Map test indices into train's tables once, then drop overlapping pairs.
  std::vector<std::optional<std::uint32_t>> user_map(test.user_count());
  std::vector<std::optional<std::uint32_t>> song_map(test.song_count());
  for (std::uint32_t u = 0; u < test.user_count(); ++u)
    user_map[u] = train.user_index(test.user_id(u));
  for (std::uint32_t s = 0; s < test.song_count(); ++s)
    song_map[s] = train.song_index(test.song_id(s));

  std::unordered_set<std::uint64_t> train_pairs;
  train_pairs.reserve(train.size());
  for (const auto& e : train.events())
    train_pairs.insert((static_cast<std::uint64_t>(e.user) << 32) | e.song);

  std::vector<PlayEvent> kept;
  for (const auto& e : test.events()) {
    auto u = user_map[e.user];
    auto s = song_map[e.song];
    bool seen = u && s &&
                train_pairs.count((static_cast<std::uint64_t>(*u) << 32) | *s) > 0;
    if (!seen) kept.push_back(e);
  }
  if (kept.empty()) throw EmptyLogError("every test pair also occurs in train");

  TemporalSplit out;
  out.boundary = split.boundary;
  out.train = train;
  out.test = rebuild_from_events(test, kept);
  return out;
}

PlayLog merge_logs(const PlayLog& a, const PlayLog& b) {
  std::vector<RawPlay> raw;
  raw.reserve(a.size() + b.size());
  for (const auto& e : a.events()) raw.push_back({a.user_id(e.user), a.song_id(e.song), e.instant});
  for (const auto& e : b.events()) raw.push_back({b.user_id(e.user), b.song_id(e.song), e.instant});
  return PlayLog::from_raw(std::move(raw), a.utc_offset_seconds());
}

std::array<double, 24> hourly_frequencies(const PlayLog& log,
                                          std::optional<std::string_view> user) {
  if (log.empty()) throw EmptyLogError("hourly_frequencies on an empty log");
  std::array<std::uint64_t, 24> counts{};
  std::uint64_t total = 0;
  if (user) {
    auto idx = log.user_index(*user);
    if (!idx) throw UnknownUserError("unknown user: " + std::string(*user));
    for (const auto& e : log.events_for_user(*idx)) {
      ++counts[static_cast<std::size_t>(log.event_local_hour(e))];
      ++total;
    }
  } else {
    for (const auto& e : log.events()) {
      ++counts[static_cast<std::size_t>(log.event_local_hour(e))];
      ++total;
    }
  }
  std::array<double, 24> fractions{};
  for (std::size_t h = 0; h < 24; ++h)
    fractions[h] = static_cast<double>(counts[h]) / static_cast<double>(total);
  return fractions;
}

}  // namespace tempocf
