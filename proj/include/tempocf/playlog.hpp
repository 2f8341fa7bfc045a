#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tempocf/time.hpp"

namespace tempocf {

// One timestamped play, with user/song interned as indices into the owning
// PlayLog's id tables.
struct PlayEvent {
  std::uint32_t user;
  std::uint32_t song;
  Instant instant;

  friend bool operator==(const PlayEvent&, const PlayEvent&) = default;
};

// A play before interning, as read from a log file.
struct RawPlay {
  std::string user;
  std::string song;
  Instant instant;
};

// Immutable, indexed store of play events. Id tables are sorted, so index
// order coincides with lexicographic id order; events are sorted by
// (user, song, instant), which fixes every downstream summation order.
// Safe for concurrent reads.
class PlayLog {
 public:
  PlayLog() = default;

  static PlayLog from_raw(std::vector<RawPlay> raw, int utc_offset_seconds = 0);

  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& song_ids() const { return song_ids_; }
  const std::vector<PlayEvent>& events() const { return events_; }

  std::size_t user_count() const { return user_ids_.size(); }
  std::size_t song_count() const { return song_ids_.size(); }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  const std::string& user_id(std::uint32_t u) const { return user_ids_[u]; }
  const std::string& song_id(std::uint32_t s) const { return song_ids_[s]; }
  std::optional<std::uint32_t> user_index(std::string_view id) const;
  std::optional<std::uint32_t> song_index(std::string_view id) const;

  // Events of one user, contiguous and sorted by (song, instant).
  std::span<const PlayEvent> events_for_user(std::uint32_t u) const;

  std::uint64_t play_count(std::uint32_t u, std::uint32_t s) const;

  // Throws EmptyLogError on an empty log.
  Instant t_max() const;
  Instant t_min() const;

  int utc_offset_seconds() const { return utc_offset_seconds_; }
  int event_local_hour(const PlayEvent& e) const { return local_hour(e.instant, utc_offset_seconds_); }
  double event_local_fractional_hour(const PlayEvent& e) const {
    return local_fractional_hour(e.instant, utc_offset_seconds_);
  }

  friend bool operator==(const PlayLog&, const PlayLog&) = default;

 private:
  std::vector<std::string> user_ids_;
  std::vector<std::string> song_ids_;
  std::vector<PlayEvent> events_;
  std::vector<std::size_t> user_offsets_;  // CSR offsets into events_, size user_count()+1
  Instant t_min_ = 0;
  Instant t_max_ = 0;
  int utc_offset_seconds_ = 0;
};

// ---------------------------------------------------------------------------
// Context segments
// ---------------------------------------------------------------------------

// Time-of-day segment used for contextual pre-filtering. Morning covers
// [05:00, 18:00) local time, Evening the complement, Day24h everything.
struct ContextSegment {
  enum class Label { Day24h, Morning, Evening };

  Label label = Label::Day24h;

  bool admits(int hour) const {
    switch (label) {
      case Label::Day24h: return true;
      case Label::Morning: return hour >= 5 && hour < 18;
      case Label::Evening: return hour < 5 || hour >= 18;
    }
    return false;
  }

  std::string_view name() const {
    switch (label) {
      case Label::Day24h: return "day";
      case Label::Morning: return "morning";
      case Label::Evening: return "evening";
    }
    return "?";
  }

  static ContextSegment day24h() { return {Label::Day24h}; }
  static ContextSegment morning() { return {Label::Morning}; }
  static ContextSegment evening() { return {Label::Evening}; }
  static std::optional<ContextSegment> from_name(std::string_view name);

  friend bool operator==(const ContextSegment&, const ContextSegment&) = default;
};

struct TemporalSplit {
  PlayLog train;
  PlayLog test;
  Instant boundary = 0;
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

enum class LogFormat {
  // user TAB iso-timestamp TAB artist-id TAB artist-name TAB track-id TAB track-name
  Lastfm360k,
  // user TAB iso-timestamp TAB song
  NormalizedTsv,
  // Detect from the first non-blank line's column count.
  Auto,
};

std::optional<LogFormat> log_format_from_name(std::string_view name);

struct Rejection {
  std::size_t line;  // 1-based line number
  std::string reason;
};

struct ParseReport {
  std::vector<Rejection> rejections;
  std::size_t accepted = 0;
  std::size_t total_lines = 0;
};

// Builds a PlayLog from a line-oriented TSV stream. Malformed records are
// collected in `report` (when given) and skipped; zero well-formed records
// raises EmptyLogError.
PlayLog parse_log(std::istream& in, LogFormat format = LogFormat::Auto,
                  int utc_offset_seconds = 0, ParseReport* report = nullptr);

// Same from a file path; unreadable path raises IoError.
PlayLog parse_log_file(const std::filesystem::path& path, LogFormat format = LogFormat::Auto,
                       int utc_offset_seconds = 0, ParseReport* report = nullptr);

// Writes the normalized 3-column TSV form. parse_log(NormalizedTsv) of the
// output reproduces the log exactly.
void write_normalized_tsv(const PlayLog& log, std::ostream& out);

void write_rejections_tsv(const ParseReport& report, std::ostream& out);

// ---------------------------------------------------------------------------
// Filters and views
// ---------------------------------------------------------------------------

// Keeps the events whose local hour-of-day falls in `segment`. Empty result
// raises EmptyLogError.
PlayLog filter_context(const PlayLog& log, const ContextSegment& segment);

// Keeps the events of the named users only.
PlayLog filter_users(const PlayLog& log, const std::vector<std::string>& user_ids);

// Partitions by instant: train gets instant < boundary, test the rest.
// Raises DegenerateSplitError when one side would be empty.
TemporalSplit split_temporal(const PlayLog& log, Instant boundary);

// Drops test events whose (user, song) pair appears in train. Raises
// EmptyLogError when nothing survives.
TemporalSplit dedupe_test_pairs(const TemporalSplit& split);

// Concatenation of two logs' events (ids re-interned).
PlayLog merge_logs(const PlayLog& a, const PlayLog& b);

// Fractions of plays per local hour of day; sums to 1. `user` empty means
// all users; an unknown user raises UnknownUserError.
std::array<double, 24> hourly_frequencies(const PlayLog& log,
                                          std::optional<std::string_view> user = std::nullopt);

}  // namespace tempocf
