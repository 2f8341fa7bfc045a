#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace tempocf {

// Seconds since the Unix epoch (UTC).
using Instant = std::int64_t;

inline constexpr std::int64_t kSecondsPerDay = 86400;
inline constexpr std::int64_t kSecondsPerHour = 3600;

// One Julian year, the fixed normalization constant behind "years" as a
// decay time unit.
inline constexpr double kJulianYearSeconds = 31557600.0;

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(int year, int month, int day);

// Inverse of days_from_civil.
void civil_from_days(std::int64_t days, int& year, int& month, int& day);

bool valid_civil_date(int year, int month, int day);

// Parses "YYYY-MM-DDTHH:MM:SS" with an optional 'Z' or "+HH:MM"/"-HH:MM"
// suffix ('T' or ' ' as date/time separator). Bare timestamps are treated as
// wall time at `default_offset_seconds` east of UTC.
std::optional<Instant> parse_iso8601(std::string_view text, int default_offset_seconds = 0);

std::string format_iso8601_utc(Instant t);

// "UTC", "Z", or a fixed offset like "+02:00", "-0530", "+2".
std::optional<int> parse_utc_offset(std::string_view text);

// Local-time helpers for a fixed offset east of UTC.
int local_hour(Instant t, int utc_offset_seconds);
double local_fractional_hour(Instant t, int utc_offset_seconds);

}  // namespace tempocf
