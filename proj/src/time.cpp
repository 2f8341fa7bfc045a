#include "tempocf/time.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cstdio>

namespace tempocf {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b) != 0 && ((a < 0) != (b < 0))) --q;
  return q;
}

bool parse_fixed_uint(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    char c = s[i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

bool leap_year(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

}  // namespace

std::int64_t days_from_civil(int y, int m, int d) {
  // Howard Hinnant's algorithm, days relative to 1970-01-01.
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& year, int& month, int& day) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  day = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  month = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  year = static_cast<int>(y + (month <= 2));
}

bool valid_civil_date(int year, int month, int day) {
  if (year < 1 || year > 9999) return false;
  if (month < 1 || month > 12) return false;
  static constexpr std::array<int, 12> kDays = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  int max_day = kDays[static_cast<std::size_t>(month - 1)];
  if (month == 2 && leap_year(year)) max_day = 29;
  return day >= 1 && day <= max_day;
}

std::optional<Instant> parse_iso8601(std::string_view s, int default_offset_seconds) {
  // YYYY-MM-DD[T ]HH:MM:SS with optional zone suffix.
  if (s.size() < 19) return std::nullopt;
  int year, month, day, hour, minute, second;
  if (!parse_fixed_uint(s, 0, 4, year)) return std::nullopt;
  if (s[4] != '-') return std::nullopt;
  if (!parse_fixed_uint(s, 5, 2, month)) return std::nullopt;
  if (s[7] != '-') return std::nullopt;
  if (!parse_fixed_uint(s, 8, 2, day)) return std::nullopt;
  if (s[10] != 'T' && s[10] != ' ') return std::nullopt;
  if (!parse_fixed_uint(s, 11, 2, hour)) return std::nullopt;
  if (s[13] != ':') return std::nullopt;
  if (!parse_fixed_uint(s, 14, 2, minute)) return std::nullopt;
  if (s[16] != ':') return std::nullopt;
  if (!parse_fixed_uint(s, 17, 2, second)) return std::nullopt;

  if (!valid_civil_date(year, month, day)) return std::nullopt;
  if (hour > 23 || minute > 59 || second > 59) return std::nullopt;

  int offset = default_offset_seconds;
  if (s.size() > 19) {
    auto suffix = s.substr(19);
    if (suffix == "Z") {
      offset = 0;
    } else {
      auto parsed = parse_utc_offset(suffix);
      if (!parsed) return std::nullopt;
      offset = *parsed;
    }
  }

  Instant wall = days_from_civil(year, month, day) * kSecondsPerDay +
                 hour * kSecondsPerHour + minute * 60 + second;
  return wall - offset;
}

std::string format_iso8601_utc(Instant t) {
  std::int64_t days = floor_div(t, kSecondsPerDay);
  std::int64_t sod = t - days * kSecondsPerDay;
  int year, month, day;
  civil_from_days(days, year, month, day);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", year, month, day,
                static_cast<int>(sod / 3600), static_cast<int>((sod / 60) % 60),
                static_cast<int>(sod % 60));
  return buf;
}

std::optional<int> parse_utc_offset(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s == "UTC" || s == "utc" || s == "Z" || s == "z") return 0;
  int sign = 0;
  if (s[0] == '+') sign = 1;
  else if (s[0] == '-') sign = -1;
  else return std::nullopt;
  std::string_view rest = s.substr(1);
  int hours = 0, minutes = 0;
  auto colon = rest.find(':');
  auto to_int = [](std::string_view v, int& out) {
    if (v.empty() || v.size() > 2) return false;
    out = 0;
    for (char c : v) {
      if (!std::isdigit(static_cast<unsigned char>(c))) return false;
      out = out * 10 + (c - '0');
    }
    return true;
  };
  if (colon != std::string_view::npos) {
    if (!to_int(rest.substr(0, colon), hours)) return std::nullopt;
    if (!to_int(rest.substr(colon + 1), minutes)) return std::nullopt;
  } else if (rest.size() == 4) {
    if (!to_int(rest.substr(0, 2), hours) || !to_int(rest.substr(2), minutes)) return std::nullopt;
  } else {
    if (!to_int(rest, hours)) return std::nullopt;
  }
  if (hours > 14 || minutes > 59) return std::nullopt;
  return sign * (hours * 3600 + minutes * 60);
}

int local_hour(Instant t, int utc_offset_seconds) {
  std::int64_t local = t + utc_offset_seconds;
  std::int64_t sod = local - floor_div(local, kSecondsPerDay) * kSecondsPerDay;
  return static_cast<int>(sod / kSecondsPerHour);
}

double local_fractional_hour(Instant t, int utc_offset_seconds) {
  std::int64_t local = t + utc_offset_seconds;
  std::int64_t sod = local - floor_div(local, kSecondsPerDay) * kSecondsPerDay;
  return static_cast<double>(sod) / 3600.0;
}

}  // namespace tempocf
