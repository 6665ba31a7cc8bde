#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace pf {

// Calendar date. Only whole trading days appear in the data; there is no
// time-of-day component anywhere in the pipeline.
struct Date {
    int year = 1970;
    int month = 1;
    int day = 1;

    auto operator<=>(const Date&) const = default;

    std::string to_string() const;

    // Days since 1970-01-01 (civil calendar, negative before the epoch).
    std::int64_t to_days() const;
    static Date from_days(std::int64_t days);

    Date next_day() const { return from_days(to_days() + 1); }

    // Parses strict ISO-8601 "YYYY-MM-DD". Throws std::invalid_argument.
    static Date parse(const std::string& iso);
};

struct DateRange {
    Date start;
    Date end; // inclusive

    bool contains(const Date& d) const { return start <= d && d <= end; }
    bool overlaps(const DateRange& o) const { return !(end < o.start || o.end < start); }
};

} // namespace pf
