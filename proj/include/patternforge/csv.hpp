#pragma once

#include <string>

#include "patternforge/series.hpp"

namespace pf {

// Reads an OHLCV file with the exact header `date,open,high,low,close,volume`.
// Dates must be ISO (YYYY-MM-DD), strictly increasing, no duplicates.
// Errors carry the offending line number.
MultivariateSeries read_ohlcv_csv(const std::string& path);

MultivariateSeries parse_ohlcv_csv(const std::string& text, const std::string& origin);

void write_ohlcv_csv(const MultivariateSeries& series, const std::string& path);

} // namespace pf
