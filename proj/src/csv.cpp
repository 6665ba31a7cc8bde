#include "patternforge/csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pf {

namespace {

const char* kHeader = "date,open,high,low,close,volume";

[[noreturn]] void fail(const std::string& origin, std::size_t line, const std::string& msg) {
    throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + msg);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        std::size_t comma = line.find(',', pos);
        if (comma == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return out;
}

double parse_number(const std::string& field, const std::string& origin, std::size_t line,
                    const char* column) {
    if (field.empty()) fail(origin, line, std::string("empty ") + column + " field");
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(field.c_str(), &end);
    if (errno != 0 || end != field.c_str() + field.size() || !std::isfinite(v))
        fail(origin, line, std::string("bad ") + column + " value '" + field + "'");
    return v;
}

} // namespace

MultivariateSeries parse_ohlcv_csv(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;

    if (!std::getline(in, line)) fail(origin, 1, "empty file");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kHeader)
        fail(origin, lineno,
             "expected header '" + std::string(kHeader) + "', got '" + line + "'");

    MultivariateSeries series;
    series.channels = {"open", "high", "low", "close", "volume"};
    std::vector<double> flat;

    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_fields(line);
        if (fields.size() != 6)
            fail(origin, lineno,
                 "expected 6 fields, got " + std::to_string(fields.size()));

        Date d;
        try {
            d = Date::parse(fields[0]);
        } catch (const std::exception& e) {
            fail(origin, lineno, e.what());
        }
        if (!series.dates.empty()) {
            if (d == series.dates.back())
                fail(origin, lineno, "duplicate date " + fields[0]);
            if (d < series.dates.back())
                fail(origin, lineno, "dates not increasing at " + fields[0]);
        }
        series.dates.push_back(d);

        static const char* cols[5] = {"open", "high", "low", "close", "volume"};
        for (std::size_t c = 0; c < 5; ++c)
            flat.push_back(parse_number(fields[c + 1], origin, lineno, cols[c]));
    }

    if (series.dates.empty()) fail(origin, lineno, "no data rows");

    series.values = Matrix(series.dates.size(), 5);
    for (std::size_t r = 0; r < series.dates.size(); ++r)
        for (std::size_t c = 0; c < 5; ++c) series.values(r, c) = flat[r * 5 + c];
    return series;
}

MultivariateSeries read_ohlcv_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_ohlcv_csv(buf.str(), path);
}

void write_ohlcv_csv(const MultivariateSeries& series, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << kHeader << "\n";
    char buf[64];
    for (std::size_t r = 0; r < series.length(); ++r) {
        out << series.dates[r].to_string();
        for (std::size_t c = 0; c < 5; ++c) {
            std::snprintf(buf, sizeof buf, "%.10g", series.values(r, c));
            out << ',' << buf;
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

} // namespace pf
