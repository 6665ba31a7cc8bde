#include "patternforge/log.hpp"

#include <cstdlib>
#include <cstring>
#include <mutex>

namespace pf::log {

namespace {

Level g_threshold = Level::Warn;
bool g_initialized = false;
std::mutex g_mutex;

Level parse_level(const char* s) {
    if (!s) return Level::Warn;
    if (std::strcmp(s, "debug") == 0) return Level::Debug;
    if (std::strcmp(s, "info") == 0) return Level::Info;
    if (std::strcmp(s, "warn") == 0) return Level::Warn;
    if (std::strcmp(s, "error") == 0) return Level::Error;
    if (std::strcmp(s, "off") == 0) return Level::Off;
    return Level::Warn;
}

const char* tag(Level lv) {
    switch (lv) {
        case Level::Debug: return "debug";
        case Level::Info: return "info";
        case Level::Warn: return "warn";
        case Level::Error: return "error";
        default: return "?";
    }
}

} // namespace

Level threshold() {
    std::lock_guard<std::mutex> lock(g_mutex);
    if (!g_initialized) {
        g_threshold = parse_level(std::getenv("PATTERNFORGE_LOG"));
        g_initialized = true;
    }
    return g_threshold;
}

void set_threshold(Level lv) {
    std::lock_guard<std::mutex> lock(g_mutex);
    g_threshold = lv;
    g_initialized = true;
}

void write(Level lv, const std::string& msg) {
    if (lv < threshold()) return;
    std::lock_guard<std::mutex> lock(g_mutex);
    std::fprintf(stderr, "[patternforge %s] %s\n", tag(lv), msg.c_str());
}

} // namespace pf::log
