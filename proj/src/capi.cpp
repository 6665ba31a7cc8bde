#include "patternforge.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <new>
#include <sstream>
#include <stdexcept>
#include <string>

#include "patternforge/config.hpp"
#include "patternforge/pipeline.hpp"

struct pf_pipeline {
    pf::PipelineConfig config;
    std::string last_error;
};

namespace {

// Copy into malloc storage so pf_string_free can release it with free().
char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

// Exception-to-error-code boundary. runtime_code is the code a plain
// std::runtime_error maps to: PF_ERR_IO for calls whose work is file
// access, PF_ERR_INTERNAL for computation.
template <typename Fn>
int guarded(pf_pipeline* p, int runtime_code, Fn&& fn) {
    if (!p) return PF_ERR_INVALID;
    p->last_error.clear();
    try {
        fn();
        return PF_OK;
    } catch (const pf::StaleInputError& e) {
        p->last_error = e.what();
        return PF_ERR_STATE;
    } catch (const std::invalid_argument& e) {
        p->last_error = e.what();
        return PF_ERR_INVALID;
    } catch (const std::filesystem::filesystem_error& e) {
        p->last_error = e.what();
        return PF_ERR_IO;
    } catch (const std::runtime_error& e) {
        p->last_error = e.what();
        return runtime_code;
    } catch (const std::exception& e) {
        p->last_error = e.what();
        return PF_ERR_INTERNAL;
    } catch (...) {
        p->last_error = "unknown error";
        return PF_ERR_INTERNAL;
    }
}

const char* require_cstr(const char* s, const char* what) {
    if (!s) throw std::invalid_argument(std::string(what) + " is null");
    return s;
}

void require_out(char** out) {
    if (!out) throw std::invalid_argument("out is null");
    *out = nullptr;
}

void check_stage_name(const std::string& stage) {
    const auto& stages = pf::pipeline_stages();
    if (std::find(stages.begin(), stages.end(), stage) == stages.end()) {
        throw std::invalid_argument("unknown stage '" + stage + "'");
    }
}

} // namespace

extern "C" {

const char* pf_version(void) {
#ifdef PF_VERSION_STRING
    return PF_VERSION_STRING;
#else
    return "0.0.0";
#endif
}

size_t pf_stage_count(void) {
    return pf::pipeline_stages().size();
}

const char* pf_stage_name(size_t index) {
    const auto& stages = pf::pipeline_stages();
    if (index >= stages.size()) return nullptr;
    return stages[index].c_str();
}

pf_pipeline* pf_pipeline_create(void) {
    return new (std::nothrow) pf_pipeline();
}

void pf_pipeline_destroy(pf_pipeline* p) {
    delete p;
}

int pf_pipeline_load_config(pf_pipeline* p, const char* path) {
    return guarded(p, PF_ERR_IO, [&] {
        p->config = pf::load_config(require_cstr(path, "path"));
    });
}

int pf_pipeline_set_option(pf_pipeline* p, const char* key, const char* value) {
    return guarded(p, PF_ERR_INVALID, [&] {
        pf::set_config_key(p->config, require_cstr(key, "key"),
                           require_cstr(value, "value"));
    });
}

int pf_pipeline_emit_config(pf_pipeline* p, char** out) {
    return guarded(p, PF_ERR_INTERNAL, [&] {
        require_out(out);
        *out = dup_string(pf::emit_config(p->config));
    });
}

int pf_pipeline_config_hash(pf_pipeline* p, char** out) {
    return guarded(p, PF_ERR_INTERNAL, [&] {
        require_out(out);
        *out = dup_string(pf::config_hash(p->config));
    });
}

int pf_pipeline_run_stage(pf_pipeline* p, const char* stage) {
    return guarded(p, PF_ERR_INTERNAL, [&] {
        pf::run_stage(p->config, require_cstr(stage, "stage"));
    });
}

int pf_pipeline_run_all(pf_pipeline* p) {
    return guarded(p, PF_ERR_INTERNAL, [&] { pf::run_pipeline(p->config); });
}

int pf_pipeline_artifact_path(pf_pipeline* p, const char* stage, char** out) {
    return guarded(p, PF_ERR_INTERNAL, [&] {
        require_out(out);
        const std::string name = require_cstr(stage, "stage");
        check_stage_name(name);
        *out = dup_string(pf::stage_artifact_path(p->config, name));
    });
}

int pf_pipeline_artifact_json(pf_pipeline* p, const char* stage, char** out) {
    return guarded(p, PF_ERR_IO, [&] {
        require_out(out);
        const std::string name = require_cstr(stage, "stage");
        check_stage_name(name);
        const std::string path = pf::stage_artifact_path(p->config, name);
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw std::runtime_error("cannot open artifact '" + path +
                                     "'; run stage '" + name + "' first");
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        *out = dup_string(buf.str());
    });
}

int pf_pipeline_write_synth(pf_pipeline* p, const char* csv_path) {
    return guarded(p, PF_ERR_IO, [&] {
        pf::write_synth_dataset(p->config, require_cstr(csv_path, "csv_path"));
    });
}

const char* pf_pipeline_last_error(const pf_pipeline* p) {
    if (!p) return "";
    return p->last_error.c_str();
}

void pf_string_free(char* s) {
    std::free(s);
}

} // extern "C"
