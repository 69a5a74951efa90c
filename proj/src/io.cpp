#include "aduw/io.hpp"

#include <mutex>
#include <stdexcept>

namespace aduw {

namespace {
std::mutex g_audit_mutex;
bool g_audit_enabled = false;
std::vector<std::string> g_audit_log;
}  // namespace

std::ifstream open_input(const std::string& path, std::ios::openmode mode) {
    {
        std::lock_guard<std::mutex> lock(g_audit_mutex);
        if (g_audit_enabled) g_audit_log.push_back(path);
    }
    std::ifstream is(path, mode);
    if (!is) throw std::runtime_error("cannot open file for read: " + path);
    return is;
}

void set_read_audit(bool enabled) {
    std::lock_guard<std::mutex> lock(g_audit_mutex);
    g_audit_enabled = enabled;
}

std::vector<std::string> read_audit_log() {
    std::lock_guard<std::mutex> lock(g_audit_mutex);
    return g_audit_log;
}

void clear_read_audit() {
    std::lock_guard<std::mutex> lock(g_audit_mutex);
    g_audit_log.clear();
}

}  // namespace aduw
