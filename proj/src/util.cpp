#include "aduw/util.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <sstream>
#include <thread>
#include <vector>

#include "aduw/io.hpp"

namespace aduw {

uint64_t fnv1a64(const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fnv1a64_hex(const std::string& bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return std::string(buf);
}

std::string hash_file_hex(const std::string& path) {
    std::ifstream is = open_input(path, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return fnv1a64_hex(ss.str());
}

int worker_threads() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("ADUW_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) hw = std::min(hw, cap);
    }
    return hw;
}

void parallel_chunks(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    int workers = worker_threads();
    if (n <= 0) return;
    if (workers <= 1 || n == 1) {
        fn(0, n);
        return;
    }
    workers = static_cast<int>(std::min<int64_t>(workers, n));
    int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) {
        int64_t begin = w * chunk;
        int64_t end = std::min<int64_t>(begin + chunk, n);
        if (begin >= end) break;
        threads.emplace_back([&fn, begin, end]() { fn(begin, end); });
    }
    for (auto& t : threads) t.join();
}

std::string utc_timestamp_compact() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%S", &tm);
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch())
                  .count() % 1000;
    char out[48];
    std::snprintf(out, sizeof(out), "%s%03d", buf, static_cast<int>(ms));
    return std::string(out);
}

}  // namespace aduw
