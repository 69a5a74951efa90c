#pragma once

#include <cstdint>
#include <functional>
#include <string>

namespace aduw {

// FNV-1a 64-bit content hash, hex-encoded.
uint64_t fnv1a64(const void* data, size_t len);
std::string fnv1a64_hex(const std::string& bytes);
std::string hash_file_hex(const std::string& path);

// Worker count: min(ADUW_THREADS if set, hardware_concurrency), at least 1.
int worker_threads();

// Static partition of [0,n) over worker_threads() threads. fn(begin, end) must
// be independent per range; results are position-addressed so the outcome does
// not depend on the thread count.
void parallel_chunks(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

std::string utc_timestamp_compact();

}  // namespace aduw
