#pragma once

#include <string>
#include <vector>

#include "aduw/optim.hpp"
#include "aduw/tensor.hpp"

namespace aduw {

// Flat binary parameter container. Layout:
//   magic "ADUW1", then per parameter:
//   u32 name length | UTF-8 name | u32 rank | u32 dims[rank] | f32 payload
// All integers and floats little-endian. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& params);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace aduw
