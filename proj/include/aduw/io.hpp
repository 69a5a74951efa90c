#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace aduw {

// Every file read in the library goes through open_input so tests can audit
// exactly which files a code path touched.
std::ifstream open_input(const std::string& path,
                         std::ios::openmode mode = std::ios::in);

void set_read_audit(bool enabled);
std::vector<std::string> read_audit_log();
void clear_read_audit();

}  // namespace aduw
