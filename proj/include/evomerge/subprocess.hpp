#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace evomerge {

struct ProcessResult {
    int exit_code = -1;  // -1 when killed by a signal
    int signal = 0;
    std::string out;
    std::string err;
};

// Runs argv[0] (PATH lookup) with `input` on stdin, collecting stdout and
// stderr. stdin is closed once the input is written. Throws std::system_error
// if the process cannot be started.
ProcessResult run_process(const std::vector<std::string>& argv, std::string_view input);

}  // namespace evomerge
