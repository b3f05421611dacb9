#pragma once

#include <chrono>
#include <string>
#include <vector>

namespace selfevo {

struct ProcessResult {
    int exit_code = -1;  // -1 when killed by a signal or timed out
    bool timed_out = false;
    std::string stdout_text;
    std::string stderr_text;
};

/// Spawns argv[0] (PATH lookup when it has no slash), captures both streams
/// and kills the child after `timeout`. With `clean_env` the child starts
/// with an empty environment.
ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::duration<double> timeout,
                          bool clean_env = false);

}  // namespace selfevo
