// Shared helpers for the test suites: scratch directories, file comparison,
// and subprocess capture for the CLI tests.
#pragma once

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bftest {

namespace fs = std::filesystem;

// Fresh scratch directory under the system temp root. Removed-on-create so a
// crashed earlier run cannot leak stale files into a new one.
inline fs::path scratch_dir(const std::string& tag) {
    static std::mt19937_64 rng{std::random_device{}()};
    fs::path p = fs::temp_directory_path() /
                 ("burstforge_" + tag + "_" + std::to_string(rng()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

inline std::vector<unsigned char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

inline std::string read_text(const fs::path& path) {
    auto b = read_bytes(path);
    return std::string(b.begin(), b.end());
}

inline bool same_bytes(const fs::path& a, const fs::path& b) {
    return read_bytes(a) == read_bytes(b);
}

// Byte-compares two directory trees (regular files only, relative paths).
inline bool same_tree(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> ra, rb;
    for (auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) ra.push_back(fs::relative(e.path(), a));
    for (auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) rb.push_back(fs::relative(e.path(), b));
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    if (ra != rb) return false;
    for (auto& rel : ra)
        if (!same_bytes(a / rel, b / rel)) return false;
    return true;
}

struct CmdResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr, interleaved
};

// Runs a shell command, capturing combined stdout/stderr. The exit code is
// the child's own (not the wait status).
inline CmdResult run_cmd(const std::string& cmd) {
    CmdResult r;
    std::string full = cmd + " 2>&1";
    FILE* pipe = popen(full.c_str(), "r");
    if (!pipe) throw std::runtime_error("popen failed for: " + cmd);
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
    int status = pclose(pipe);
    if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    return r;
}

inline void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
}

}  // namespace bftest
