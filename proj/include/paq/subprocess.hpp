#pragma once

#include <string>
#include <string_view>
#include <sys/types.h>

namespace paq {

// A child process driven by `/bin/sh -c command`, spoken to one line at a
// time over its stdin/stdout. Not thread-safe; callers serialize access.
class Subprocess {
public:
    explicit Subprocess(const std::string& command);
    ~Subprocess();
    Subprocess(const Subprocess&) = delete;
    Subprocess& operator=(const Subprocess&) = delete;

    void write_line(std::string_view line);
    std::string read_line();
    std::string request(std::string_view line) {
        write_line(line);
        return read_line();
    }

    const std::string& command() const noexcept { return command_; }

private:
    std::string command_;
    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string pending_;
};

// Subprocess-backed specs are written "subprocess:<command>".
bool is_subprocess_spec(std::string_view spec);
std::string subprocess_command(std::string_view spec);

}  // namespace paq
