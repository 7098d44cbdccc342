#include "paq/subprocess.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <sys/wait.h>
#include <unistd.h>

#include "paq/error.hpp"

namespace paq {

Subprocess::Subprocess(const std::string& command) : command_(command) {
    int in_pipe[2];
    int out_pipe[2];
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) {
        throw_io("pipe() failed for '" + command + "': " + std::strerror(errno));
    }
    // A child that dies early must surface as an error, not kill us.
    std::signal(SIGPIPE, SIG_IGN);
    pid_ = fork();
    if (pid_ < 0) {
        throw_io("fork() failed for '" + command + "': " + std::strerror(errno));
    }
    if (pid_ == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
}

Subprocess::~Subprocess() {
    if (to_child_ >= 0) {
        close(to_child_);
    }
    if (from_child_ >= 0) {
        close(from_child_);
    }
    if (pid_ > 0) {
        int status = 0;
        waitpid(pid_, &status, 0);
    }
}

void Subprocess::write_line(std::string_view line) {
    std::string buf(line);
    buf.push_back('\n');
    size_t off = 0;
    while (off < buf.size()) {
        ssize_t n = ::write(to_child_, buf.data() + off, buf.size() - off);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw Error(ErrorKind::domain, ErrorCode::backend,
                        "subprocess '" + command_ + "' closed its input");
        }
        off += static_cast<size_t>(n);
    }
}

std::string Subprocess::read_line() {
    for (;;) {
        auto nl = pending_.find('\n');
        if (nl != std::string::npos) {
            std::string line = pending_.substr(0, nl);
            pending_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            return line;
        }
        char buf[4096];
        ssize_t n = ::read(from_child_, buf, sizeof(buf));
        if (n < 0 && errno == EINTR) {
            continue;
        }
        if (n <= 0) {
            throw Error(ErrorKind::domain, ErrorCode::backend,
                        "subprocess '" + command_ + "' ended without a reply");
        }
        pending_.append(buf, static_cast<size_t>(n));
    }
}

bool is_subprocess_spec(std::string_view spec) {
    return spec.rfind("subprocess:", 0) == 0;
}

std::string subprocess_command(std::string_view spec) {
    return std::string(spec.substr(std::string_view("subprocess:").size()));
}

}  // namespace paq
