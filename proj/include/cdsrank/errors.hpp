#ifndef CDSRANK_ERRORS_HPP
#define CDSRANK_ERRORS_HPP

#include <optional>
#include <stdexcept>
#include <string>

namespace cdsrank {

// Failure class for file parsing/serialization. `code` is stable so callers
// can branch without string matching; `line` is 1-based when it applies.
enum class IoCode {
    open_failed,
    bad_magic,
    version_mismatch,
    truncated,
    empty_dataset,
    parse_error,
    shape_mismatch,
    write_failed,
};

class IoError : public std::runtime_error {
public:
    IoError(IoCode code, std::string path, std::string message, long line = -1)
        : std::runtime_error(format(path, message, line)),
          code_(code),
          path_(std::move(path)),
          line_(line) {}

    IoCode code() const noexcept { return code_; }
    const std::string& path() const noexcept { return path_; }
    long line() const noexcept { return line_; }

private:
    static std::string format(const std::string& path, const std::string& message, long line) {
        std::string s = path;
        if (line >= 0) s += ":" + std::to_string(line);
        s += ": " + message;
        return s;
    }

    IoCode code_;
    std::string path_;
    long line_;
};

// Numerical failure (non-convergence, degenerate input to an iteration).
// `estimate` carries the last iterate value when one exists.
class SolverError : public std::runtime_error {
public:
    explicit SolverError(std::string message, std::optional<double> estimate = std::nullopt)
        : std::runtime_error(std::move(message)), estimate_(estimate) {}

    std::optional<double> estimate() const noexcept { return estimate_; }

private:
    std::optional<double> estimate_;
};

}  // namespace cdsrank

#endif
