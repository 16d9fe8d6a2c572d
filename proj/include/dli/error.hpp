#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dli {

/// Raised when a computation cannot produce a trustworthy number: a failed
/// factorization, a non-converging iteration, a corrupted quadratic form.
/// Invalid caller input is reported with std::invalid_argument instead.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::function<void(const std::string&)>& warning_sink() {
    static std::function<void(const std::string&)> sink = [](const std::string& msg) {
        std::clog << "warning: " << msg << '\n';
    };
    return sink;
}

inline std::mutex& warning_mutex() {
    static std::mutex m;
    return m;
}

inline thread_local std::vector<std::string>* warning_capture = nullptr;

} // namespace detail

/// Replaces the warning sink (stderr by default). Returns the previous one.
inline std::function<void(const std::string&)> set_warning_sink(std::function<void(const std::string&)> sink) {
    std::lock_guard lock(detail::warning_mutex());
    return std::exchange(detail::warning_sink(), std::move(sink));
}

inline void warn(const std::string& msg) {
    if (detail::warning_capture) {
        detail::warning_capture->push_back(msg);
        return;
    }
    std::lock_guard lock(detail::warning_mutex());
    if (detail::warning_sink()) detail::warning_sink()(msg);
}

/// Collects the warnings raised on the current thread while in scope instead
/// of forwarding them to the sink. Captures nest; the innermost one wins.
class WarningCapture {
public:
    WarningCapture() : previous_(std::exchange(detail::warning_capture, &messages_)) {}
    ~WarningCapture() { detail::warning_capture = previous_; }
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    const std::vector<std::string>& messages() const { return messages_; }

private:
    std::vector<std::string> messages_;
    std::vector<std::string>* previous_;
};

} // namespace dli
