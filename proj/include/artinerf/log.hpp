// Copyright Contributors to the artinerf project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>

namespace artinerf {

enum class LogLevel { kInfo, kWarning };

using LogSink = std::function<void(LogLevel, const std::string &)>;

namespace detail {
inline std::mutex &log_mutex() {
    static std::mutex m;
    return m;
}
inline LogSink &log_sink() {
    static LogSink sink = [](LogLevel level, const std::string &msg) {
        std::cerr << (level == LogLevel::kWarning ? "warning: " : "") << msg << '\n';
    };
    return sink;
}
} // namespace detail

/// Replaces the process-wide sink; returns the previous one.
inline LogSink set_log_sink(LogSink sink) {
    std::lock_guard lock(detail::log_mutex());
    std::swap(detail::log_sink(), sink);
    return sink;
}

inline void log_message(LogLevel level, const std::string &msg) {
    std::lock_guard lock(detail::log_mutex());
    if (detail::log_sink()) {
        detail::log_sink()(level, msg);
    }
}

inline void log_warning(const std::string &msg) { log_message(LogLevel::kWarning, msg); }
inline void log_info(const std::string &msg) { log_message(LogLevel::kInfo, msg); }

} // namespace artinerf
