#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mfk/common.hpp"

namespace mfk {

/// Minimal CSV emitter: UTF-8, header row, '.' decimal, LF line endings.
class CsvWriter {
  public:
    explicit CsvWriter(const std::string& path, const std::vector<std::string>& header)
        : out_(path, std::ios::binary) {
        if (!out_) throw numerical_error("cannot open for writing: " + path);
        out_.imbue(std::locale::classic());
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out_ << ',';
            out_ << header[i];
        }
        out_ << '\n';
        ncols_ = header.size();
    }

    template <class... Ts>
    void row(const Ts&... vals) {
        std::ostringstream ss;
        ss.imbue(std::locale::classic());
        std::size_t k = 0;
        ((append(ss, vals, k++)), ...);
        require(k == ncols_, "CsvWriter: column count mismatch");
        out_ << ss.str() << '\n';
    }

    void flush() { out_.flush(); }

  private:
    static void fmt(std::ostringstream& ss, double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.12g", v);
        ss << buf;
    }
    static void fmt(std::ostringstream& ss, const std::string& v) { ss << v; }
    static void fmt(std::ostringstream& ss, const char* v) { ss << v; }
    static void fmt(std::ostringstream& ss, std::int64_t v) { ss << v; }
    static void fmt(std::ostringstream& ss, std::uint64_t v) { ss << v; }
    static void fmt(std::ostringstream& ss, int v) { ss << v; }
    template <class T>
    void append(std::ostringstream& ss, const T& v, std::size_t k) {
        if (k) ss << ',';
        fmt(ss, v);
    }

    std::ofstream out_;
    std::size_t ncols_;
};

}  // namespace mfk
