#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sperl {

// Formats a double with 17 significant digits, '.' decimal point,
// no locale dependence. Regression tests diff CSV artifacts byte-wise.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open CSV for writing: " + path);
        columns_ = header.size();
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out_ << ',';
            out_ << header[i];
        }
        out_ << '\n';
    }

    void row(const std::vector<double>& values) {
        if (values.size() != columns_)
            throw std::invalid_argument("CSV row width mismatch");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) out_ << ',';
            out_ << format_double(values[i]);
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
    std::size_t columns_ = 0;
};

} // namespace sperl
