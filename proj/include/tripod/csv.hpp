#pragma once

// Minimal numeric CSV: one header row, comma separated, '.' decimals.
// Lines starting with '#' are comments; writers use the first one to tag
// the schema version.

#include <tripod/errors.hpp>

#include <charconv>
#include <fstream>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace tripod::csv {

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::size_t index(std::string_view name) const {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i] == name) return i;
        }
        throw InputError("csv: missing column '" + std::string(name) + "'");
    }

    bool has(std::string_view name) const {
        for (const auto& c : columns) {
            if (c == name) return true;
        }
        return false;
    }

    std::vector<double> column(std::string_view name) const {
        const auto c = index(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[c]);
        return out;
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_double(std::string_view s, const std::string& where) {
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
        // from_chars rejects "inf"/"nan" spellings some tools emit
        if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
        throw InputError(where + ": not a number: '" + std::string(s) + "'");
    }
    return v;
}

} // namespace detail

inline Table parse(std::istream& in, const std::string& name = "csv") {
    Table t;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view = detail::trim(line);
        if (lineno == 1 && view.substr(0, 3) == "\xEF\xBB\xBF") view.remove_prefix(3);
        if (view.empty() || view.front() == '#') continue;
        const auto fields = detail::split(view);
        if (!have_header) {
            for (auto f : fields) t.columns.emplace_back(f);
            have_header = true;
            continue;
        }
        if (fields.size() != t.columns.size()) {
            throw InputError(name + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(t.columns.size()) + " fields, got " +
                             std::to_string(fields.size()));
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (auto f : fields) {
            row.push_back(detail::parse_double(f, name + ":" + std::to_string(lineno)));
        }
        t.rows.push_back(std::move(row));
    }
    if (!have_header) throw InputError(name + ": no header row");
    return t;
}

inline Table read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    return parse(in, path);
}

/// Writes `# <schema>` then the header, then rows at full double precision.
inline void write(std::ostream& out, const std::string& schema, const std::vector<std::string>& columns,
                  const std::vector<std::vector<double>>& rows) {
    out << "# " << schema << '\n';
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
    out << '\n';
    char buf[32];
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            const auto res = std::to_chars(buf, buf + sizeof buf, r[i]);
            if (i) out << ',';
            out.write(buf, res.ptr - buf);
        }
        out << '\n';
    }
}

inline void write_file(const std::string& path, const std::string& schema,
                       const std::vector<std::string>& columns,
                       const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write '" + path + "'");
    write(out, schema, columns, rows);
}

} // namespace tripod::csv
