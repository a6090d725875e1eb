#pragma once

#include "mabuchi/errors.hpp"
#include "mabuchi/geodesic.hpp"
#include "mabuchi/grid.hpp"
#include "mabuchi/hash.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace mabuchi {

using json = nlohmann::ordered_json;

inline constexpr const char* library_version = "0.1.0";
inline constexpr int grid_function_format_version = 1;
inline constexpr int path_format_version = 1;

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const GridSpec& s) {
    return json{{"dimension", s.dimension}, {"domain", to_string(s.domain)}, {"h_z", s.h_z},   {"n_t", s.n_t},
                {"m_dir", s.m_dir},         {"m_circ", s.m_circ},            {"stencil_k", s.stencil_k}};
}

inline GridSpec spec_from_json(const json& j) {
    try {
        GridSpec s;
        s.dimension = j.at("dimension").get<int>();
        s.domain = domain_from_string(j.at("domain").get<std::string>());
        s.h_z = j.at("h_z").get<double>();
        s.n_t = j.at("n_t").get<int>();
        s.m_dir = j.at("m_dir").get<int>();
        s.m_circ = j.at("m_circ").get<int>();
        s.stencil_k = j.at("stencil_k").get<int>();
        return s;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed grid spec: ") + e.what());
    }
}

inline json to_json(const GridFunction& u) {
    return json{{"format", "mabuchi.grid_function"},
                {"version", grid_function_format_version},
                {"spec", to_json(u.grid().spec())},
                {"slice_tag", to_string(u.tag())},
                {"values", std::vector<double>(u.values().begin(), u.values().end())}};
}

namespace detail {

inline void check_header(const json& j, const char* format, int version) {
    if (!j.is_object() || !j.contains("format") || j["format"] != format)
        throw FormatError(std::string("not a ") + format + " document");
    if (!j.contains("spec")) throw FormatError(std::string(format) + " document has no spec");
    const int found = j.value("version", -1);
    if (found != version)
        throw FormatError(std::string(format) + " version mismatch: expected " + std::to_string(version) + ", found " +
                          std::to_string(found));
}

inline SliceTag tag_from_string(const std::string& s) {
    if (s == "full") return SliceTag::full;
    if (s == "spatial") return SliceTag::spatial;
    throw FormatError("unknown slice tag '" + s + "'");
}

}  // namespace detail

/// Rebuilds the grid from the stored spec, or reuses `grid` when the specs agree.
inline GridFunction grid_function_from_json(const json& j, GridPtr grid = nullptr) {
    detail::check_header(j, "mabuchi.grid_function", grid_function_format_version);
    const auto spec = spec_from_json(j.at("spec"));
    if (!grid || !(grid->spec() == spec)) {
        try {
            grid = build_grid(spec);
        } catch (const ConfigError& e) {
            throw FormatError(std::string("stored grid spec is invalid: ") + e.what());
        }
    }
    try {
        return GridFunction(grid, detail::tag_from_string(j.at("slice_tag").get<std::string>()),
                            j.at("values").get<std::vector<double>>());
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed grid function: ") + e.what());
    } catch (const UsageError& e) {
        throw FormatError(std::string("grid function does not match its spec: ") + e.what());
    }
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
}

inline void write_json_file(const std::filesystem::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline void save_grid_function(const std::filesystem::path& path, const GridFunction& u) { write_json_file(path, to_json(u)); }

inline GridFunction load_grid_function(const std::filesystem::path& path, GridPtr grid = nullptr) {
    return grid_function_from_json(read_json_file(path), std::move(grid));
}

inline json to_json(const EnvelopeDiagnostics& d) {
    return json{{"iterations", d.iterations},
                {"last_update", d.last_update},
                {"tolerance", d.tolerance},
                {"converged", d.converged},
                {"lambda_min_sup", d.lambda_min_sup},
                {"lambda_min_mean", d.lambda_min_mean},
                {"det_sup", d.det_sup},
                {"det_mean", d.det_mean},
                {"boundary_mismatch", d.boundary_mismatch},
                {"barrier_violations", d.barrier_violations},
                {"majorant_iterations", d.majorant_iterations}};
}

inline json to_json(const GeodesicPath& p) {
    json slices = json::array();
    for (const auto& s : p.slices()) slices.push_back(std::vector<double>(s.values().begin(), s.values().end()));
    json j{{"format", "mabuchi.path"},
           {"version", path_format_version},
           {"spec", to_json(p.grid().spec())},
           {"provenance", p.provenance()},
           {"dt", p.dt()},
           {"slices", std::move(slices)}};
    if (p.diagnostics()) j["diagnostics"] = to_json(*p.diagnostics());
    return j;
}

inline GeodesicPath path_from_json(const json& j) {
    detail::check_header(j, "mabuchi.path", path_format_version);
    GridPtr grid;
    try {
        grid = build_grid(spec_from_json(j.at("spec")));
    } catch (const ConfigError& e) {
        throw FormatError(std::string("stored grid spec is invalid: ") + e.what());
    }
    try {
        std::vector<GridFunction> slices;
        for (const auto& s : j.at("slices")) slices.emplace_back(grid, SliceTag::spatial, s.get<std::vector<double>>());
        return GeodesicPath(std::move(slices), j.value("provenance", std::string{}));
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed path: ") + e.what());
    } catch (const UsageError& e) {
        throw FormatError(std::string("invalid path: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// CSV

/// Comma-separated rows with round-trip number formatting; NaN is written as an empty field.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add(const std::vector<double>& row) {
        if (row.size() != columns_.size()) throw UsageError("CSV row width mismatch");
        rows_.push_back(row);
    }

    std::string str() const {
        std::ostringstream os;
        for (std::size_t c = 0; c < columns_.size(); ++c) os << (c ? "," : "") << columns_[c];
        os << '\n';
        for (const auto& r : rows_) {
            for (std::size_t c = 0; c < r.size(); ++c) {
                if (c) os << ',';
                if (!std::isnan(r[c])) os << format_double(r[c]);
            }
            os << '\n';
        }
        return os.str();
    }

    void save(const std::filesystem::path& path) const { write_text_file(path, str()); }

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<double>> rows_;
};

// ---------------------------------------------------------------------------
// key = value configuration

/// TOML-style configuration: `key = value` lines, `[section]` headers that
/// prefix later keys with `section.`, `#` comments, optional double quotes
/// around string values. Every key must be read by the consumer; leftovers
/// are reported by `check_all_used`.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse(std::istream& in, const std::string& origin = "<config>") {
        KeyValueConfig cfg;
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto where = [&] { return origin + ":" + std::to_string(lineno); };
            const auto hash = find_comment(line);
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError(where() + ": unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                if (section.empty()) throw ConfigError(where() + ": empty section name");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError(where() + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            if (key.empty()) throw ConfigError(where() + ": missing key");
            cfg.set((section.empty() ? "" : section + ".") + key, unquote(trim(line.substr(eq + 1)), where()));
        }
        return cfg;
    }

    static KeyValueConfig from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file " + path.string());
        return parse(in, path.string());
    }

    /// Applies a `key=value` override (section given as a dotted prefix).
    void set_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
        set(trim(assignment.substr(0, eq)), unquote(trim(assignment.substr(eq + 1)), "override"));
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        used_.insert(key);
        auto it = values_.find(key);
        return resolved_[key] = (it == values_.end() ? fallback : it->second);
    }

    double get_double(const std::string& key, double fallback) const {
        used_.insert(key);
        auto it = values_.find(key);
        const double v = it == values_.end() ? fallback : parse_double(key, it->second);
        resolved_[key] = format_double(v);
        return v;
    }

    int get_int(const std::string& key, int fallback) const {
        const double v = get_double(key, fallback);
        if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError(key + " must be an integer");
        return static_cast<int>(v);
    }

    bool get_bool(const std::string& key, bool fallback) const {
        used_.insert(key);
        auto it = values_.find(key);
        bool v = fallback;
        if (it != values_.end()) {
            if (it->second != "true" && it->second != "false") throw ConfigError(key + " must be true or false");
            v = it->second == "true";
        }
        resolved_[key] = v ? "true" : "false";
        return v;
    }

    /// Comma-separated list of numbers, optionally in brackets.
    std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const {
        used_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) {
            std::string text;
            for (double v : fallback) text += (text.empty() ? "" : ",") + format_double(v);
            resolved_[key] = text;
            return fallback;
        }
        resolved_[key] = it->second;
        std::string body = it->second;
        if (!body.empty() && body.front() == '[') {
            if (body.back() != ']') throw ConfigError(key + ": unterminated list");
            body = body.substr(1, body.size() - 2);
        }
        std::vector<double> out;
        std::stringstream ss(body);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!trim(item).empty()) out.push_back(parse_double(key, trim(item)));
        return out;
    }

    void check_all_used() const {
        for (const auto& [k, v] : values_)
            if (!used_.count(k)) throw ConfigError("unknown config key '" + k + "'");
    }

    /// Canonical `key=value` lines in key order.
    std::string canonical() const {
        std::string s;
        for (const auto& [k, v] : values_) s += k + "=" + v + "\n";
        return s;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

    /// Every key read so far with the value in effect, defaults included.
    const std::map<std::string, std::string>& resolved() const { return resolved_; }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    static std::size_t find_comment(const std::string& line) {
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) return i;
        }
        return std::string::npos;
    }

    static std::string unquote(const std::string& v, const std::string& where) {
        if (!v.empty() && v.front() == '"') {
            if (v.size() < 2 || v.back() != '"') throw ConfigError(where + ": unterminated string");
            return v.substr(1, v.size() - 2);
        }
        return v;
    }

    static double parse_double(const std::string& key, const std::string& text) {
        char* end = nullptr;
        const double v = std::strtod(text.c_str(), &end);
        if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v))
            throw ConfigError(key + ": '" + text + "' is not a finite number");
        return v;
    }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
    mutable std::map<std::string, std::string> resolved_;
};

}  // namespace mabuchi
