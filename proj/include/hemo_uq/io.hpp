#pragma once

/**
 * @file io.hpp
 * @brief Result persistence: round-trip number formatting, CSV tables,
 * atomic file replacement and the append-only run manifest.
 */

#include <charconv>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hemo_uq/errors.hpp"

namespace hemo_uq {

inline constexpr const char* kToolVersion = "0.1.0";

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

/// Current UTC time as 2026-01-31T12:00:00Z.
inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/**
 * Writes `content` to a sibling temporary file and renames it over `path`,
 * so readers never observe a partially written result.
 */
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write file '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

/// Minimal CSV builder; fields are numbers or plain identifiers.
class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& header) : columns_(header.size()) {
        row(header);
    }

    void row(const std::vector<std::string>& fields) {
        detail::require(fields.size() == columns_, "CSV row has the wrong number of fields");
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }

    void numeric_row(const std::vector<double>& values) {
        std::vector<std::string> f;
        f.reserve(values.size());
        for (double v : values) f.push_back(format_double(v));
        row(f);
    }

    [[nodiscard]] std::string str() const { return out_.str(); }
    void save(const std::filesystem::path& path) const { write_file_atomic(path, str()); }

private:
    std::size_t columns_;
    std::ostringstream out_;
};

/// Splits simple comma-separated text (no quoting) into rows of fields.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (line.back() == ',') fields.emplace_back();
        rows.push_back(std::move(fields));
    }
    return rows;
}

/**
 * Append-only audit trail, one JSON object per line. Existing lines are
 * never rewritten; each run adds a start event (with the full resolved
 * configuration), stage events and a finish event.
 */
class RunManifest {
public:
    RunManifest(std::filesystem::path path, std::string command, std::uint64_t seed,
                nlohmann::json resolved_config)
        : path_(std::move(path)),
          command_(std::move(command)),
          seed_(seed),
          config_(std::move(resolved_config)),
          hash_(hex64(fnv1a(config_.dump()))) {}

    [[nodiscard]] const std::string& config_hash() const { return hash_; }
    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

    void start(unsigned workers) {
        nlohmann::json e = base("start");
        e["workers"] = workers;
        e["config"] = config_;
        append(e);
    }

    void stage(const std::string& name, std::size_t evaluations, std::size_t failures,
               nlohmann::json extra = nlohmann::json::object()) {
        nlohmann::json e = base("stage");
        e["stage"] = name;
        e["evaluations"] = evaluations;
        e["failures"] = failures;
        for (auto& [k, v] : extra.items()) e[k] = v;
        append(e);
    }

    void finish(int exit_code, const std::string& message = "") {
        nlohmann::json e = base("finish");
        e["exit_code"] = exit_code;
        if (!message.empty()) e["message"] = message;
        append(e);
    }

    /// All events recorded so far, oldest first.
    static std::vector<nlohmann::json> read(const std::filesystem::path& path) {
        std::vector<nlohmann::json> events;
        std::istringstream in(read_text_file(path));
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) events.push_back(nlohmann::json::parse(line));
        }
        return events;
    }

private:
    nlohmann::json base(const char* event) const {
        return {{"event", event},          {"timestamp", utc_timestamp()}, {"tool", "hemo-uq"},
                {"version", kToolVersion}, {"command", command_},          {"seed", seed_},
                {"config_hash", hash_}};
    }

    void append(const nlohmann::json& e) const {
        std::error_code ec;
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path(), ec);
        std::ofstream out(path_, std::ios::app | std::ios::binary);
        if (!out) throw IoError("cannot append to manifest '" + path_.string() + "'");
        out << e.dump() << '\n';
        if (!out) throw IoError("write failed for manifest '" + path_.string() + "'");
    }

    std::filesystem::path path_;
    std::string command_;
    std::uint64_t seed_;
    nlohmann::json config_;
    std::string hash_;
};

}  // namespace hemo_uq
