#pragma once

// JSONL trace interchange: one entry per line,
//   {"agent","type","content","step","ts_ms","round","provenance":[...]}
// with provenance kinds {"kind":"table","id","row","col"},
// {"kind":"doc","id","start","end"}, {"kind":"image","id"}.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "logboard/log_store.hpp"

namespace logboard {

nlohmann::ordered_json to_json(const Provenance& p);
Provenance provenance_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const LogEntry& e);
LogEntry entry_from_json(const nlohmann::json& j);

std::string to_jsonl(const std::vector<LogEntry>& entries);
void write_jsonl(std::ostream& os, const std::vector<LogEntry>& entries);
void write_jsonl(const std::filesystem::path& path, const std::vector<LogEntry>& entries);

struct Trace {
    std::vector<LogEntry> entries;
    bool has_rounds = true;  // false when any line lacked "round"
};

Trace read_jsonl(std::istream& is);
Trace read_jsonl(const std::filesystem::path& path);

/// Markdown table with "Agent (Type)" and "Log Entry Content" columns.
std::string render_markdown(const std::vector<LogEntry>& entries);

}  // namespace logboard
