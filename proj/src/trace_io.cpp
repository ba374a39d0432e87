#include "logboard/trace_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace logboard {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json to_json(const Provenance& p) {
    struct Visitor {
        ordered_json operator()(const TableAnchor& a) const {
            return {{"kind", "table"}, {"id", a.table_id}, {"row", a.row}, {"col", a.col}};
        }
        ordered_json operator()(const DocSpan& d) const {
            return {{"kind", "doc"}, {"id", d.doc_id}, {"start", d.start_char}, {"end", d.end_char}};
        }
        ordered_json operator()(const ImageRef& i) const { return {{"kind", "image"}, {"id", i.image_id}}; }
        ordered_json operator()(const NoProvenance&) const { return {{"kind", "none"}}; }
    };
    return std::visit(Visitor{}, p);
}

Provenance provenance_from_json(const json& j) {
    auto kind = j.at("kind").get<std::string>();
    if (kind == "table")
        return TableAnchor{j.at("id").get<std::string>(), j.at("row").get<std::size_t>(), j.at("col").get<std::size_t>()};
    if (kind == "doc")
        return DocSpan{j.at("id").get<std::string>(), j.at("start").get<std::size_t>(), j.at("end").get<std::size_t>()};
    if (kind == "image") return ImageRef{j.at("id").get<std::string>()};
    if (kind == "none") return NoProvenance{};
    throw std::invalid_argument("unknown provenance kind: " + kind);
}

ordered_json to_json(const LogEntry& e) {
    ordered_json prov = ordered_json::array();
    for (const auto& p : e.meta.provenance) prov.push_back(to_json(p));
    ordered_json j;
    j["agent"] = e.agent;
    j["type"] = std::string(to_string(e.type));
    j["content"] = e.content;
    j["step"] = e.meta.step;
    j["ts_ms"] = e.meta.ts_ms;
    if (e.meta.round >= 0) j["round"] = e.meta.round;
    j["provenance"] = std::move(prov);
    return j;
}

LogEntry entry_from_json(const json& j) {
    LogEntry e;
    e.agent = j.at("agent").get<std::string>();
    auto type = entry_type_from_string(j.at("type").get<std::string>());
    if (!type) throw std::invalid_argument("unknown entry type: " + j.at("type").get<std::string>());
    e.type = *type;
    e.content = j.at("content").get<std::string>();
    e.meta.step = j.at("step").get<std::int64_t>();
    e.meta.ts_ms = j.value("ts_ms", std::int64_t{0});
    e.meta.round = j.value("round", -1);
    if (j.contains("provenance"))
        for (const auto& p : j.at("provenance")) e.meta.provenance.push_back(provenance_from_json(p));
    return e;
}

void write_jsonl(std::ostream& os, const std::vector<LogEntry>& entries) {
    for (const auto& e : entries) os << to_json(e).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
}

std::string to_jsonl(const std::vector<LogEntry>& entries) {
    std::ostringstream os;
    write_jsonl(os, entries);
    return os.str();
}

void write_jsonl(const std::filesystem::path& path, const std::vector<LogEntry>& entries) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    write_jsonl(os, entries);
}

Trace read_jsonl(std::istream& is) {
    Trace t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& err) {
            throw std::invalid_argument("trace line " + std::to_string(lineno) + ": " + err.what());
        }
        if (!j.contains("round")) t.has_rounds = false;
        t.entries.push_back(entry_from_json(j));
    }
    return t;
}

Trace read_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    return read_jsonl(is);
}

std::string render_markdown(const std::vector<LogEntry>& entries) {
    auto cell = [](std::string s) {
        std::string out;
        for (char c : s) {
            if (c == '|')
                out += "\\|";
            else if (c == '\n')
                out += "<br>";
            else
                out.push_back(c);
        }
        return out;
    };
    std::ostringstream os;
    os << "| Agent (Type) | Log Entry Content |\n";
    os << "|---|---|\n";
    for (const auto& e : entries) {
        std::string content = e.content;
        std::string cites;
        for (const auto& p : e.meta.provenance) {
            auto c = citation(p);
            if (c.empty()) continue;
            cites += cites.empty() ? c : "; " + c;
        }
        if (!cites.empty()) content += " {" + cites + "}";
        os << "| " << e.agent << " (" << to_string(e.type) << ") | " << cell(content) << " |\n";
    }
    return os.str();
}

}  // namespace logboard
