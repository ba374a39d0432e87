#include "logboard/sources.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace logboard {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw SourceError("cannot read " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

json parse_json_file(const std::filesystem::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw SourceError(p.string() + ": " + e.what());
    }
}

std::vector<std::vector<std::string>> parse_csv(std::string_view s) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (quoted) {
            if (c == '"' && i + 1 < s.size() && s[i + 1] == '"') {
                field.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < s.size() && s[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field.push_back(c);
            any = true;
        }
    }
    if (quoted) throw SourceError("unterminated quoted CSV field");
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

template <class T>
const T* find_by_id(const std::vector<T>& v, std::string_view id) {
    auto it = std::find_if(v.begin(), v.end(), [&](const T& x) { return x.id == id; });
    return it == v.end() ? nullptr : &*it;
}

}  // namespace

const Table* SourceBundle::find_table(std::string_view id) const { return find_by_id(tables, id); }
const Passage* SourceBundle::find_passage(std::string_view id) const { return find_by_id(passages, id); }
const ImageRecord* SourceBundle::find_image(std::string_view id) const { return find_by_id(images, id); }

void validate(const SourceBundle& sources) {
    auto unique = [](const auto& items, const char* kind) {
        std::set<std::string> seen;
        for (const auto& x : items)
            if (!seen.insert(x.id).second) throw SourceError(std::string("duplicate ") + kind + " id: " + x.id);
    };
    unique(sources.tables, "table");
    unique(sources.passages, "passage");
    unique(sources.images, "image");
    for (const auto& t : sources.tables)
        for (std::size_t r = 0; r < t.rows.size(); ++r)
            if (t.rows[r].size() != t.header.size())
                throw SourceError("table " + t.id + " row " + std::to_string(r) + " has " +
                                  std::to_string(t.rows[r].size()) + " cells, header has " +
                                  std::to_string(t.header.size()));
}

Table table_from_json(const json& j) {
    Table t;
    t.id = j.at("id").get<std::string>();
    t.header = j.at("header").get<std::vector<std::string>>();
    t.rows = j.at("rows").get<std::vector<std::vector<std::string>>>();
    return t;
}

Table table_from_csv(std::string_view csv, std::string id) {
    auto rows = parse_csv(csv);
    if (rows.empty()) throw SourceError("CSV table " + id + " has no header row");
    Table t;
    t.id = std::move(id);
    t.header = std::move(rows.front());
    t.rows.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
    return t;
}

ordered_json to_json(const SourceBundle& s) {
    ordered_json j;
    j["tables"] = ordered_json::array();
    for (const auto& t : s.tables) j["tables"].push_back({{"id", t.id}, {"header", t.header}, {"rows", t.rows}});
    j["passages"] = ordered_json::array();
    for (const auto& p : s.passages) j["passages"].push_back({{"id", p.id}, {"text", p.text}});
    j["images"] = ordered_json::array();
    for (const auto& i : s.images)
        j["images"].push_back({{"id", i.id}, {"caption", i.caption}, {"ocr_text", i.ocr_text}});
    return j;
}

SourceBundle sources_from_json(const json& j) {
    SourceBundle s;
    try {
        if (j.contains("tables"))
            for (const auto& t : j.at("tables")) s.tables.push_back(table_from_json(t));
        if (j.contains("passages"))
            for (const auto& p : j.at("passages"))
                s.passages.push_back({p.at("id").get<std::string>(), p.at("text").get<std::string>()});
        if (j.contains("images"))
            for (const auto& i : j.at("images"))
                s.images.push_back({i.at("id").get<std::string>(), i.value("caption", std::string{}),
                                    i.value("ocr_text", std::string{})});
    } catch (const json::exception& e) {
        throw SourceError(std::string("malformed source bundle: ") + e.what());
    }
    validate(s);
    return s;
}

SourceBundle load_sources(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw SourceError("sources path does not exist: " + path.string());
    if (!fs::is_directory(path)) return sources_from_json(parse_json_file(path));

    SourceBundle s;
    std::vector<fs::path> table_files;
    auto collect = [&](const fs::path& dir) {
        if (!fs::is_directory(dir)) return;
        for (const auto& ent : fs::directory_iterator(dir)) {
            auto ext = ent.path().extension();
            if (ext == ".csv" || (dir != path && ext == ".json")) table_files.push_back(ent.path());
        }
    };
    collect(path);
    collect(path / "tables");
    std::sort(table_files.begin(), table_files.end());
    for (const auto& f : table_files) {
        if (f.extension() == ".csv")
            s.tables.push_back(table_from_csv(read_file(f), f.stem().string()));
        else
            s.tables.push_back(table_from_json(parse_json_file(f)));
    }
    if (fs::exists(path / "passages.json"))
        for (const auto& p : parse_json_file(path / "passages.json"))
            s.passages.push_back({p.at("id").get<std::string>(), p.at("text").get<std::string>()});
    if (fs::exists(path / "images.json"))
        for (const auto& i : parse_json_file(path / "images.json"))
            s.images.push_back({i.at("id").get<std::string>(), i.value("caption", std::string{}),
                                i.value("ocr_text", std::string{})});
    validate(s);
    return s;
}

void save_sources(const std::filesystem::path& path, const SourceBundle& sources) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw SourceError("cannot write " + path.string());
    os << to_json(sources).dump(2) << '\n';
}

}  // namespace logboard
