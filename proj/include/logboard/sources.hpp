#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace logboard {

struct Table {
    std::string id;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

struct Passage {
    std::string id;
    std::string text;
};

/// Caption and OCR text are produced upstream; this runtime never sees pixels.
struct ImageRecord {
    std::string id;
    std::string caption;
    std::string ocr_text;
};

struct SourceBundle {
    std::vector<Table> tables;
    std::vector<Passage> passages;
    std::vector<ImageRecord> images;

    const Table* find_table(std::string_view id) const;
    const Passage* find_passage(std::string_view id) const;
    const ImageRecord* find_image(std::string_view id) const;
};

class SourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unique ids per kind; every row as long as the header.
void validate(const SourceBundle& sources);

nlohmann::ordered_json to_json(const SourceBundle& sources);
SourceBundle sources_from_json(const nlohmann::json& j);

Table table_from_json(const nlohmann::json& j);
/// CSV with a header row; the table id defaults to the file stem.
Table table_from_csv(std::string_view csv, std::string id);

/// Accepts a bundle JSON file ({"tables","passages","images"}) or a directory
/// holding tables/*.json|*.csv (or top-level *.csv), passages.json and
/// images.json.
SourceBundle load_sources(const std::filesystem::path& path);
void save_sources(const std::filesystem::path& path, const SourceBundle& sources);

}  // namespace logboard
