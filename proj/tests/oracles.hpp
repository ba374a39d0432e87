#pragma once

// Independent reference computations shared by unit and acceptance tests.
// Nothing here calls into the library under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    for (std::string w; is >> w;) out.push_back(w);
    return out;
}

/// Direct-formula BM25 over whitespace-separated, already-lowercase documents.
/// Enumerates every document; no index.
inline std::vector<std::pair<std::string, double>> bm25_rank(const std::vector<std::pair<std::string, std::string>>& docs,
                                                             const std::string& query, double k1 = 1.2,
                                                             double b = 0.75) {
    std::vector<std::vector<std::string>> toks;
    double total = 0;
    for (const auto& d : docs) {
        toks.push_back(split_ws(d.second));
        total += static_cast<double>(toks.back().size());
    }
    const double n = static_cast<double>(docs.size());
    const double avgdl = docs.empty() ? 0 : total / n;
    auto qv = split_ws(query);
    std::set<std::string> q(qv.begin(), qv.end());
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        double score = 0;
        for (const auto& term : q) {
            double df = 0;
            for (const auto& t : toks) df += std::count(t.begin(), t.end(), term) > 0;
            if (df == 0) continue;
            double tf = static_cast<double>(std::count(toks[d].begin(), toks[d].end(), term));
            double idf = std::log(1 + (n - df + 0.5) / (df + 0.5));
            double len = static_cast<double>(toks[d].size());
            score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avgdl));
        }
        if (score > 0) out.emplace_back(docs[d].first, score);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& c) {
        if (std::abs(a.second - c.second) > 1e-12) return a.second > c.second;
        return a.first < c.first;
    });
    return out;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::mt19937_64 rng(std::random_device{}());
        path_ = std::filesystem::temp_directory_path() / ("logboard-" + tag + "-" + std::to_string(rng()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

inline void spit(const std::filesystem::path& p, const std::string& s) {
    std::ofstream os(p, std::ios::binary);
    os << s;
}

}  // namespace oracle
