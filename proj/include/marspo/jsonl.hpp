#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "marspo/records.hpp"

namespace marspo {

// Reads one record per line. Malformed lines raise with the 1-based line
// number; absent optionals round-trip as absent.
template <class T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<T> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            T rec;
            from_json_line(j, rec);
            out.push_back(std::move(rec));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + " line " + std::to_string(lineno) +
                                     ": malformed record: " + e.what());
        }
    }
    return out;
}

// Canonical write: one dump per line, '\n' separators, no trailing junk.
// Re-reading reproduces the input exactly; equal inputs give byte-equal files.
template <class T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& r : records) {
        out << to_json_line(r).dump() << '\n';
        if (!out) throw std::runtime_error("write failed for " + path.string());
    }
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

// Prompt datasets additionally enforce unique ids.
std::vector<PromptRecord> read_dataset(const std::filesystem::path& path);

}  // namespace marspo
