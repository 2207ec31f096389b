#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "svlr/error.hpp"

namespace svlr {

// Flat key=value configuration file. '#' starts a comment. Readers must
// consume every key; leftovers are reported so typos fail loudly.
class KvFile {
public:
    static KvFile load(const std::filesystem::path& file);
    static KvFile from_string(const std::string& text, const std::string& name = "<string>");

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& fallback);
    double get_double(const std::string& key, double fallback);
    std::size_t get_size(const std::string& key, std::size_t fallback);
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);

    // Keys present in the file but never read by any getter.
    std::vector<std::string> unconsumed() const;

    // Raises ContractError when unconsumed keys remain.
    void require_fully_consumed() const;

    const std::string& name() const { return name_; }

private:
    std::string name_;
    std::map<std::string, std::string> values_;
    std::map<std::string, bool> consumed_;
};

}  // namespace svlr
