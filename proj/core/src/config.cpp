#include "svlr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace svlr {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

KvFile KvFile::load(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open config file " + file.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str(), file.string());
}

KvFile KvFile::from_string(const std::string& text, const std::string& name) {
    KvFile kv;
    kv.name_ = name;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(name + ":" + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ParseError(name + ":" + std::to_string(lineno) + ": empty key");
        }
        if (kv.values_.count(key)) {
            throw ParseError(name + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
        kv.values_[key] = value;
        kv.consumed_[key] = false;
    }
    return kv;
}

std::string KvFile::get_str(const std::string& key, const std::string& fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    consumed_[key] = true;
    return it->second;
}

double KvFile::get_double(const std::string& key, double fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    consumed_[key] = true;
    char* end = nullptr;
    const double v = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str() || *end != '\0') {
        throw ParseError(name_ + ": key '" + key + "' has non-numeric value '" + it->second + "'");
    }
    return v;
}

std::size_t KvFile::get_size(const std::string& key, std::size_t fallback) {
    return static_cast<std::size_t>(get_u64(key, fallback));
}

std::uint64_t KvFile::get_u64(const std::string& key, std::uint64_t fallback) {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    consumed_[key] = true;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
    if (end == it->second.c_str() || *end != '\0') {
        throw ParseError(name_ + ": key '" + key + "' has non-integer value '" + it->second + "'");
    }
    return v;
}

std::vector<std::string> KvFile::unconsumed() const {
    std::vector<std::string> out;
    for (const auto& [key, used] : consumed_) {
        if (!used) out.push_back(key);
    }
    return out;
}

void KvFile::require_fully_consumed() const {
    const auto leftover = unconsumed();
    if (leftover.empty()) return;
    std::string msg = name_ + ": unknown config key(s):";
    for (const auto& k : leftover) msg += " " + k;
    throw ContractError(msg);
}

}  // namespace svlr
