#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sdfc/errors.hpp"

extern "C" char** environ;

namespace sdfc {

/* Flat dotted-key config: one `section.key = value` per line, `#` comments.
 * Environment variables SDFC_<SECTION>_<KEY> (uppercased, first underscore
 * standing in for the dot) override file values. Every key must be consumed
 * by a typed getter; leftovers are reported as unknown keys. */
class Config {
  public:
    Config() = default;

    static Config from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open config file " + path);
        Config cfg;
        std::string line;
        std::uint64_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string stripped = trim(line.substr(0, line.find('#')));
            if (stripped.empty()) continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw ParseError(path + ": expected `key = value`", lineno);
            const std::string key = trim(stripped.substr(0, eq));
            const std::string val = trim(stripped.substr(eq + 1));
            if (key.empty() || key.find('.') == std::string::npos)
                throw ParseError(path + ": keys must look like section.name", lineno);
            cfg.values_[key] = val;
        }
        cfg.apply_env_overrides();
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        consumed_.insert(key);
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require_string(const std::string& key) {
        consumed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing required config key " + key);
        return it->second;
    }

    double get_double(const std::string& key, double fallback) {
        consumed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t pos;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError(key + ": `" + it->second + "` is not a number");
        }
    }

    long get_long(const std::string& key, long fallback) {
        consumed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t pos;
            const long v = std::stol(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError(key + ": `" + it->second + "` is not an integer");
        }
    }

    bool get_bool(const std::string& key, bool fallback) {
        consumed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigError(key + ": `" + it->second + "` is not a boolean");
    }

    /* layer sizes written as 30-50-50-5 */
    std::vector<int> get_sizes(const std::string& key, const std::vector<int>& fallback) {
        consumed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<int> sizes;
        std::string tok;
        for (char c : it->second + "-") {
            if (c == '-') {
                if (tok.empty()) throw ConfigError(key + ": malformed size list");
                sizes.push_back(std::stoi(tok));
                if (sizes.back() <= 0) throw ConfigError(key + ": sizes must be positive");
                tok.clear();
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                tok += c;
            } else {
                throw ConfigError(key + ": malformed size list");
            }
        }
        if (sizes.size() < 2) throw ConfigError(key + ": need at least two layer sizes");
        return sizes;
    }

    /* Call after all getters: any key never consumed is a typo. */
    void reject_unknown_keys() const {
        for (const auto& [key, value] : values_)
            if (!consumed_.count(key)) throw ConfigError("unknown config key " + key);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    /* SDFC_RUN_EPOCHS=3 overrides run.epochs: the prefix is stripped, the
     * first underscore becomes the section dot, the rest is lowercased. */
    void apply_env_overrides() {
        for (char** env = environ; *env; ++env) {
            const std::string entry(*env);
            if (entry.rfind("SDFC_", 0) != 0) continue;
            const auto eq = entry.find('=');
            if (eq == std::string::npos) continue;
            std::string name = entry.substr(5, eq - 5);
            const auto us = name.find('_');
            if (us == std::string::npos) continue;
            std::string key;
            for (size_t i = 0; i < name.size(); ++i) {
                const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(name[i])));
                key += (i == us) ? '.' : c;
            }
            values_[key] = entry.substr(eq + 1);
        }
    }

  private:
    static std::string trim(const std::string& s) {
        size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

}  // namespace sdfc
