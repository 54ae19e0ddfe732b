#pragma once

#include "sbomchain/error.hpp"

#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

namespace testsupport {

inline std::filesystem::path fixtures() { return SBOMCHAIN_FIXTURES; }

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("sbomchain-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Minimal CycloneDX 1.5 document builder for hand-made fixtures.
struct Bom {
    nlohmann::json doc = {{"bomFormat", "CycloneDX"},
                          {"specVersion", "1.5"},
                          {"components", nlohmann::json::array()},
                          {"dependencies", nlohmann::json::array()},
                          {"vulnerabilities", nlohmann::json::array()}};

    Bom& component(const std::string& ref, std::vector<std::string> licenses = {}) {
        nlohmann::json c = {{"bom-ref", ref}, {"name", ref}, {"version", "1.0"}};
        if (!licenses.empty()) {
            c["licenses"] = nlohmann::json::array();
            for (const auto& l : licenses) c["licenses"].push_back({{"license", {{"id", l}}}});
        }
        doc["components"].push_back(c);
        return *this;
    }
    Bom& depends(const std::string& from, std::vector<std::string> to) {
        doc["dependencies"].push_back({{"ref", from}, {"dependsOn", to}});
        return *this;
    }
    Bom& vuln(const std::string& id, std::vector<std::string> affects, std::vector<int> cwes = {}) {
        nlohmann::json v = {{"id", id}, {"affects", nlohmann::json::array()}};
        for (const auto& a : affects) v["affects"].push_back({{"ref", a}});
        if (!cwes.empty()) v["cwes"] = cwes;
        doc["vulnerabilities"].push_back(v);
        return *this;
    }
    std::string str() const { return doc.dump(); }
};

template <typename F>
sbomchain::ErrorKind error_kind_of(F&& f) {
    try {
        std::forward<F>(f)();
    } catch (const sbomchain::Error& e) {
        return e.kind();
    }
    throw std::runtime_error("expected an sbomchain::Error");
}

} // namespace testsupport
