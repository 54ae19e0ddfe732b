#include "sbomchain/util.hpp"

#include "sbomchain/error.hpp"

#include <openssl/evp.h>

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sbomchain {

namespace {

bool all_digits(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

} // namespace

std::optional<std::string> normalize_cve_id(std::string_view raw) {
    std::string id = trim(raw);
    if (id.size() < 4) return std::nullopt;
    for (std::size_t i = 0; i < 3; ++i) {
        id[i] = static_cast<char>(std::toupper(static_cast<unsigned char>(id[i])));
    }
    if (!is_cve_id(id)) return std::nullopt;
    return id;
}

bool is_cve_id(std::string_view id) {
    if (id.size() < 13 || id.substr(0, 4) != "CVE-") return false;
    if (!all_digits(id.substr(4, 4)) || id[8] != '-') return false;
    auto tail = id.substr(9);
    return tail.size() >= 4 && all_digits(tail);
}

std::optional<std::string> normalize_cwe_id(std::string_view raw) {
    std::string id = trim(raw);
    if (id.size() < 5) return std::nullopt;
    for (std::size_t i = 0; i < 3; ++i) {
        id[i] = static_cast<char>(std::toupper(static_cast<unsigned char>(id[i])));
    }
    if (id.substr(0, 4) != "CWE-" || !all_digits(std::string_view(id).substr(4))) {
        return std::nullopt;
    }
    return id;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorKind::Io, "sha256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

std::string format_double(double value) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) return std::to_string(value);
    return std::string(buf.data(), ptr);
}

std::string format_fixed(double value, int digits) {
    std::array<char, 64> buf{};
    std::snprintf(buf.data(), buf.size(), "%.*f", digits, value);
    return buf.data();
}

std::size_t Rng::below(std::size_t n) {
    if (n <= 1) return 0;
    // rejection sampling keeps the draw unbiased
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
}

} // namespace sbomchain
