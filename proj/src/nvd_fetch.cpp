#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "sbomchain/error.hpp"
#include "sbomchain/nvd_store.hpp"
#include "sbomchain/util.hpp"

#include <json.hpp>

#include <cstdlib>
#include <thread>

namespace sbomchain {

using nlohmann::json;

NvdClientConfig NvdClientConfig::from_environment() {
    NvdClientConfig config;
    if (const char* key = std::getenv("NVD_API_KEY"); key && *key) {
        config.api_key = key;
        config.request_interval = std::chrono::milliseconds(600);
    }
    return config;
}

namespace {

struct PageResult {
    std::vector<CveMeta> records;
    long total = 0;
    long per_page = 0;
};

class NvdClient {
public:
    explicit NvdClient(const NvdClientConfig& config) : config_(config), client_(config.base_url) {
        client_.set_connection_timeout(30);
        client_.set_read_timeout(60);
        if (!config_.sleep) {
            config_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
        }
    }

    PageResult get_page(const httplib::Params& params) {
        pace();
        httplib::Headers headers;
        if (config_.api_key) headers.emplace("apiKey", *config_.api_key);

        std::string last_error;
        std::string retry_after;
        bool rate_limited = false;
        for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
            if (attempt > 0) config_.sleep(config_.backoff_base * (1 << (attempt - 1)));
            ++requests_;
            auto res = client_.Get(config_.path, params, headers);
            last_request_ = std::chrono::steady_clock::now();
            if (!res) {
                last_error = httplib::to_string(res.error());
                continue;
            }
            if (res->status == 403 || res->status == 429) {
                rate_limited = true;
                retry_after = res->get_header_value("Retry-After");
                continue;
            }
            if (res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) {
                throw Error(ErrorKind::NetworkError, "HTTP " + std::to_string(res->status));
            }
            return parse(res->body);
        }
        if (rate_limited) {
            throw Error(ErrorKind::RateLimited,
                        "server kept refusing requests" +
                            (retry_after.empty() ? std::string() : "; retry-after " + retry_after));
        }
        throw Error(ErrorKind::NetworkError, last_error.empty() ? "request failed" : last_error);
    }

    std::size_t requests() const { return requests_; }

private:
    void pace() {
        if (requests_ == 0) return;
        auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - last_request_);
        if (elapsed < config_.request_interval) config_.sleep(config_.request_interval - elapsed);
    }

    static PageResult parse(const std::string& body) {
        PageResult page;
        json doc;
        try {
            doc = json::parse(body);
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::NetworkError, std::string("unparseable response: ") + e.what());
        }
        page.total = doc.value("totalResults", 0L);
        page.per_page = doc.value("resultsPerPage", 0L);
        if (doc.contains("vulnerabilities")) {
            json wrapped = {{"vulnerabilities", doc["vulnerabilities"]}};
            const MetaStore parsed = load_snapshot_bytes({wrapped.dump()});
            for (const auto& [id, meta] : parsed.records()) {
                page.records.push_back(meta);
            }
        }
        return page;
    }

    NvdClientConfig config_;
    httplib::Client client_;
    std::size_t requests_ = 0;
    std::chrono::steady_clock::time_point last_request_{};
};

} // namespace

FetchStats fetch_live(const std::vector<std::string>& cve_ids, const NvdClientConfig& config,
                      const std::filesystem::path& out) {
    std::vector<std::string> ids;
    for (const auto& raw : cve_ids) {
        auto id = normalize_cve_id(raw);
        if (!id) throw Error(ErrorKind::InvalidArgument, "not a CVE id: " + raw);
        if (std::find(ids.begin(), ids.end(), *id) == ids.end()) ids.push_back(*id);
    }

    std::map<std::string, CveMeta> collected;
    FetchStats stats;
    if (!ids.empty()) {
        NvdClient client(config);
        auto fetch_all_pages = [&](httplib::Params base) {
            long start = 0;
            while (true) {
                httplib::Params params = base;
                params.emplace("startIndex", std::to_string(start));
                params.emplace("resultsPerPage", std::to_string(config.results_per_page));
                PageResult page = client.get_page(params);
                for (auto& r : page.records) collected[r.cve_id] = std::move(r);
                const long step = page.per_page > 0 ? page.per_page : config.results_per_page;
                start += step;
                if (page.records.empty() || start >= page.total) break;
            }
        };
        if (config.batch_param) {
            std::string joined;
            for (const auto& id : ids) joined += (joined.empty() ? "" : ",") + id;
            fetch_all_pages({{*config.batch_param, joined}});
        } else {
            for (const auto& id : ids) fetch_all_pages({{"cveId", id}});
        }
        stats.requests = client.requests();
    }

    std::vector<CveMeta> records;
    for (const auto& id : ids) {
        if (auto it = collected.find(id); it != collected.end()) records.push_back(it->second);
    }
    stats.records = records.size();
    write_file(out, write_snapshot(records));
    return stats;
}

} // namespace sbomchain
