#include "sbomchain/chain_corpus.hpp"

#include "sbomchain/error.hpp"
#include "sbomchain/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace sbomchain {

using nlohmann::json;

std::string_view to_string(SourceType s) { return s == SourceType::Disclosure ? "DISCLOSURE" : "INCIDENT"; }

namespace {

SourceType parse_source_type(const std::string& s, std::size_t line) {
    std::string up = s;
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
    if (up == "DISCLOSURE") return SourceType::Disclosure;
    if (up == "INCIDENT") return SourceType::Incident;
    throw Error(ErrorKind::MalformedChainFile, "line " + std::to_string(line) + ": unknown source_type '" + s + "'");
}

} // namespace

std::vector<ChainRecord> parse_chains(std::string_view contents) {
    std::vector<ChainRecord> out;
    std::set<std::string> seen;
    std::istringstream in{std::string(contents)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto where = "line " + std::to_string(lineno) + ": ";
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::MalformedChainFile, where + e.what());
        }
        ChainRecord rec;
        try {
            rec.chain_id = j.at("chain_id").get<std::string>();
            rec.source_type = parse_source_type(j.at("source_type").get<std::string>(), lineno);
            for (const auto& raw : j.at("cve_ids")) {
                auto id = normalize_cve_id(raw.get<std::string>());
                if (!id) throw Error(ErrorKind::MalformedChainFile, where + "bad CVE id " + raw.dump());
                rec.cve_ids.push_back(*id);
            }
            rec.reference = j.value("reference", std::string());
            if (j.contains("year") && !j["year"].is_null()) rec.year = j["year"].get<int>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::MalformedChainFile, where + e.what());
        }
        if (rec.chain_id.empty()) throw Error(ErrorKind::MalformedChainFile, where + "empty chain_id");
        if (std::set<std::string>(rec.cve_ids.begin(), rec.cve_ids.end()).size() != rec.cve_ids.size()) {
            throw Error(ErrorKind::MalformedChainFile, where + "repeated CVE in chain " + rec.chain_id);
        }
        if (rec.cve_ids.size() < 2) {
            throw Error(ErrorKind::ChainTooShort, where + "chain " + rec.chain_id + " has " +
                                                      std::to_string(rec.cve_ids.size()) + " CVE(s)");
        }
        if (!seen.insert(rec.chain_id).second) throw Error(ErrorKind::DuplicateChainId, where + rec.chain_id);
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<ChainRecord> load_chains(const std::filesystem::path& path) { return parse_chains(read_file(path)); }

std::string chains_to_jsonl(const std::vector<ChainRecord>& chains) {
    std::string out;
    for (const auto& c : chains) {
        json j = {{"chain_id", c.chain_id},
                  {"source_type", std::string(to_string(c.source_type))},
                  {"cve_ids", c.cve_ids},
                  {"reference", c.reference},
                  {"year", c.year}};
        out += j.dump() + "\n";
    }
    return out;
}

void fill_chain_years(std::vector<ChainRecord>& chains, const MetaStore& store) {
    for (auto& c : chains) {
        if (c.year != 0) continue;
        for (const auto& id : c.cve_ids) {
            const auto meta = store.lookup(id);
            if (meta && meta->published_year > 0 && (c.year == 0 || meta->published_year < c.year)) {
                c.year = meta->published_year;
            }
        }
    }
}

CorpusStats corpus_stats(const std::vector<ChainRecord>& chains) {
    CorpusStats s;
    s.count = chains.size();
    for (const auto& c : chains) ++s.by_source[std::string(to_string(c.source_type))];
    if (chains.empty()) return s;
    std::vector<std::size_t> lengths;
    for (const auto& c : chains) lengths.push_back(c.cve_ids.size());
    std::sort(lengths.begin(), lengths.end());
    s.min_length = lengths.front();
    s.max_length = lengths.back();
    const std::size_t n = lengths.size();
    s.median_length = n % 2 ? static_cast<double>(lengths[n / 2])
                            : (static_cast<double>(lengths[n / 2 - 1]) + static_cast<double>(lengths[n / 2])) / 2.0;
    const std::size_t total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
    // integer rounding of total*100/n avoids binary representation drift
    const std::size_t hundredths = (total * 200 + n) / (2 * n);
    s.mean_length = static_cast<double>(hundredths) / 100.0;
    return s;
}

std::string corpus_stats_to_json(const CorpusStats& s) {
    auto opt = [](const auto& v) { return v ? json(*v) : json(nullptr); };
    json j = {{"count", s.count},
              {"by_source", s.by_source},
              {"length_min", opt(s.min_length)},
              {"length_max", opt(s.max_length)},
              {"length_median", opt(s.median_length)},
              {"length_mean", opt(s.mean_length)}};
    return j.dump(2);
}

std::pair<std::string, std::string> canonical_pair(const std::string& x, const std::string& y) {
    return x < y ? std::pair{x, y} : std::pair{y, x};
}

std::vector<PairExample> positive_pairs(const std::vector<ChainRecord>& chains) {
    std::vector<PairExample> out;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& c : chains) {
        for (std::size_t i = 0; i < c.cve_ids.size(); ++i) {
            for (std::size_t j = i + 1; j < c.cve_ids.size(); ++j) {
                auto p = canonical_pair(c.cve_ids[i], c.cve_ids[j]);
                if (!seen.insert(p).second) continue;
                out.push_back({p.first, p.second, 1, c.chain_id});
            }
        }
    }
    return out;
}

std::vector<PairExample> sample_negatives(const std::vector<ChainRecord>& chains, double ratio, std::uint64_t seed) {
    std::set<std::string> universe;
    for (const auto& c : chains) universe.insert(c.cve_ids.begin(), c.cve_ids.end());
    return sample_negatives(positive_pairs(chains), universe, ratio, seed);
}

std::vector<PairExample> sample_negatives(const std::vector<PairExample>& positive, const std::set<std::string>& universe_set,
                                          double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0) || !std::isfinite(ratio)) throw Error(ErrorKind::InvalidArgument, "negative ratio must be > 0");
    const std::vector<std::string> universe(universe_set.begin(), universe_set.end());
    std::set<std::pair<std::string, std::string>> positives;
    for (const auto& p : positive) positives.insert(canonical_pair(p.cve_a, p.cve_b));

    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    for (std::size_t i = 0; i < universe.size(); ++i) {
        for (std::size_t j = i + 1; j < universe.size(); ++j) {
            if (!positives.contains({universe[i], universe[j]})) candidates.emplace_back(i, j);
        }
    }
    const auto wanted = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(positives.size())));
    if (wanted > candidates.size()) {
        throw Error(ErrorKind::InsufficientNegativeSpace, "need " + std::to_string(wanted) + " negatives but only " +
                                                              std::to_string(candidates.size()) + " candidate pairs");
    }
    Rng rng(seed);
    rng.shuffle(candidates);
    candidates.resize(wanted);
    std::sort(candidates.begin(), candidates.end());
    std::vector<PairExample> out;
    for (const auto& [i, j] : candidates) out.push_back({universe[i], universe[j], 0, std::string(kSampledOrigin)});
    return out;
}

std::string_view to_string(SplitStrategy s) {
    switch (s) {
    case SplitStrategy::Pair: return "PAIR";
    case SplitStrategy::Chain: return "CHAIN";
    case SplitStrategy::Temporal: return "TEMPORAL";
    }
    return "PAIR";
}

SplitStrategy parse_split_strategy(std::string_view name) {
    std::string up(name);
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
    if (up == "PAIR") return SplitStrategy::Pair;
    if (up == "CHAIN") return SplitStrategy::Chain;
    if (up == "TEMPORAL") return SplitStrategy::Temporal;
    throw Error(ErrorKind::UnknownStrategy, "unknown split strategy '" + std::string(name) + "'");
}

namespace {

bool canonical_less(const PairExample& x, const PairExample& y) {
    return std::tie(x.cve_a, x.cve_b) < std::tie(y.cve_a, y.cve_b);
}

void check_folds(const PairSplit& s, const SplitFractions& f) {
    if ((f.train > 0 && s.train.empty()) || (f.val > 0 && s.val.empty()) || (f.test > 0 && s.test.empty())) {
        throw Error(ErrorKind::DegenerateSplit, "a fold is empty (train " + std::to_string(s.train.size()) + ", val " +
                                                    std::to_string(s.val.size()) + ", test " +
                                                    std::to_string(s.test.size()) + ")");
    }
}

} // namespace

PairSplit split_pairs(const std::vector<PairExample>& examples, const std::vector<ChainRecord>& chains,
                      SplitStrategy strategy, const SplitFractions& fractions, std::uint64_t seed) {
    PairSplit split;
    if (strategy == SplitStrategy::Pair) {
        std::vector<PairExample> sorted = examples;
        std::sort(sorted.begin(), sorted.end(), canonical_less);
        Rng rng(seed);
        rng.shuffle(sorted);
        const auto sizes = split_sizes(sorted.size(), fractions);
        const auto b1 = sorted.begin() + static_cast<std::ptrdiff_t>(sizes[0]);
        const auto b2 = b1 + static_cast<std::ptrdiff_t>(sizes[1]);
        split.train.assign(sorted.begin(), b1);
        split.val.assign(b1, b2);
        split.test.assign(b2, sorted.end());
        check_folds(split, fractions);
        return split;
    }

    std::vector<ChainRecord> ordered = chains;
    std::sort(ordered.begin(), ordered.end(),
              [](const ChainRecord& x, const ChainRecord& y) { return x.chain_id < y.chain_id; });
    if (strategy == SplitStrategy::Chain) {
        Rng rng(seed);
        rng.shuffle(ordered);
    } else {
        std::stable_sort(ordered.begin(), ordered.end(),
                         [](const ChainRecord& x, const ChainRecord& y) { return x.year < y.year; });
    }
    const auto sizes = split_sizes(ordered.size(), fractions);
    std::map<std::string, int> chain_fold;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        chain_fold[ordered[i].chain_id] = i < sizes[0] ? 0 : (i < sizes[0] + sizes[1] ? 1 : 2);
    }
    // a CVE in several chains follows the first one in corpus order
    std::map<std::string, int> cve_fold;
    for (const auto& c : chains) {
        for (const auto& id : c.cve_ids) cve_fold.emplace(id, chain_fold.at(c.chain_id));
    }
    std::array<std::vector<PairExample>*, 3> folds{&split.train, &split.val, &split.test};
    for (const auto& e : examples) {
        int fold = 0;
        if (e.label == 1) {
            if (auto it = chain_fold.find(e.origin); it != chain_fold.end()) fold = it->second;
        } else if (auto it = cve_fold.find(e.cve_a); it != cve_fold.end()) {
            fold = it->second;
        }
        folds[static_cast<std::size_t>(fold)]->push_back(e);
    }
    check_folds(split, fractions);
    return split;
}

std::string pairs_to_csv(const std::vector<PairExample>& examples) {
    std::string out = "cve_a,cve_b,label,origin\n";
    for (const auto& e : examples) {
        out += e.cve_a + "," + e.cve_b + "," + std::to_string(e.label) + "," + e.origin + "\n";
    }
    return out;
}

std::vector<PairExample> parse_pairs_csv(std::string_view contents) {
    std::istringstream in{std::string(contents)};
    std::string line;
    std::vector<PairExample> out;
    bool header = true;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line != "cve_a,cve_b,label,origin") throw Error(ErrorKind::MalformedList, "unexpected pairs header");
            continue;
        }
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (fields.size() != 4 || (fields[2] != "0" && fields[2] != "1")) {
            throw Error(ErrorKind::MalformedList, "pairs line " + std::to_string(lineno));
        }
        auto a = normalize_cve_id(fields[0]);
        auto b = normalize_cve_id(fields[1]);
        if (!a || !b) throw Error(ErrorKind::MalformedList, "pairs line " + std::to_string(lineno) + ": bad id");
        auto p = canonical_pair(*a, *b);
        out.push_back({p.first, p.second, fields[2] == "1" ? 1 : 0, fields[3]});
    }
    return out;
}

} // namespace sbomchain
