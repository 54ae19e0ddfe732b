#pragma once

#include "sbomchain/metrics.hpp"
#include "sbomchain/nvd_store.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace sbomchain {

enum class SourceType { Disclosure, Incident };

std::string_view to_string(SourceType s);

struct ChainRecord {
    std::string chain_id;
    SourceType source_type = SourceType::Disclosure;
    std::vector<std::string> cve_ids;
    std::string reference;
    /// 0 when the line carries no year and none could be derived.
    int year = 0;
};

/// JSON lines with keys chain_id, source_type, cve_ids, reference, year.
/// Blank lines are skipped. Throws Error{MalformedChainFile},
/// Error{DuplicateChainId} or Error{ChainTooShort}.
std::vector<ChainRecord> parse_chains(std::string_view contents);
std::vector<ChainRecord> load_chains(const std::filesystem::path& path);
std::string chains_to_jsonl(const std::vector<ChainRecord>& chains);

/// Chains whose year is 0 get the earliest published_year of their CVEs in `store`.
void fill_chain_years(std::vector<ChainRecord>& chains, const MetaStore& store);

struct CorpusStats {
    std::size_t count = 0;
    std::map<std::string, std::size_t> by_source;
    std::optional<std::size_t> min_length;
    std::optional<std::size_t> max_length;
    std::optional<double> median_length;
    /// Rounded to two decimals.
    std::optional<double> mean_length;
};

CorpusStats corpus_stats(const std::vector<ChainRecord>& chains);
std::string corpus_stats_to_json(const CorpusStats& stats);

struct PairExample {
    std::string cve_a;
    std::string cve_b;
    int label = 0;
    std::string origin;

    bool operator==(const PairExample&) const = default;
};

inline constexpr std::string_view kSampledOrigin = "sampled";

/// Orders the two ids so that a < b.
std::pair<std::string, std::string> canonical_pair(const std::string& x, const std::string& y);

/// Within-chain pairs, canonical and deduplicated; a pair keeps the first chain as origin.
std::vector<PairExample> positive_pairs(const std::vector<ChainRecord>& chains);

/// Uniform sample without replacement of round(ratio * |positives|) pairs over
/// the corpus CVE universe that are not positives. Throws
/// Error{InsufficientNegativeSpace} or Error{InvalidArgument} for ratio <= 0.
std::vector<PairExample> sample_negatives(const std::vector<ChainRecord>& chains, double ratio, std::uint64_t seed);
/// Same over an explicit universe; `positives` are excluded from the candidates.
std::vector<PairExample> sample_negatives(const std::vector<PairExample>& positives, const std::set<std::string>& universe,
                                          double ratio, std::uint64_t seed);

enum class SplitStrategy { Pair, Chain, Temporal };

std::string_view to_string(SplitStrategy s);
/// Throws Error{UnknownStrategy}.
SplitStrategy parse_split_strategy(std::string_view name);

struct PairSplit {
    std::vector<PairExample> train;
    std::vector<PairExample> val;
    std::vector<PairExample> test;
};

/// PAIR shuffles examples and cuts. CHAIN assigns whole chains to folds;
/// positives follow their origin chain and negatives the chain of their
/// smaller member (train when it belongs to none). TEMPORAL orders chains by
/// year so the earliest go to train. Throws Error{DegenerateSplit} when a
/// fold with a non-zero fraction is empty.
PairSplit split_pairs(const std::vector<PairExample>& examples, const std::vector<ChainRecord>& chains,
                      SplitStrategy strategy, const SplitFractions& fractions, std::uint64_t seed);

/// CSV `cve_a,cve_b,label,origin`.
std::string pairs_to_csv(const std::vector<PairExample>& examples);
/// Throws Error{MalformedList}.
std::vector<PairExample> parse_pairs_csv(std::string_view contents);

} // namespace sbomchain
