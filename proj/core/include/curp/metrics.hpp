#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "curp/types.hpp"

namespace curp {

struct UsageStats {
    std::vector<std::uint64_t> counts; // n_k over all L slots of all codes
    std::vector<double> freqs;         // p_k
    double coverage = 0.0;             // |{k: n_k > 0}| / K
    double norm_entropy = 0.0;         // entropy in nats / ln K
    std::uint64_t distinct_codes = 0;  // distinct L-tuples
    double combination_ratio = 0.0;    // distinct tuples / number of codes
};

UsageStats usage_stats(const std::vector<PQCode>& codes, const CodebookSpec& spec);

// Mean cosine similarity over all unordered row pairs.
double mean_pairwise_cosine(const Matrix& rows);

struct SubspaceGroupTable {
    std::string group;
    // per subspace: index -> count
    std::vector<std::map<std::uint32_t, std::uint64_t>> histograms;
    // subspaces where one index holds >= threshold of the mass, with that index
    std::vector<std::pair<std::uint32_t, std::uint32_t>> anchors; // (subspace, index)
};

// Per-group per-subspace index histograms; groups default to a single "all"
// group when labels are empty. labels.size() must otherwise equal codes.size().
std::vector<SubspaceGroupTable> subspace_index_table(
    const std::vector<PQCode>& codes, const std::vector<std::string>& labels,
    const CodebookSpec& spec, double anchor_threshold = 0.9);

// key: value lines plus per-subspace histogram blocks, stable across runs.
std::string stats_report(const UsageStats& stats,
                         const std::vector<SubspaceGroupTable>& tables,
                         const CodebookSpec& spec);

} // namespace curp
