#include "curp/metrics.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace curp {

UsageStats usage_stats(const std::vector<PQCode>& codes, const CodebookSpec& spec) {
    validate_spec(spec);
    UsageStats s;
    s.counts.assign(spec.vocab_size, 0);
    s.freqs.assign(spec.vocab_size, 0.0);

    std::set<std::vector<std::uint32_t>> tuples;
    for (const PQCode& code : codes) {
        code.validate(spec);
        for (std::uint32_t idx : code.indices) ++s.counts[idx];
        tuples.insert(code.indices);
    }
    s.distinct_codes = tuples.size();
    s.combination_ratio = codes.empty()
                              ? 0.0
                              : static_cast<double>(tuples.size()) / codes.size();

    std::uint64_t total = 0;
    std::uint64_t used = 0;
    for (std::uint64_t c : s.counts) {
        total += c;
        if (c > 0) ++used;
    }
    s.coverage = static_cast<double>(used) / spec.vocab_size;
    if (total > 0) {
        double h = 0.0;
        for (std::uint32_t k = 0; k < spec.vocab_size; ++k) {
            s.freqs[k] = static_cast<double>(s.counts[k]) / total;
            if (s.freqs[k] > 0) h -= s.freqs[k] * std::log(s.freqs[k]);
        }
        s.norm_entropy = h / std::log(static_cast<double>(spec.vocab_size));
    }
    return s;
}

double mean_pairwise_cosine(const Matrix& rows) {
    if (rows.rows < 2) throw TooFewRows("need at least 2 rows");
    std::vector<double> norms(rows.rows);
    for (std::size_t i = 0; i < rows.rows; ++i) {
        double n = 0.0;
        for (double v : rows.row(i)) n += v * v;
        if (n == 0.0) throw ZeroVector("row " + std::to_string(i) + " is zero");
        norms[i] = std::sqrt(n);
    }
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < rows.rows; ++i) {
        for (std::size_t j = i + 1; j < rows.rows; ++j) {
            double dot = 0.0;
            auto a = rows.row(i);
            auto b = rows.row(j);
            for (std::size_t t = 0; t < rows.cols; ++t) dot += a[t] * b[t];
            sum += dot / (norms[i] * norms[j]);
            ++pairs;
        }
    }
    return sum / pairs;
}

std::vector<SubspaceGroupTable> subspace_index_table(
    const std::vector<PQCode>& codes, const std::vector<std::string>& labels,
    const CodebookSpec& spec, double anchor_threshold) {
    if (!labels.empty() && labels.size() != codes.size()) {
        throw Error("labels size != codes size");
    }
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < codes.size(); ++i) {
        codes[i].validate(spec);
        groups[labels.empty() ? "all" : labels[i]].push_back(i);
    }

    std::vector<SubspaceGroupTable> out;
    for (const auto& [name, members] : groups) {
        SubspaceGroupTable t;
        t.group = name;
        t.histograms.resize(spec.num_subspaces);
        for (std::size_t i : members) {
            for (std::uint32_t l = 0; l < spec.num_subspaces; ++l) {
                ++t.histograms[l][codes[i].indices[l]];
            }
        }
        for (std::uint32_t l = 0; l < spec.num_subspaces; ++l) {
            for (const auto& [idx, count] : t.histograms[l]) {
                const double freq = static_cast<double>(count) / members.size();
                if (freq >= anchor_threshold) {
                    t.anchors.emplace_back(l, idx);
                    break;
                }
            }
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::string stats_report(const UsageStats& stats,
                         const std::vector<SubspaceGroupTable>& tables,
                         const CodebookSpec& spec) {
    std::ostringstream os;
    os.precision(9);
    os << "vocab_size: " << spec.vocab_size << "\n"
       << "num_subspaces: " << spec.num_subspaces << "\n"
       << "coverage: " << stats.coverage << "\n"
       << "norm_entropy: " << stats.norm_entropy << "\n"
       << "distinct_codes: " << stats.distinct_codes << "\n"
       << "combination_ratio: " << stats.combination_ratio << "\n";
    for (const SubspaceGroupTable& t : tables) {
        os << "group: " << t.group << "\n";
        for (std::uint32_t l = 0; l < t.histograms.size(); ++l) {
            os << "  subspace " << l << ":";
            for (const auto& [idx, count] : t.histograms[l]) {
                os << " " << idx << "=" << count;
            }
            os << "\n";
        }
        for (const auto& [l, idx] : t.anchors) {
            os << "  anchor: subspace=" << l << " index=" << idx << "\n";
        }
    }
    return os.str();
}

} // namespace curp
