#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace scrawl {

// Distances are computed over Unicode scalar values, not bytes, so a
// replacement character counts as a single edit.
inline std::vector<uint32_t> utf8_codepoints(const std::string& s) {
    std::vector<uint32_t> cps;
    size_t i = 0;
    while (i < s.size()) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        uint32_t cp = 0;
        int extra = 0;
        if (c < 0x80) {
            cp = c;
        } else if ((c >> 5) == 0x6) {
            cp = c & 0x1f;
            extra = 1;
        } else if ((c >> 4) == 0xe) {
            cp = c & 0x0f;
            extra = 2;
        } else if ((c >> 3) == 0x1e) {
            cp = c & 0x07;
            extra = 3;
        } else {
            cp = 0xFFFD;  // stray continuation byte
        }
        ++i;
        for (int k = 0; k < extra && i < s.size(); ++k, ++i) cp = (cp << 6) | (static_cast<unsigned char>(s[i]) & 0x3f);
        cps.push_back(cp);
    }
    return cps;
}

inline int levenshtein(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b) {
    const size_t m = a.size(), n = b.size();
    std::vector<int> prev(n + 1), cur(n + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (size_t i = 1; i <= m; ++i) {
        cur[0] = static_cast<int>(i);
        for (size_t j = 1; j <= n; ++j) {
            const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[n];
}

inline int levenshtein(const std::string& a, const std::string& b) {
    return levenshtein(utf8_codepoints(a), utf8_codepoints(b));
}

struct EvalReport {
    std::vector<int> distances;
    std::vector<int> ref_lengths;
    std::vector<double> per_sample_cer;
    double cer = 0.0;  // pooled: sum(distances) / sum(ref_lengths)
};

// Pooled character error rate: total edit distance over total reference
// characters. May exceed 1 when hypotheses run long.
inline EvalReport cer_report(const std::vector<std::string>& refs, const std::vector<std::string>& hyps) {
    if (refs.size() != hyps.size()) throw std::runtime_error("cer: refs and hyps differ in length");
    EvalReport r;
    long total_dist = 0, total_len = 0;
    for (size_t i = 0; i < refs.size(); ++i) {
        const auto ra = utf8_codepoints(refs[i]);
        const auto ha = utf8_codepoints(hyps[i]);
        const int d = levenshtein(ra, ha);
        r.distances.push_back(d);
        r.ref_lengths.push_back(static_cast<int>(ra.size()));
        r.per_sample_cer.push_back(ra.empty() ? 0.0 : static_cast<double>(d) / static_cast<double>(ra.size()));
        total_dist += d;
        total_len += static_cast<long>(ra.size());
    }
    if (total_len == 0) throw std::runtime_error("cer: all references empty");
    r.cer = static_cast<double>(total_dist) / static_cast<double>(total_len);
    return r;
}

inline double cer(const std::vector<std::string>& refs, const std::vector<std::string>& hyps) {
    return cer_report(refs, hyps).cer;
}

}  // namespace scrawl
