#include <gtest/gtest.h>

#include "scrawl/metrics.hpp"
#include "scrawl/rng.hpp"

using namespace scrawl;

namespace {

// textbook recursive definition, exponential on purpose
int lev_naive(const std::string& a, const std::string& b, size_t i = 0, size_t j = 0) {
    if (i == a.size()) return static_cast<int>(b.size() - j);
    if (j == b.size()) return static_cast<int>(a.size() - i);
    if (a[i] == b[j]) return lev_naive(a, b, i + 1, j + 1);
    return 1 + std::min({lev_naive(a, b, i + 1, j), lev_naive(a, b, i, j + 1), lev_naive(a, b, i + 1, j + 1)});
}

std::string random_string(Rng& rng, int max_len, const std::string& alphabet) {
    const int len = static_cast<int>(rng.below(max_len + 1));
    std::string s;
    for (int i = 0; i < len; ++i) s += alphabet[rng.below(alphabet.size())];
    return s;
}

}  // namespace

TEST(Levenshtein, Identity) { EXPECT_EQ(levenshtein("abc", "abc"), 0); }

TEST(Levenshtein, PureInsertions) { EXPECT_EQ(levenshtein("", "abc"), 3); }

TEST(Levenshtein, KittenSitting) { EXPECT_EQ(levenshtein("kitten", "sitting"), lev_naive("kitten", "sitting")); }

TEST(Levenshtein, UnicodeCountsScalars) {
    EXPECT_EQ(levenshtein("caf\xc3\xa9", "cafe"), 1);          // é vs e
    EXPECT_EQ(levenshtein("\xc3\xa9\xc3\xa9", ""), 2);         // two scalars
}

TEST(Levenshtein, MetricProperties) {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const std::string a = random_string(rng, 8, "abcz");
        const std::string b = random_string(rng, 8, "abcz");
        const std::string c = random_string(rng, 8, "abcz");
        const int ab = levenshtein(a, b);
        EXPECT_EQ(ab, levenshtein(b, a));
        EXPECT_EQ(levenshtein(a, a), 0);
        const int diff = std::abs(static_cast<int>(a.size()) - static_cast<int>(b.size()));
        EXPECT_GE(ab, diff);
        EXPECT_LE(ab, static_cast<int>(std::max(a.size(), b.size())));
        EXPECT_LE(ab, levenshtein(a, c) + levenshtein(c, b));
    }
}

TEST(Levenshtein, MatchesNaiveOnShortStrings) {
    Rng rng(18);
    for (int trial = 0; trial < 300; ++trial) {
        const std::string a = random_string(rng, 6, "abc");
        const std::string b = random_string(rng, 6, "abc");
        EXPECT_EQ(levenshtein(a, b), lev_naive(a, b)) << a << " vs " << b;
    }
}

TEST(Cer, PerfectHypotheses) {
    EXPECT_DOUBLE_EQ(cer({"hello", "world"}, {"hello", "world"}), 0.0);
}

TEST(Cer, SingleSubstitution) { EXPECT_DOUBLE_EQ(cer({"abcd"}, {"abed"}), 0.25); }

TEST(Cer, PooledRatio) { EXPECT_DOUBLE_EQ(cer({"ab", "cd"}, {"ab", "xy"}), 0.5); }

TEST(Cer, PooledNotMeanOfPerSample) {
    // pooling weights long references more than averaging per-sample rates
    const auto r = cer_report({"aaaaaaaa", "b"}, {"aaaaaaaa", "x"});
    EXPECT_DOUBLE_EQ(r.cer, 1.0 / 9.0);
    EXPECT_DOUBLE_EQ(r.per_sample_cer[0], 0.0);
    EXPECT_DOUBLE_EQ(r.per_sample_cer[1], 1.0);
}

TEST(Cer, InvariantUnderJointPermutation) {
    Rng rng(19);
    std::vector<std::string> refs, hyps;
    for (int i = 0; i < 20; ++i) {
        refs.push_back(random_string(rng, 10, "abcdef") + "x");
        hyps.push_back(random_string(rng, 10, "abcdef"));
    }
    const double base = cer(refs, hyps);
    std::vector<size_t> order(refs.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::string> refs2, hyps2;
    for (size_t k : order) {
        refs2.push_back(refs[k]);
        hyps2.push_back(hyps[k]);
    }
    EXPECT_DOUBLE_EQ(cer(refs2, hyps2), base);
}

TEST(Cer, AllEmptyReferencesRejected) {
    EXPECT_THROW(cer({"", ""}, {"a", "b"}), std::runtime_error);
    EXPECT_THROW(cer({}, {}), std::runtime_error);
    EXPECT_THROW(cer({"a"}, {"a", "b"}), std::runtime_error);
}

TEST(Cer, CanExceedOne) {
    EXPECT_GT(cer({"a"}, {"zzzzz"}), 1.0);
}
