#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"

#include "oodbench/errors.hpp"
#include "oodbench/evaluation.hpp"
#include "oodbench/rng.hpp"

using namespace oodbench;

namespace {

Readout row(std::string id, Origin origin, bool novelty, int y, int y_hat, bool m_hat) {
  Readout r;
  r.instance_id = std::move(id);
  r.origin = origin;
  r.novelty = novelty;
  r.y = y;
  r.y_hat = y_hat;
  r.m_hat = m_hat;
  r.s_hat = m_hat;
  return r;
}

// Brute-force metric formulas in extended precision, written from the
// definitions rather than the library's factored forms.
struct BruteMetrics {
  double mcc, fpr, fnr, precision, recall, micro_f1;
};

BruteMetrics brute(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
  const long double tpl = tp, fpl = fp, tnl = tn, fnl = fn;
  BruteMetrics m{};
  const long double prod = (tpl + fpl) * (tpl + fnl) * (tnl + fpl) * (tnl + fnl);
  m.mcc = prod == 0.0L ? 0.0
                       : static_cast<double>((tpl * tnl - fpl * fnl) / std::sqrt(prod));
  m.fpr = fpl + tnl == 0.0L ? 0.0 : static_cast<double>(fpl / (fpl + tnl));
  m.fnr = fnl + tpl == 0.0L ? 0.0 : static_cast<double>(fnl / (fnl + tpl));
  m.precision = tpl + fpl == 0.0L ? 0.0 : static_cast<double>(tpl / (tpl + fpl));
  m.recall = tpl + fnl == 0.0L ? 0.0 : static_cast<double>(tpl / (tpl + fnl));
  m.micro_f1 =
      2.0L * tpl + fpl + fnl == 0.0L
          ? 0.0
          : static_cast<double>(2.0L * tpl / (2.0L * tpl + fpl + fnl));
  return m;
}

}  // namespace

TEST_CASE("oracle covers every input combination") {
  // ID rows: the specific verdict follows the flag, the overall verdict
  // depends on whether the flag matched the classifier mistake.
  auto v = oracle(Origin::ID, false, true, true);
  CHECK(v.specific == Verdict::FP);
  CHECK(v.overall == Verdict::FP);

  v = oracle(Origin::ID, false, true, false);
  CHECK(v.specific == Verdict::FP);
  CHECK(v.overall == Verdict::TP);

  v = oracle(Origin::ID, false, false, true);
  CHECK(v.specific == Verdict::TN);
  CHECK(v.overall == Verdict::TN);

  v = oracle(Origin::ID, false, false, false);
  CHECK(v.specific == Verdict::TN);
  CHECK(v.overall == Verdict::FN);

  v = oracle(Origin::OOD, false, true, true);
  CHECK(v.specific == Verdict::TP);
  CHECK(v.overall == Verdict::FP);

  v = oracle(Origin::OOD, false, true, false);
  CHECK(v.specific == Verdict::TP);
  CHECK(v.overall == Verdict::TP);

  v = oracle(Origin::OOD, false, false, true);
  CHECK(v.specific == Verdict::FN);
  CHECK(v.overall == Verdict::TN);

  v = oracle(Origin::OOD, false, false, false);
  CHECK(v.specific == Verdict::FN);
  CHECK(v.overall == Verdict::FN);

  // Novel classes: no classification can be right, the flag decides both.
  v = oracle(Origin::OOD, true, true, false);
  CHECK(v.specific == Verdict::TP);
  CHECK(v.overall == Verdict::TP);

  v = oracle(Origin::OOD, true, false, false);
  CHECK(v.specific == Verdict::FN);
  CHECK(v.overall == Verdict::FN);

  CHECK_THROWS_AS(oracle(Origin::ID, true, false, true), IntegrityError);
  CHECK_THROWS_AS(oracle(Origin::ID, true, true, false), IntegrityError);
}

TEST_CASE("verdict counts conserve the instance total") {
  Rng rng(99);
  std::vector<Readout> rows;
  for (int i = 0; i < 500; ++i) {
    const bool ood = rng.uniform01() < 0.5;
    const bool nov = ood && rng.uniform01() < 0.3;
    const int y = static_cast<int>(rng.below(4));
    const int y_hat = static_cast<int>(rng.below(4));
    rows.push_back(row("i" + std::to_string(i), ood ? Origin::OOD : Origin::ID, nov, y,
                       y_hat, rng.uniform01() < 0.4));
  }
  const VerdictCounts c = count_verdicts(rows);
  CHECK(c.specific.total() == rows.size());
  CHECK(c.overall.total() == rows.size());
}

TEST_CASE("mcc fixtures") {
  CHECK(mcc(ConfusionCounts{50, 0, 50, 0}) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(mcc(ConfusionCounts{0, 50, 0, 50}) == doctest::Approx(-1.0).epsilon(1e-14));
  // (90*90 - 10*10) / sqrt(100^4) = 8000 / 10000
  CHECK(mcc(ConfusionCounts{90, 10, 90, 10}) == doctest::Approx(0.8).epsilon(1e-15));
  // Any zero marginal collapses to 0 by convention.
  CHECK(mcc(ConfusionCounts{0, 0, 5, 5}) == 0.0);
  CHECK(mcc(ConfusionCounts{5, 5, 0, 0}) == 0.0);
  CHECK(mcc(ConfusionCounts{0, 5, 5, 0}) == 0.0);
  CHECK(mcc(ConfusionCounts{0, 0, 0, 0}) == 0.0);
}

TEST_CASE("rate fixtures") {
  const RateSet r = rates(ConfusionCounts{1, 1, 1, 1});
  CHECK(r.fpr == 0.5);
  CHECK(r.fnr == 0.5);
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 0.5);
  CHECK(r.micro_f1 == 0.5);

  const RateSet p = rates(ConfusionCounts{10, 0, 10, 0});
  CHECK(p.fpr == 0.0);
  CHECK(p.fnr == 0.0);
  CHECK(p.precision == 1.0);
  CHECK(p.recall == 1.0);
  CHECK(p.micro_f1 == 1.0);

  // Empty margins resolve to 0, never NaN.
  const RateSet z = rates(ConfusionCounts{0, 0, 0, 0});
  CHECK(z.fpr == 0.0);
  CHECK(z.fnr == 0.0);
  CHECK(z.precision == 0.0);
  CHECK(z.recall == 0.0);
  CHECK(z.micro_f1 == 0.0);
}

TEST_CASE("metrics match an independent high-precision computation") {
  Rng rng(0xC0FFEE);
  for (int i = 0; i < 1000; ++i) {
    ConfusionCounts c;
    c.tp = rng.below(1001);
    c.fp = rng.below(1001);
    c.tn = rng.below(1001);
    c.fn = rng.below(1001);
    const BruteMetrics b = brute(c.tp, c.fp, c.tn, c.fn);
    const RateSet r = rates(c);
    CHECK(std::fabs(mcc(c) - b.mcc) < 1e-12);
    CHECK(std::fabs(r.fpr - b.fpr) < 1e-12);
    CHECK(std::fabs(r.fnr - b.fnr) < 1e-12);
    CHECK(std::fabs(r.precision - b.precision) < 1e-12);
    CHECK(std::fabs(r.recall - b.recall) < 1e-12);
    CHECK(std::fabs(r.micro_f1 - b.micro_f1) < 1e-12);
  }
}

TEST_CASE("a coin-flip detector scores near zero on a balanced stream") {
  Rng rng(1234);
  std::vector<Readout> rows;
  for (int i = 0; i < 10000; ++i) {
    const bool ood = i % 2 == 1;
    rows.push_back(row("i" + std::to_string(i), ood ? Origin::OOD : Origin::ID, false, 0,
                       ood ? 1 : 0, rng.uniform01() < 0.5));
  }
  const VerdictCounts c = count_verdicts(rows);
  const double m = mcc(c.specific);
  CHECK(std::fabs(m) < 0.05);
}

TEST_CASE("impact of a silent monitor is zero by construction") {
  std::vector<Readout> rows;
  rows.push_back(row("a", Origin::ID, false, 0, 0, false));
  rows.push_back(row("b", Origin::ID, false, 1, 1, false));
  rows.push_back(row("c", Origin::OOD, false, 0, 1, false));
  const ImpactResult imp = overall_impact(rows, rows);
  CHECK(imp.mcc_sut == imp.mcc_ml);
  CHECK(imp.relative_change == 0.0);
  CHECK(imp.change_defined);
}

TEST_CASE("impact of an always-on monitor cancels everything") {
  std::vector<Readout> with_sm;
  with_sm.push_back(row("a", Origin::ID, false, 0, 0, true));
  with_sm.push_back(row("b", Origin::ID, false, 1, 1, true));
  with_sm.push_back(row("c", Origin::ID, false, 0, 0, true));
  with_sm.push_back(row("d", Origin::ID, false, 1, 0, true));
  std::vector<Readout> ml_only = with_sm;
  for (Readout& r : ml_only) {
    r.m_hat = false;
    r.s_hat = false;
  }
  // Baseline: 3 of 4 correct over 2 classes -> mcc 0.5. With every output
  // canceled no positives remain, so the system mcc collapses to 0 and the
  // relative change is exactly -1.
  const ImpactResult imp = overall_impact(with_sm, ml_only);
  CHECK(imp.mcc_ml == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(imp.mcc_sut == 0.0);
  CHECK(imp.relative_change == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(imp.change_defined);
}

TEST_CASE("impact flags an undefined relative change when the baseline mcc is zero") {
  // 2 correct + 2 wrong over 2 classes gives a baseline mcc of exactly 0.
  std::vector<Readout> ml_only;
  ml_only.push_back(row("a", Origin::ID, false, 0, 0, false));
  ml_only.push_back(row("b", Origin::ID, false, 1, 1, false));
  ml_only.push_back(row("c", Origin::ID, false, 0, 1, false));
  ml_only.push_back(row("d", Origin::ID, false, 1, 0, false));
  std::vector<Readout> with_sm = ml_only;
  with_sm[2].m_hat = true;
  with_sm[2].s_hat = true;
  const ImpactResult imp = overall_impact(with_sm, ml_only);
  CHECK(imp.mcc_ml == 0.0);
  CHECK(imp.mcc_sut != 0.0);
  CHECK_FALSE(imp.change_defined);
  CHECK(imp.relative_change == 0.0);
}

TEST_CASE("impact rejects mismatched instance sets") {
  std::vector<Readout> a{row("x", Origin::ID, false, 0, 0, false)};
  std::vector<Readout> b{row("y", Origin::ID, false, 0, 0, false)};
  CHECK_THROWS_AS(overall_impact(a, b), ParameterError);
}

TEST_CASE("evaluate_readouts builds its own silent baseline") {
  std::vector<Readout> rows;
  rows.push_back(row("a", Origin::ID, false, 0, 0, false));
  rows.push_back(row("b", Origin::ID, false, 1, 1, false));
  rows.push_back(row("c", Origin::OOD, false, 1, 0, true));
  rows.push_back(row("d", Origin::OOD, true, 7, 0, true));
  const BenchmarkMetrics m = evaluate_readouts("bench", "mon", rows);
  CHECK(m.benchmark == "bench");
  CHECK(m.monitor == "mon");
  CHECK(m.specific.tn == 2);
  CHECK(m.specific.tp == 2);
  CHECK(m.specific.total() == rows.size());
  CHECK(m.mcc_specific == doctest::Approx(1.0).epsilon(1e-14));
  // The monitor canceled both OOD mistakes, so the system must not score
  // worse than the bare classifier.
  CHECK(m.impact.mcc_sut >= m.impact.mcc_ml);
}

TEST_CASE("ranks average ties and sum to the triangular total") {
  const RankMatrix rm = make_ranks({"a", "b", "c"}, {"b1", "b2"},
                                   {{0.9, 0.5, 0.5}, {0.1, 0.2, 0.3}});
  CHECK(rm.ranks[0][0] == 1.0);
  CHECK(rm.ranks[0][1] == 2.5);
  CHECK(rm.ranks[0][2] == 2.5);
  CHECK(rm.ranks[1][0] == 3.0);
  CHECK(rm.ranks[1][1] == 2.0);
  CHECK(rm.ranks[1][2] == 1.0);
  for (const auto& rrow : rm.ranks) {
    double s = 0.0;
    for (double v : rrow) s += v;
    CHECK(s == doctest::Approx(6.0).epsilon(1e-15));
  }
  CHECK(rm.mean_ranks[0] == 2.0);
  CHECK(rm.mean_ranks[1] == 2.25);
  CHECK(rm.mean_ranks[2] == 1.75);

  CHECK_THROWS_AS(make_ranks({"a"}, {"b1"}, {{1.0, 2.0}}), ParameterError);
  CHECK_THROWS_AS(make_ranks({"a", "b"}, {"b1", "b2"}, {{1.0, 2.0}}), ParameterError);
}

TEST_CASE("friedman statistic on unanimous rankings") {
  // Three benchmarks that rank the three methods identically; every term of
  // the statistic is integral, so the result is exact.
  const RankMatrix rm = make_ranks({"a", "b", "c"}, {"b1", "b2", "b3"},
                                   {{3.0, 2.0, 1.0}, {3.0, 2.0, 1.0}, {3.0, 2.0, 1.0}});
  const FriedmanResult f = friedman(rm);
  CHECK(f.chi2 == 6.0);
  CHECK(f.df == 2);
  CHECK(std::fabs(f.p - std::exp(-3.0)) < 1e-10);
}

TEST_CASE("friedman statistic on a mixed fixture") {
  // 3 benchmarks rank (a,b,c), 4 rank (b,a,c), 3 rank (a,c,b): mean ranks
  // 1.4 / 1.9 / 2.7 and chi-square 10 * (12.86 - 12) = 8.6.
  std::vector<std::vector<double>> values;
  for (int i = 0; i < 3; ++i) values.push_back({3.0, 2.0, 1.0});
  for (int i = 0; i < 4; ++i) values.push_back({2.0, 3.0, 1.0});
  for (int i = 0; i < 3; ++i) values.push_back({3.0, 1.0, 2.0});
  std::vector<std::string> benches;
  for (int i = 0; i < 10; ++i) benches.push_back("b" + std::to_string(i));
  const RankMatrix rm = make_ranks({"a", "b", "c"}, benches, values);
  CHECK(rm.mean_ranks[0] == doctest::Approx(1.4).epsilon(1e-14));
  CHECK(rm.mean_ranks[1] == doctest::Approx(1.9).epsilon(1e-14));
  CHECK(rm.mean_ranks[2] == doctest::Approx(2.7).epsilon(1e-14));
  const FriedmanResult f = friedman(rm);
  CHECK(f.chi2 == doctest::Approx(8.6).epsilon(1e-12));
  CHECK(std::fabs(f.p - std::exp(-4.3)) < 1e-9);
}

TEST_CASE("friedman on identical values degenerates to p = 1") {
  const RankMatrix rm = make_ranks({"a", "b", "c"}, {"b1", "b2"},
                                   {{1.0, 1.0, 1.0}, {2.0, 2.0, 2.0}});
  const FriedmanResult f = friedman(rm);
  CHECK(f.chi2 == 0.0);
  CHECK(f.p == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("friedman input validation") {
  CHECK_THROWS_AS(friedman(make_ranks({"a"}, {"b1", "b2"}, {{1.0}, {2.0}})), ParameterError);
  CHECK_THROWS_AS(friedman(make_ranks({"a", "b"}, {"b1"}, {{1.0, 2.0}})), ParameterError);
}

TEST_CASE("critical difference fixtures") {
  // 2.343 * sqrt(3*4 / (6*79))
  CHECK(std::fabs(nemenyi_cd(3, 79) - 0.3728) < 0.0005);
  // 1.960 * sqrt(2*3 / (6*6)) = 1.960 / sqrt(6)
  CHECK(std::fabs(nemenyi_cd(2, 6) - 1.960 / std::sqrt(6.0)) < 1e-12);
  CHECK_THROWS_AS(nemenyi_cd(3, 79, 0.1), ParameterError);
  CHECK_THROWS_AS(nemenyi_cd(1, 79), ParameterError);
  CHECK_THROWS_AS(nemenyi_cd(11, 79), ParameterError);
  CHECK_THROWS_AS(nemenyi_cd(3, 1), ParameterError);
}

TEST_CASE("cd diagram groups methods within the critical difference") {
  const RankMatrix rm = make_ranks({"m1", "m2", "m3"}, {"b1", "b2"},
                                   {{3.0, 2.0, 1.0}, {3.0, 2.0, 1.0}});
  // Mean ranks 1, 2, 3. cd = 1.5: {1,2} group, {2,3} group.
  CdDiagram d = cd_diagram(rm, 1.5);
  REQUIRE(d.groups.size() == 2);
  CHECK(d.groups[0] == std::vector<std::size_t>{0, 1});
  CHECK(d.groups[1] == std::vector<std::size_t>{1, 2});

  // cd = 2.5 merges everything into one maximal group.
  d = cd_diagram(rm, 2.5);
  REQUIRE(d.groups.size() == 1);
  CHECK(d.groups[0] == std::vector<std::size_t>{0, 1, 2});

  // cd below every gap leaves no groups; singletons are not recorded.
  d = cd_diagram(rm, 0.5);
  CHECK(d.groups.empty());
  CHECK(d.txt.find("none") != std::string::npos);
}

TEST_CASE("cd diagram spread comparison is strict") {
  RankMatrix rm = make_ranks({"m1", "m2", "m3"}, {"b1", "b2"},
                             {{3.0, 2.0, 1.0}, {3.0, 2.0, 1.0}});
  rm.mean_ranks = {1.5, 1.6, 3.0};
  const CdDiagram d = cd_diagram(rm, 0.5);
  REQUIRE(d.groups.size() == 1);
  CHECK(d.groups[0] == std::vector<std::size_t>{0, 1});
}

TEST_CASE("cd diagram output is a pure function of its inputs") {
  const RankMatrix rm = make_ranks({"oob", "odin", "recon"}, {"b1", "b2", "b3"},
                                   {{0.8, 0.6, 0.4}, {0.7, 0.9, 0.2}, {0.5, 0.4, 0.6}});
  const double cd = nemenyi_cd(3, 3);
  const CdDiagram a = cd_diagram(rm, cd);
  const CdDiagram b = cd_diagram(rm, cd);
  CHECK(a.svg == b.svg);
  CHECK(a.txt == b.txt);
  CHECK(a.svg.find("<svg") == 0);
  CHECK(a.svg.find("critical difference") != std::string::npos);
  CHECK(a.txt.find("mean ranks (1 = best)") != std::string::npos);
  for (const char* name : {"oob", "odin", "recon"}) {
    CHECK(a.svg.find(name) != std::string::npos);
    CHECK(a.txt.find(name) != std::string::npos);
  }
}

TEST_CASE("friedman p-value agrees with the exact permutation null") {
  // Exact null for k = 3, N = 10 by dynamic programming over rank-sum
  // vectors: each benchmark contributes one of the 6 permutations of
  // (1,2,3) with equal probability.
  const std::size_t n = 10;
  const int perms[6][3] = {{1, 2, 3}, {1, 3, 2}, {2, 1, 3},
                           {2, 3, 1}, {3, 1, 2}, {3, 2, 1}};
  // dist[s1][s2] = probability of rank sums (s1, s2); s3 follows from the
  // fixed row total 6 per benchmark.
  const std::size_t hi = 3 * n + 1;
  std::vector<std::vector<double>> dist(hi, std::vector<double>(hi, 0.0));
  dist[0][0] = 1.0;
  for (std::size_t b = 0; b < n; ++b) {
    std::vector<std::vector<double>> next(hi, std::vector<double>(hi, 0.0));
    for (std::size_t s1 = 0; s1 < hi; ++s1)
      for (std::size_t s2 = 0; s2 < hi; ++s2) {
        if (dist[s1][s2] == 0.0) continue;
        for (const auto& p : perms)
          next[s1 + static_cast<std::size_t>(p[0])][s2 + static_cast<std::size_t>(p[1])] +=
              dist[s1][s2] / 6.0;
      }
    dist = std::move(next);
  }
  const auto chi2_of = [&](double s1, double s2, double s3) {
    const double nn = static_cast<double>(n);
    const double m1 = s1 / nn, m2 = s2 / nn, m3 = s3 / nn;
    return 12.0 * nn / 12.0 * (m1 * m1 + m2 * m2 + m3 * m3 - 12.0);
  };

  // The mixed fixture from above: chi-square 8.6.
  std::vector<std::vector<double>> values;
  for (int i = 0; i < 3; ++i) values.push_back({3.0, 2.0, 1.0});
  for (int i = 0; i < 4; ++i) values.push_back({2.0, 3.0, 1.0});
  for (int i = 0; i < 3; ++i) values.push_back({3.0, 1.0, 2.0});
  std::vector<std::string> benches;
  for (std::size_t i = 0; i < n; ++i) benches.push_back("b" + std::to_string(i));
  const FriedmanResult f = friedman(make_ranks({"a", "b", "c"}, benches, values));

  double tail = 0.0;
  for (std::size_t s1 = 0; s1 < hi; ++s1)
    for (std::size_t s2 = 0; s2 < hi; ++s2) {
      if (dist[s1][s2] == 0.0) continue;
      const double s3 = 6.0 * static_cast<double>(n) - static_cast<double>(s1) -
                        static_cast<double>(s2);
      if (chi2_of(static_cast<double>(s1), static_cast<double>(s2), s3) >= f.chi2 - 1e-9)
        tail += dist[s1][s2];
    }
  // The chi-square approximation sits within a percent of the exact tail
  // at this size; the acceptance bound is 0.01 against a sampled null.
  CHECK(std::fabs(f.p - tail) < 0.01);
}
