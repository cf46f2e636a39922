#include "oodbench/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "oodbench/errors.hpp"
#include "oodbench/special.hpp"

namespace oodbench {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

const char* verdict_str(Verdict v) {
  switch (v) {
    case Verdict::TP: return "TP";
    case Verdict::FP: return "FP";
    case Verdict::TN: return "TN";
    case Verdict::FN: return "FN";
  }
  return "?";
}

VerdictPair oracle(Origin origin, bool novelty, bool m_hat, bool ml_correct) {
  if (novelty && origin == Origin::ID)
    throw IntegrityError("novel instance tagged as in-distribution");
  VerdictPair v{};
  if (origin == Origin::ID) {
    if (m_hat) {
      v.specific = Verdict::FP;
      v.overall = ml_correct ? Verdict::FP : Verdict::TP;
    } else {
      v.specific = Verdict::TN;
      v.overall = ml_correct ? Verdict::TN : Verdict::FN;
    }
    return v;
  }
  if (m_hat) {
    v.specific = Verdict::TP;
    // For novel classes no classification can be right, so a raised flag
    // always counts as a save.
    v.overall = novelty ? Verdict::TP : (ml_correct ? Verdict::FP : Verdict::TP);
  } else {
    v.specific = Verdict::FN;
    v.overall = novelty ? Verdict::FN : (ml_correct ? Verdict::TN : Verdict::FN);
  }
  return v;
}

void ConfusionCounts::add(Verdict v) {
  switch (v) {
    case Verdict::TP: ++tp; break;
    case Verdict::FP: ++fp; break;
    case Verdict::TN: ++tn; break;
    case Verdict::FN: ++fn; break;
  }
}

VerdictCounts count_verdicts(const std::vector<Readout>& rows) {
  VerdictCounts c;
  for (const Readout& r : rows) {
    const VerdictPair v = oracle(r.origin, r.novelty, r.m_hat, r.y == r.y_hat);
    c.specific.add(v.specific);
    c.overall.add(v.overall);
  }
  return c;
}

double mcc(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  const double f1 = tp + fp, f2 = tp + fn, f3 = tn + fp, f4 = tn + fn;
  if (f1 == 0.0 || f2 == 0.0 || f3 == 0.0 || f4 == 0.0) return 0.0;
  // Factored square roots keep the denominator finite for large counts.
  return (tp * tn - fp * fn) /
         (std::sqrt(f1) * std::sqrt(f2) * std::sqrt(f3) * std::sqrt(f4));
}

RateSet rates(const ConfusionCounts& c) {
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn), fn = static_cast<double>(c.fn);
  const auto ratio = [](double num, double den) { return den == 0.0 ? 0.0 : num / den; };
  RateSet r;
  r.fpr = ratio(fp, fp + tn);
  r.fnr = ratio(fn, fn + tp);
  r.precision = ratio(tp, tp + fp);
  r.recall = ratio(tp, tp + fn);
  r.micro_f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  return r;
}

namespace {

// One-vs-rest expansion of system correctness over K classes.
ConfusionCounts correctness_counts(const std::vector<Readout>& rows, std::size_t k,
                                   bool honor_cancel) {
  ConfusionCounts c;
  for (const Readout& r : rows) {
    const bool canceled = honor_cancel && r.s_hat;
    const bool correct = !r.novelty && r.y == r.y_hat;
    if (canceled) {
      c.fn += 1;
      c.tn += k - 1;
    } else if (correct) {
      c.tp += 1;
      c.tn += k - 1;
    } else {
      c.fp += 1;
      c.fn += 1;
      c.tn += k - 2;
    }
  }
  return c;
}

}  // namespace

ImpactResult overall_impact(const std::vector<Readout>& with_sm,
                            const std::vector<Readout>& ml_only) {
  std::vector<std::string> a, b;
  a.reserve(with_sm.size());
  b.reserve(ml_only.size());
  for (const Readout& r : with_sm) a.push_back(r.instance_id);
  for (const Readout& r : ml_only) b.push_back(r.instance_id);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a != b) throw ParameterError("impact baseline covers a different instance set");

  std::size_t k = 2;
  const auto widen = [&](const std::vector<Readout>& rows) {
    for (const Readout& r : rows) {
      if (r.y_hat >= 0) k = std::max(k, static_cast<std::size_t>(r.y_hat) + 1);
      if (!r.novelty && r.y >= 0) k = std::max(k, static_cast<std::size_t>(r.y) + 1);
    }
  };
  widen(with_sm);
  widen(ml_only);

  ImpactResult out;
  out.mcc_sut = mcc(correctness_counts(with_sm, k, true));
  out.mcc_ml = mcc(correctness_counts(ml_only, k, false));
  if (out.mcc_sut == out.mcc_ml) {
    out.relative_change = 0.0;
  } else if (out.mcc_ml == 0.0) {
    out.change_defined = false;
    out.relative_change = 0.0;
  } else {
    out.relative_change = (out.mcc_sut - out.mcc_ml) / std::fabs(out.mcc_ml);
  }
  return out;
}

BenchmarkMetrics evaluate_readouts(const std::string& benchmark, const std::string& monitor,
                                   const std::vector<Readout>& rows) {
  BenchmarkMetrics m;
  m.benchmark = benchmark;
  m.monitor = monitor;
  const VerdictCounts c = count_verdicts(rows);
  m.specific = c.specific;
  m.overall = c.overall;
  m.mcc_specific = mcc(c.specific);
  m.mcc_overall = mcc(c.overall);
  m.rates_specific = rates(c.specific);
  m.rates_overall = rates(c.overall);
  std::vector<Readout> baseline = rows;
  for (Readout& r : baseline) {
    r.m_hat = false;
    r.s_hat = false;
  }
  m.impact = overall_impact(rows, baseline);
  return m;
}

RankMatrix make_ranks(std::vector<std::string> methods, std::vector<std::string> benchmarks,
                      std::vector<std::vector<double>> values) {
  const std::size_t k = methods.size();
  if (k == 0) throw ParameterError("ranking needs at least one method");
  if (values.size() != benchmarks.size())
    throw ParameterError("one value row per benchmark required");
  for (const auto& row : values)
    if (row.size() != k) throw ParameterError("value row width must match method count");

  RankMatrix rm;
  rm.methods = std::move(methods);
  rm.benchmarks = std::move(benchmarks);
  rm.values = std::move(values);
  rm.ranks.assign(rm.values.size(), std::vector<double>(k, 0.0));
  for (std::size_t r = 0; r < rm.values.size(); ++r) {
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return rm.values[r][x] > rm.values[r][y];
    });
    // Equal values share the average of the ranks they span.
    std::size_t i = 0;
    while (i < k) {
      std::size_t j = i;
      while (j + 1 < k && rm.values[r][order[j + 1]] == rm.values[r][order[i]]) ++j;
      const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
      for (std::size_t t = i; t <= j; ++t) rm.ranks[r][order[t]] = avg;
      i = j + 1;
    }
  }
  rm.mean_ranks.assign(k, 0.0);
  for (const auto& row : rm.ranks)
    for (std::size_t j = 0; j < k; ++j) rm.mean_ranks[j] += row[j];
  for (double& v : rm.mean_ranks) v /= static_cast<double>(std::max<std::size_t>(1, rm.ranks.size()));
  return rm;
}

FriedmanResult friedman(const RankMatrix& rm) {
  const std::size_t k = rm.methods.size();
  const std::size_t n = rm.benchmarks.size();
  if (k < 2) throw ParameterError("friedman needs at least two methods");
  if (n < 2) throw ParameterError("friedman needs at least two benchmarks");
  double sumsq = 0.0;
  for (double r : rm.mean_ranks) sumsq += r * r;
  const double kk = static_cast<double>(k);
  double chi2 = 12.0 * static_cast<double>(n) / (kk * (kk + 1.0)) *
                (sumsq - kk * (kk + 1.0) * (kk + 1.0) / 4.0);
  if (chi2 < 0.0) chi2 = 0.0;  // guard fp residue in the degenerate case
  FriedmanResult res;
  res.chi2 = chi2;
  res.df = k - 1;
  res.p = chi2_sf(chi2, static_cast<double>(k - 1));
  return res;
}

double nemenyi_cd(std::size_t k, std::size_t n_benchmarks, double alpha) {
  if (alpha != 0.05)
    throw ParameterError("only the 95% confidence critical values are embedded");
  if (k < 2 || k > 10)
    throw ParameterError("critical-difference table covers 2 to 10 methods");
  if (n_benchmarks < 2) throw ParameterError("critical difference needs at least two benchmarks");
  static const double q05[11] = {0.0,   0.0,   1.960, 2.343, 2.569, 2.728,
                                 2.850, 2.949, 3.031, 3.102, 3.164};
  const double kk = static_cast<double>(k);
  return q05[k] * std::sqrt(kk * (kk + 1.0) / (6.0 * static_cast<double>(n_benchmarks)));
}

CdDiagram cd_diagram(const RankMatrix& rm, double cd) {
  const std::size_t k = rm.methods.size();
  if (k == 0) throw ParameterError("diagram needs at least one method");
  if (rm.mean_ranks.size() != k) throw ParameterError("mean ranks missing");

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rm.mean_ranks[a] < rm.mean_ranks[b];
  });

  // Maximal groups of consecutive methods whose rank spread stays below cd.
  CdDiagram out;
  std::size_t prev_end = 0;
  bool have_prev = false;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i;
    while (j + 1 < k && rm.mean_ranks[order[j + 1]] - rm.mean_ranks[order[i]] < cd) ++j;
    if (j > i && (!have_prev || j > prev_end)) {
      std::vector<std::size_t> g;
      for (std::size_t t = i; t <= j; ++t) g.push_back(order[t]);
      out.groups.push_back(std::move(g));
      prev_end = j;
      have_prev = true;
    }
  }

  // Plain-text rendering.
  std::ostringstream txt;
  txt << "mean ranks (1 = best)\n";
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t m = order[i];
    txt << "  " << fmt("%8.4f", rm.mean_ranks[m]) << "  " << rm.methods[m] << "\n";
  }
  txt << "critical difference = " << fmt("%.4f", cd) << "\n";
  txt << "groups within the critical difference:\n";
  if (out.groups.empty()) {
    txt << "  none\n";
  } else {
    for (const auto& g : out.groups) {
      txt << " ";
      for (std::size_t m : g) txt << " " << rm.methods[m];
      txt << "\n";
    }
  }
  out.txt = txt.str();

  // SVG rendering: rank axis, CD ruler, group bars, one stem per method.
  const double width = 640.0, margin = 60.0;
  const double span = width - 2.0 * margin;
  const double lo = 1.0, hi = static_cast<double>(std::max<std::size_t>(k, 2));
  const auto x_of = [&](double rank) { return margin + (rank - lo) / (hi - lo) * span; };
  const double axis_y = 70.0;
  const double bars_y = axis_y + 14.0;
  const double stem_y0 = bars_y + 10.0 * static_cast<double>(out.groups.size());
  const double height = stem_y0 + 24.0 * static_cast<double>(k) + 30.0;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt("%.0f", width)
      << "\" height=\"" << fmt("%.0f", height) << "\" viewBox=\"0 0 " << fmt("%.0f", width)
      << " " << fmt("%.0f", height) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << fmt("%.1f", margin) << "\" y=\"20\" font-family=\"monospace\" "
         "font-size=\"13\">critical difference = "
      << fmt("%.4f", cd) << "</text>\n";
  // CD ruler under the title.
  svg << "<line x1=\"" << fmt("%.2f", x_of(lo)) << "\" y1=\"32\" x2=\""
      << fmt("%.2f", x_of(std::min(hi, lo + cd))) << "\" y2=\"32\" stroke=\"black\" "
         "stroke-width=\"3\"/>\n";
  // Axis with integer ticks.
  svg << "<line x1=\"" << fmt("%.2f", x_of(lo)) << "\" y1=\"" << fmt("%.1f", axis_y)
      << "\" x2=\"" << fmt("%.2f", x_of(hi)) << "\" y2=\"" << fmt("%.1f", axis_y)
      << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  for (double t = lo; t <= hi + 1e-9; t += 1.0) {
    svg << "<line x1=\"" << fmt("%.2f", x_of(t)) << "\" y1=\"" << fmt("%.1f", axis_y - 5.0)
        << "\" x2=\"" << fmt("%.2f", x_of(t)) << "\" y2=\"" << fmt("%.1f", axis_y)
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << fmt("%.2f", x_of(t)) << "\" y=\"" << fmt("%.1f", axis_y - 9.0)
        << "\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"middle\">"
        << fmt("%.0f", t) << "</text>\n";
  }
  // Group bars.
  for (std::size_t g = 0; g < out.groups.size(); ++g) {
    const double y = bars_y + 10.0 * static_cast<double>(g);
    const double x1 = x_of(rm.mean_ranks[out.groups[g].front()]);
    const double x2 = x_of(rm.mean_ranks[out.groups[g].back()]);
    svg << "<line x1=\"" << fmt("%.2f", x1) << "\" y1=\"" << fmt("%.1f", y) << "\" x2=\""
        << fmt("%.2f", x2) << "\" y2=\"" << fmt("%.1f", y)
        << "\" stroke=\"black\" stroke-width=\"4\"/>\n";
  }
  // Stems and labels, best rank first.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t m = order[i];
    const double x = x_of(rm.mean_ranks[m]);
    const double y = stem_y0 + 24.0 * static_cast<double>(i) + 16.0;
    svg << "<line x1=\"" << fmt("%.2f", x) << "\" y1=\"" << fmt("%.1f", axis_y)
        << "\" x2=\"" << fmt("%.2f", x) << "\" y2=\"" << fmt("%.1f", y)
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << fmt("%.2f", x + 4.0) << "\" y=\"" << fmt("%.1f", y + 4.0)
        << "\" font-family=\"monospace\" font-size=\"12\">" << rm.methods[m] << " ("
        << fmt("%.3f", rm.mean_ranks[m]) << ")</text>\n";
  }
  svg << "</svg>\n";
  out.svg = svg.str();
  return out;
}

}  // namespace oodbench
