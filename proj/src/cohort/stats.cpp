#include "mddlm/cohort/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mddlm/cohort/io.hpp"
#include "mddlm/metrics/metrics.hpp"

namespace mddlm::cohort {

// ---------------------------------------------------------------------------
// Regularized incomplete gamma, P(a,x) and Q(a,x)
// ---------------------------------------------------------------------------

namespace {

constexpr int kMaxIter = 500;
constexpr double kEps = 1e-14;

double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < kMaxIter; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * kEps) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_contfrac(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kMaxIter; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
    if (a <= 0.0) throw ConfigError("gamma_p: a must be positive");
    if (x < 0.0) throw ConfigError("gamma_p: x must be non-negative");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return gamma_p_series(a, x);
    return 1.0 - gamma_q_contfrac(a, x);
}

double gamma_q(double a, double x) {
    if (a <= 0.0) throw ConfigError("gamma_q: a must be positive");
    if (x < 0.0) throw ConfigError("gamma_q: x must be non-negative");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_contfrac(a, x);
}

double chi2_sf(double x, double df) { return gamma_q(df / 2.0, x / 2.0); }

// ---------------------------------------------------------------------------
// Rank-sum and chi-square
// ---------------------------------------------------------------------------

double ranksum_p(const std::vector<double>& a, const std::vector<double>& b, bool& degenerate) {
    degenerate = false;
    size_t n1 = a.size(), n2 = b.size();
    if (n1 == 0 || n2 == 0) {
        degenerate = true;
        return 1.0;
    }
    double n = static_cast<double>(n1 + n2);

    std::vector<std::pair<double, int>> pooled;  // (value, group)
    pooled.reserve(n1 + n2);
    for (double v : a) pooled.emplace_back(v, 0);
    for (double v : b) pooled.emplace_back(v, 1);
    std::sort(pooled.begin(), pooled.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });

    // Mid-ranks over tie groups; accumulate the tie correction sum (t^3 - t).
    double rank_sum_a = 0.0;
    double tie_sum = 0.0;
    size_t i = 0;
    while (i < pooled.size()) {
        size_t j = i;
        while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
        double t = static_cast<double>(j - i);
        double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (size_t k = i; k < j; ++k)
            if (pooled[k].second == 0) rank_sum_a += mid_rank;
        tie_sum += t * t * t - t;
        i = j;
    }

    double mean = static_cast<double>(n1) * (n + 1.0) / 2.0;
    double var = static_cast<double>(n1) * static_cast<double>(n2) / 12.0 *
                 ((n + 1.0) - tie_sum / (n * (n - 1.0)));
    if (var <= 0.0) {
        degenerate = true;
        return 1.0;
    }
    double z = (std::abs(rank_sum_a - mean) - 0.5) / std::sqrt(var);
    if (z < 0.0) z = 0.0;
    double p = std::erfc(z / std::sqrt(2.0));
    return std::min(1.0, p);
}

double chi2_p(const std::vector<std::vector<size_t>>& table, bool& degenerate) {
    degenerate = false;
    size_t rows = table.size();
    if (rows < 2) {
        degenerate = true;
        return 1.0;
    }
    size_t cols = table[0].size();
    for (const auto& row : table)
        if (row.size() != cols) throw DataError("chi2_p: ragged table");

    std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
    double total = 0.0;
    for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < cols; ++c) {
            double v = static_cast<double>(table[r][c]);
            row_sum[r] += v;
            col_sum[c] += v;
            total += v;
        }
    size_t nonzero_rows = 0, nonzero_cols = 0;
    for (double v : row_sum) nonzero_rows += v > 0.0;
    for (double v : col_sum) nonzero_cols += v > 0.0;
    if (total == 0.0 || nonzero_rows < 2 || nonzero_cols < 2) {
        degenerate = true;
        return 1.0;
    }

    double stat = 0.0;
    for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < cols; ++c) {
            double e = row_sum[r] * col_sum[c] / total;
            if (e <= 0.0) continue;
            double o = static_cast<double>(table[r][c]);
            stat += (o - e) * (o - e) / e;
        }
    double df = static_cast<double>((nonzero_rows - 1) * (nonzero_cols - 1));
    return chi2_sf(stat, df);
}

// ---------------------------------------------------------------------------
// Baseline table
// ---------------------------------------------------------------------------

BaselineTable baseline_table(const Cohort& cohort) {
    cohort.validate();
    BaselineTable table;
    table.n_hc = cohort.count_label(Label::HC);
    table.n_mdd = cohort.count_label(Label::MDD);
    if (table.n_hc == 0 || table.n_mdd == 0)
        throw DataError("baseline_table: need at least one record per label group");

    for (const auto& f : cohort.schema.features) {
        BaselineRow row;
        row.feature = f.name;
        row.kind = f.kind;
        if (f.is_numeric()) {
            std::vector<double> hc_vals, mdd_vals;
            for (const auto& r : cohort.records) {
                if (r.label == Label::Unlabeled) continue;
                const Value& v = r.get(f.name);
                if (v.is_missing()) continue;
                (r.label == Label::HC ? hc_vals : mdd_vals).push_back(v.number);
            }
            auto quartiles = [](const std::vector<double>& vals) {
                GroupQuartiles g;
                g.n = vals.size();
                if (!vals.empty()) {
                    g.median = metrics::quantile(vals, 0.5);
                    g.q1 = metrics::quantile(vals, 0.25);
                    g.q3 = metrics::quantile(vals, 0.75);
                }
                return g;
            };
            row.hc = quartiles(hc_vals);
            row.mdd = quartiles(mdd_vals);
            std::vector<double> all = hc_vals;
            all.insert(all.end(), mdd_vals.begin(), mdd_vals.end());
            std::sort(all.begin(), all.end());
            bool single_value = !all.empty() && all.front() == all.back();
            if (single_value) {
                row.p_value = 1.0;
                row.degenerate = true;
            } else {
                row.p_value = ranksum_p(hc_vals, mdd_vals, row.degenerate);
            }
        } else {
            std::vector<CategoryCount> counts;
            for (const auto& c : f.categories) counts.push_back({c.code, 0, 0});
            CategoryCount missing{"Missing", 0, 0};
            for (const auto& r : cohort.records) {
                if (r.label == Label::Unlabeled) continue;
                const Value& v = r.get(f.name);
                size_t* slot = nullptr;
                if (v.is_missing()) {
                    slot = r.label == Label::HC ? &missing.hc : &missing.mdd;
                } else {
                    for (auto& cc : counts)
                        if (cc.category == v.text) {
                            slot = r.label == Label::HC ? &cc.hc : &cc.mdd;
                            break;
                        }
                }
                if (slot) ++*slot;
            }
            // Chi-square over non-missing categories only.
            std::vector<std::vector<size_t>> contingency(2);
            for (const auto& cc : counts) {
                contingency[0].push_back(cc.hc);
                contingency[1].push_back(cc.mdd);
            }
            row.p_value = chi2_p(contingency, row.degenerate);
            row.counts = std::move(counts);
            if (missing.hc + missing.mdd > 0) row.counts.push_back(missing);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

namespace {
std::string fmt_val(double v) {
    // Trim to at most 4 decimals without trailing zeros.
    std::string s = format_fixed(v, 4);
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

std::string fmt_p(double p, bool degenerate) {
    if (degenerate) return fmt_val(p) + " (degenerate)";
    if (p < 0.001) return "< 0.001";
    return fmt_val(p);
}
}  // namespace

std::string baseline_to_csv(const BaselineTable& table) {
    std::ostringstream os;
    os << "characteristic,HC (n = " << table.n_hc << "),MDD (n = " << table.n_mdd
       << "),P value\n";
    for (const auto& row : table.rows) {
        if (row.kind == FeatureKind::Numeric) {
            std::vector<std::string> cells{
                row.feature,
                fmt_val(row.hc.median) + " (" + fmt_val(row.hc.q1) + " - " + fmt_val(row.hc.q3) +
                    ")",
                fmt_val(row.mdd.median) + " (" + fmt_val(row.mdd.q1) + " - " +
                    fmt_val(row.mdd.q3) + ")",
                fmt_p(row.p_value, row.degenerate)};
            os << join_csv_line(cells) << "\n";
        } else {
            os << join_csv_line({row.feature + " (%)", "", "", fmt_p(row.p_value, row.degenerate)})
               << "\n";
            for (const auto& cc : row.counts) {
                auto pct = [](size_t count, size_t total) {
                    return total == 0 ? std::string("0")
                                      : fmt_val(100.0 * static_cast<double>(count) /
                                                static_cast<double>(total));
                };
                std::vector<std::string> cells{
                    "  " + cc.category,
                    std::to_string(cc.hc) + " (" + pct(cc.hc, table.n_hc) + ")",
                    std::to_string(cc.mdd) + " (" + pct(cc.mdd, table.n_mdd) + ")", ""};
                os << join_csv_line(cells) << "\n";
            }
        }
    }
    return os.str();
}

}  // namespace mddlm::cohort
