#include "mddlm/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mddlm::metrics {

void ScoredSet::validate() const {
    if (scores.size() != labels.size()) throw DataError("ScoredSet: length mismatch");
    if (!patient_ids.empty() && patient_ids.size() != scores.size())
        throw DataError("ScoredSet: patient_ids length mismatch");
    for (double s : scores)
        if (!std::isfinite(s)) throw DataError("ScoredSet: non-finite score");
    for (int l : labels)
        if (l != 0 && l != 1) throw DataError("ScoredSet: label outside {0,1}");
}

size_t ScoredSet::positives() const {
    return static_cast<size_t>(std::count(labels.begin(), labels.end(), 1));
}

ConfusionCounts confusion(const ScoredSet& set, double threshold) {
    set.validate();
    if (set.size() == 0) throw DataError("confusion: empty set");
    ConfusionCounts c;
    for (size_t i = 0; i < set.size(); ++i) {
        bool pred = set.scores[i] >= threshold;
        if (set.labels[i] == 1) {
            pred ? ++c.tp : ++c.fn;
        } else {
            pred ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

namespace {
double safe_ratio(int64_t num, int64_t den, bool& degenerate) {
    if (den == 0) {
        degenerate = true;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

SummaryStats summarize(const ConfusionCounts& c) {
    if (c.tp < 0 || c.fp < 0 || c.tn < 0 || c.fn < 0)
        throw DataError("summarize: negative count");
    if (c.total() == 0) throw DataError("summarize: empty counts");
    SummaryStats s;
    s.acc = safe_ratio(c.tp + c.tn, c.total(), s.degenerate);
    s.sens = safe_ratio(c.tp, c.tp + c.fn, s.degenerate);
    s.spe = safe_ratio(c.tn, c.tn + c.fp, s.degenerate);
    s.ppv = safe_ratio(c.tp, c.tp + c.fp, s.degenerate);
    s.npv = safe_ratio(c.tn, c.tn + c.fn, s.degenerate);
    if (s.ppv + s.sens > 0.0) {
        s.f1 = 2.0 * s.ppv * s.sens / (s.ppv + s.sens);
    } else {
        s.f1 = 0.0;
        s.degenerate = true;
    }
    return s;
}

std::pair<RocCurve, double> roc_auc(const ScoredSet& set) {
    set.validate();
    size_t n_pos = set.positives();
    size_t n_neg = set.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("roc_auc: both classes required");

    std::vector<size_t> order(set.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return set.scores[a] > set.scores[b]; });

    RocCurve curve;
    curve.fpr.push_back(0.0);
    curve.tpr.push_back(0.0);
    double auc = 0.0;
    size_t tp = 0, fp = 0;
    size_t i = 0;
    while (i < order.size()) {
        // Consume the whole tie group at this score in one sweep step.
        double s = set.scores[order[i]];
        size_t tie_pos = 0, tie_neg = 0;
        while (i < order.size() && set.scores[order[i]] == s) {
            set.labels[order[i]] == 1 ? ++tie_pos : ++tie_neg;
            ++i;
        }
        double fpr0 = static_cast<double>(fp) / n_neg;
        double tpr0 = static_cast<double>(tp) / n_pos;
        tp += tie_pos;
        fp += tie_neg;
        double fpr1 = static_cast<double>(fp) / n_neg;
        double tpr1 = static_cast<double>(tp) / n_pos;
        auc += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0;
        curve.fpr.push_back(fpr1);
        curve.tpr.push_back(tpr1);
    }
    return {std::move(curve), auc};
}

double auc_oracle(const ScoredSet& set) {
    set.validate();
    size_t n_pos = set.positives();
    size_t n_neg = set.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("auc_oracle: both classes required");
    double concordant = 0.0;
    for (size_t i = 0; i < set.size(); ++i) {
        if (set.labels[i] != 1) continue;
        for (size_t j = 0; j < set.size(); ++j) {
            if (set.labels[j] != 0) continue;
            if (set.scores[i] > set.scores[j])
                concordant += 1.0;
            else if (set.scores[i] == set.scores[j])
                concordant += 0.5;
        }
    }
    return concordant / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw DataError("quantile: empty vector");
    if (p < 0.0 || p > 1.0) throw ConfigError("quantile: p outside [0,1]");
    std::sort(v.begin(), v.end());
    double h = (static_cast<double>(v.size()) - 1.0) * p;
    size_t lo = static_cast<size_t>(std::floor(h));
    size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = h - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

BootstrapCi bootstrap_ci(const ScoredSet& set,
                         const std::function<double(const ScoredSet&)>& statistic,
                         int n_resamples, double level, uint64_t seed) {
    set.validate();
    if (set.size() == 0) throw DataError("bootstrap_ci: empty set");
    if (n_resamples < 1) throw ConfigError("bootstrap_ci: n_resamples must be >= 1");
    if (level <= 0.0 || level >= 1.0) throw ConfigError("bootstrap_ci: level outside (0,1)");

    std::vector<size_t> pos_idx, neg_idx;
    for (size_t i = 0; i < set.size(); ++i)
        (set.labels[i] == 1 ? pos_idx : neg_idx).push_back(i);

    const int kMaxRedraws = 100;
    BootstrapCi ci;
    ci.level = level;
    std::vector<double> stats;
    stats.reserve(static_cast<size_t>(n_resamples));
    bool has_ids = !set.patient_ids.empty();
    for (int r = 0; r < n_resamples; ++r) {
        uint64_t sub_seed = derive_seed(seed, static_cast<uint64_t>(r));
        for (int attempt = 0;; ++attempt) {
            Rng rng(sub_seed);
            ScoredSet resample;
            auto draw = [&](const std::vector<size_t>& pool) {
                for (size_t k = 0; k < pool.size(); ++k) {
                    size_t i = pool[rng.uniform_int(pool.size())];
                    resample.push(set.scores[i], set.labels[i],
                                  has_ids ? set.patient_ids[i] : "");
                }
            };
            draw(pos_idx);
            draw(neg_idx);
            try {
                stats.push_back(statistic(resample));
                break;
            } catch (const std::exception&) {
                if (attempt >= kMaxRedraws)
                    throw DataError("bootstrap_ci: statistic undefined after max redraws");
                ++ci.redrawn;
                sub_seed = derive_seed(sub_seed, "redraw");
            }
        }
    }
    double alpha = 1.0 - level;
    ci.lo = quantile(stats, alpha / 2.0);
    ci.hi = quantile(stats, 1.0 - alpha / 2.0);
    return ci;
}

namespace {
template <typename F>
MetricReport map_reports(const std::vector<MetricReport>& reports, F f) {
    MetricReport out;
    out.acc = f([](const MetricReport& r) { return r.acc; });
    out.f1 = f([](const MetricReport& r) { return r.f1; });
    out.auc = f([](const MetricReport& r) { return r.auc; });
    out.spe = f([](const MetricReport& r) { return r.spe; });
    out.sens = f([](const MetricReport& r) { return r.sens; });
    out.ppv = f([](const MetricReport& r) { return r.ppv; });
    out.npv = f([](const MetricReport& r) { return r.npv; });
    out.n = reports.empty() ? 0 : reports.front().n;
    return out;
}
}  // namespace

CrossvalSummary crossval_aggregate(const std::vector<MetricReport>& per_fold) {
    if (per_fold.empty()) throw DataError("crossval_aggregate: no folds");
    CrossvalSummary summary;
    summary.folds = per_fold;
    double k = static_cast<double>(per_fold.size());
    auto mean_of = [&](auto get) {
        double m = 0;
        for (const auto& r : per_fold) m += get(r);
        return m / k;
    };
    summary.mean = map_reports(per_fold, [&](auto get) { return mean_of(get); });
    summary.mean.threshold = per_fold.front().threshold;
    summary.mean.auc_ci.level = per_fold.front().auc_ci.level;
    summary.mean.auc_ci.lo = mean_of([](const MetricReport& r) { return r.auc_ci.lo; });
    summary.mean.auc_ci.hi = mean_of([](const MetricReport& r) { return r.auc_ci.hi; });
    size_t total_n = 0;
    for (const auto& r : per_fold) total_n += r.n;
    summary.mean.n = total_n;
    if (per_fold.size() > 1) {
        summary.sd = map_reports(per_fold, [&](auto get) {
            double m = mean_of(get);
            double ss = 0;
            for (const auto& r : per_fold) ss += (get(r) - m) * (get(r) - m);
            return std::sqrt(ss / (k - 1.0));
        });
    }
    return summary;
}

MetricReport evaluate(const ScoredSet& set, double threshold, int bootstrap_resamples,
                      double ci_level, uint64_t seed) {
    MetricReport report;
    report.threshold = threshold;
    report.n = set.size();
    SummaryStats s = summarize(confusion(set, threshold));
    report.acc = s.acc;
    report.f1 = s.f1;
    report.spe = s.spe;
    report.sens = s.sens;
    report.ppv = s.ppv;
    report.npv = s.npv;
    report.degenerate = s.degenerate;
    report.auc = roc_auc(set).second;
    report.auc_ci = bootstrap_ci(
        set, [](const ScoredSet& r) { return roc_auc(r).second; }, bootstrap_resamples,
        ci_level, seed);
    return report;
}

double youden_threshold(const ScoredSet& set) {
    set.validate();
    std::vector<double> candidates = set.scores;
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    double best_t = 0.5, best_j = -2.0;
    for (double t : candidates) {
        SummaryStats s = summarize(confusion(set, t));
        double j = s.sens + s.spe - 1.0;
        if (j > best_j + 1e-15) {
            best_j = j;
            best_t = t;
        }
    }
    return best_t;
}

std::string to_text(const MetricReport& r, const std::string& title) {
    std::ostringstream os;
    if (!title.empty()) os << title << "\n";
    os << "n " << r.n << "\n";
    os << "threshold " << format_fixed(r.threshold, 4) << "\n";
    os << "acc " << format_fixed(r.acc, 4) << "\n";
    os << "f1 " << format_fixed(r.f1, 4) << "\n";
    os << "auc " << format_fixed(r.auc, 4) << " (" << format_fixed(r.auc_ci.level * 100, 0)
       << "% CI: " << format_fixed(r.auc_ci.lo, 4) << " - " << format_fixed(r.auc_ci.hi, 4)
       << ")\n";
    os << "spe " << format_fixed(r.spe, 4) << "\n";
    os << "sens " << format_fixed(r.sens, 4) << "\n";
    os << "ppv " << format_fixed(r.ppv, 4) << "\n";
    os << "npv " << format_fixed(r.npv, 4) << "\n";
    if (r.degenerate) os << "degenerate 1\n";
    return os.str();
}

std::string to_json_string(const MetricReport& r) {
    nlohmann::json j{{"n", r.n},
                     {"threshold", r.threshold},
                     {"acc", r.acc},
                     {"f1", r.f1},
                     {"auc", r.auc},
                     {"auc_ci", {{"lo", r.auc_ci.lo}, {"hi", r.auc_ci.hi}, {"level", r.auc_ci.level}, {"redrawn", r.auc_ci.redrawn}}},
                     {"spe", r.spe},
                     {"sens", r.sens},
                     {"ppv", r.ppv},
                     {"npv", r.npv},
                     {"degenerate", r.degenerate}};
    return j.dump(2);
}

MetricReport report_from_json_string(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    MetricReport r;
    r.n = j.at("n").get<size_t>();
    r.threshold = j.at("threshold").get<double>();
    r.acc = j.at("acc").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.auc = j.at("auc").get<double>();
    r.auc_ci.lo = j.at("auc_ci").at("lo").get<double>();
    r.auc_ci.hi = j.at("auc_ci").at("hi").get<double>();
    r.auc_ci.level = j.at("auc_ci").at("level").get<double>();
    r.auc_ci.redrawn = j.at("auc_ci").at("redrawn").get<int>();
    r.spe = j.at("spe").get<double>();
    r.sens = j.at("sens").get<double>();
    r.ppv = j.at("ppv").get<double>();
    r.npv = j.at("npv").get<double>();
    r.degenerate = j.value("degenerate", false);
    return r;
}

std::string roc_to_csv(const RocCurve& curve) {
    std::ostringstream os;
    os << "fpr,tpr\n";
    for (size_t i = 0; i < curve.fpr.size(); ++i)
        os << format_shortest(curve.fpr[i]) << "," << format_shortest(curve.tpr[i]) << "\n";
    return os.str();
}

}  // namespace mddlm::metrics
