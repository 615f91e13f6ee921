#include <cmath>
#include <map>
#include <set>

#include "mddlm/baselines/baselines.hpp"
#include "mddlm/cohort/io.hpp"

namespace mddlm::baselines {

using cohort::Label;
using cohort::Value;

Featurizer Featurizer::fit(const Cohort& cohort, const std::vector<std::string>& train_ids) {
    std::set<std::string> wanted(train_ids.begin(), train_ids.end());
    Featurizer f;
    size_t offset = 0;
    for (const auto& spec : cohort.schema.features) {
        FeatureLayout fl;
        fl.name = spec.name;
        fl.numeric = spec.is_numeric();
        fl.offset = offset;
        if (fl.numeric) {
            double sum = 0, sum_sq = 0;
            size_t n = 0;
            for (const auto& r : cohort.records) {
                if (!wanted.count(r.patient_id)) continue;
                const Value& v = r.get(spec.name);
                if (v.is_missing()) continue;
                sum += v.number;
                sum_sq += v.number * v.number;
                ++n;
            }
            fl.mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
            double var = n > 1 ? (sum_sq - sum * sum / static_cast<double>(n)) /
                                     static_cast<double>(n - 1)
                               : 0.0;
            fl.sd = var > 0.0 ? std::sqrt(var) : 1.0;
            f.columns_.push_back(spec.name);
            offset += 1;
        } else {
            for (const auto& c : spec.categories) {
                fl.categories.push_back(c.code);
                f.columns_.push_back(spec.name + "=" + c.code);
            }
            offset += spec.categories.size();
        }
        f.columns_.push_back(spec.name + "__missing");
        offset += 1;
        f.layout_.push_back(std::move(fl));
    }
    f.fitted_ = true;
    return f;
}

Eigen::VectorXd Featurizer::apply(const Record& record) const {
    if (!fitted_) throw ConfigError("Featurizer::apply before fit");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim()));
    for (const auto& fl : layout_) {
        const Value& v = record.get(fl.name);
        size_t indicator = fl.offset + (fl.numeric ? 1 : fl.categories.size());
        if (v.is_missing()) {
            x(static_cast<Eigen::Index>(indicator)) = 1.0;
            continue;
        }
        if (fl.numeric) {
            x(static_cast<Eigen::Index>(fl.offset)) = (v.number - fl.mean) / fl.sd;
        } else {
            for (size_t c = 0; c < fl.categories.size(); ++c)
                if (fl.categories[c] == v.text) {
                    x(static_cast<Eigen::Index>(fl.offset + c)) = 1.0;
                    break;
                }
        }
    }
    return x;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> Featurizer::apply_all(
    const Cohort& cohort, const std::vector<std::string>& ids) const {
    std::map<std::string, const Record*> by_id;
    for (const auto& r : cohort.records) by_id[r.patient_id] = &r;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(dim()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(ids.size()));
    for (size_t i = 0; i < ids.size(); ++i) {
        auto it = by_id.find(ids[i]);
        if (it == by_id.end()) throw DataError("featurizer: id not in cohort: " + ids[i]);
        x.row(static_cast<Eigen::Index>(i)) = apply(*it->second).transpose();
        y(static_cast<Eigen::Index>(i)) = it->second->label == Label::MDD ? 1.0 : 0.0;
    }
    return {std::move(x), std::move(y)};
}

uint64_t Featurizer::digest() const {
    uint64_t h = kFnvOffset;
    for (const auto& fl : layout_) {
        h = fnv1a64(fl.name, h);
        h = fnv1a64(format_shortest(fl.mean), h);
        h = fnv1a64(format_shortest(fl.sd), h);
        for (const auto& c : fl.categories) h = fnv1a64(c, h);
    }
    return h;
}

std::string export_matrix_csv(const Featurizer& featurizer, const Cohort& cohort,
                              const std::vector<std::string>& ids) {
    auto [x, y] = featurizer.apply_all(cohort, ids);
    std::vector<std::string> header = featurizer.column_names();
    header.insert(header.begin(), "patient_id");
    header.push_back("label");
    std::string out = cohort::join_csv_line(header);
    out += '\n';
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        std::vector<std::string> cells{ids[static_cast<size_t>(i)]};
        for (Eigen::Index j = 0; j < x.cols(); ++j) cells.push_back(format_shortest(x(i, j)));
        cells.push_back(y(i) > 0.5 ? "1" : "0");
        out += cohort::join_csv_line(cells);
        out += '\n';
    }
    return out;
}

}  // namespace mddlm::baselines
