#include "mddlm/cohort/splits.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

namespace mddlm::cohort {

bool SplitPlan::in_train(const std::string& id) const {
    return std::binary_search(train_ids.begin(), train_ids.end(), id);
}

void SplitPlan::validate() const {
    std::set<std::string> train(train_ids.begin(), train_ids.end());
    std::set<std::string> test(test_ids.begin(), test_ids.end());
    if (train.size() != train_ids.size() || test.size() != test_ids.size())
        throw DataError("SplitPlan: duplicate ids");
    for (const auto& id : test_ids)
        if (train.count(id)) throw DataError("SplitPlan: train and test overlap at " + id);
    std::set<std::string> fold_union;
    size_t fold_total = 0;
    for (const auto& fold : folds) {
        fold_total += fold.size();
        for (const auto& id : fold) {
            if (!train.count(id)) throw DataError("SplitPlan: fold id outside train: " + id);
            if (!fold_union.insert(id).second)
                throw DataError("SplitPlan: id in two folds: " + id);
        }
    }
    if (fold_total != train_ids.size())
        throw DataError("SplitPlan: folds do not partition train ids");
}

SplitPlan make_splits(const Cohort& cohort, uint64_t seed, double test_fraction) {
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw ConfigError("make_splits: test_fraction outside (0,1)");
    std::vector<std::string> mdd_ids, hc_ids;
    for (const auto& r : cohort.records) {
        if (r.label == Label::MDD) mdd_ids.push_back(r.patient_id);
        if (r.label == Label::HC) hc_ids.push_back(r.patient_id);
    }
    if (mdd_ids.size() + hc_ids.size() < 10)
        throw DataError("make_splits: need at least 10 labeled records");

    SplitPlan plan;
    plan.seed = seed;
    size_t fold_offset = 0;
    for (auto* group : {&hc_ids, &mdd_ids}) {
        Rng rng(derive_seed(seed, group == &hc_ids ? "split/hc" : "split/mdd"));
        rng.shuffle(*group);
        size_t n_test = static_cast<size_t>(
            std::llround(test_fraction * static_cast<double>(group->size())));
        for (size_t i = 0; i < group->size(); ++i) {
            if (i < n_test) {
                plan.test_ids.push_back((*group)[i]);
            } else {
                plan.train_ids.push_back((*group)[i]);
                plan.folds[fold_offset % kNumFolds].push_back((*group)[i]);
                ++fold_offset;
            }
        }
        size_t n_train = group->size() - n_test;
        if (n_train < kNumFolds)
            throw DataError("make_splits: a label class has fewer than " +
                            std::to_string(kNumFolds) + " train members");
    }
    std::sort(plan.train_ids.begin(), plan.train_ids.end());
    std::sort(plan.test_ids.begin(), plan.test_ids.end());
    for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
    plan.validate();
    return plan;
}

std::string split_to_json_string(const SplitPlan& plan) {
    nlohmann::json j;
    j["seed"] = plan.seed;
    j["train_ids"] = plan.train_ids;
    j["test_ids"] = plan.test_ids;
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& fold : plan.folds) folds.push_back(fold);
    j["folds"] = std::move(folds);
    return j.dump(2);
}

SplitPlan split_from_json_string(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    SplitPlan plan;
    plan.seed = j.at("seed").get<uint64_t>();
    plan.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    plan.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    auto folds = j.at("folds");
    if (folds.size() != kNumFolds) throw DataError("split json: wrong fold count");
    for (size_t i = 0; i < kNumFolds; ++i)
        plan.folds[i] = folds[i].get<std::vector<std::string>>();
    plan.validate();
    return plan;
}

}  // namespace mddlm::cohort
