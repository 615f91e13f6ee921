#pragma once

#include <array>
#include <string>
#include <vector>

#include "mddlm/cohort/schema.hpp"

namespace mddlm::cohort {

constexpr size_t kNumFolds = 5;

struct SplitPlan {
    std::vector<std::string> train_ids;  // sorted
    std::vector<std::string> test_ids;   // sorted
    std::array<std::vector<std::string>, kNumFolds> folds;
    uint64_t seed = 0;

    bool in_train(const std::string& id) const;
    void validate() const;
};

/// 80/20 label-stratified split of the labeled records plus five stratified
/// folds over the train side. Unlabeled records are left out. Deterministic
/// under seed.
SplitPlan make_splits(const Cohort& cohort, uint64_t seed, double test_fraction = 0.2);

std::string split_to_json_string(const SplitPlan& plan);
SplitPlan split_from_json_string(const std::string& text);

}  // namespace mddlm::cohort
