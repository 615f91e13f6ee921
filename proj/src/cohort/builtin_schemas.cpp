#include "mddlm/cohort/schema.hpp"

namespace mddlm::cohort {

namespace {

FeatureSpec numeric(std::string name, std::string phrase, std::string list_label,
                    std::string unit = "", std::string list_suffix = "") {
    FeatureSpec f;
    f.name = std::move(name);
    f.kind = FeatureKind::Numeric;
    f.phrase = std::move(phrase);
    f.list_label = std::move(list_label);
    f.unit = std::move(unit);
    f.list_suffix = std::move(list_suffix);
    return f;
}

FeatureSpec categorical(std::string name, std::string list_label,
                        std::vector<CategorySpec> categories,
                        FeatureKind kind = FeatureKind::Categorical) {
    FeatureSpec f;
    f.name = std::move(name);
    f.kind = kind;
    f.list_label = std::move(list_label);
    f.categories = std::move(categories);
    return f;
}

Schema lipids_tail(Schema s) {
    s.features.push_back(
        numeric("hdl_cholesterol", "the hdl cholesterol is {v} mmol/l", "HDLC", "mmol/l"));
    s.features.push_back(numeric("cldl_cholesterol", "the clinical ldl cholesterol is {v} mmol/l",
                                 "CLDLC", "mmol/l"));
    s.features.push_back(
        numeric("triglycerides", "the triglycerides is {v} mmol/l", "TG", "mmol/l"));
    s.features.push_back(
        numeric("total_cholesterol", "the total cholesterol is {v} mmol/l", "TC", "mmol/l"));
    return s;
}

}  // namespace

namespace builtin {

Schema uk16() {
    Schema s;
    s.name = "uk16";
    s.features.push_back(numeric("age", "Age is {v}", "Age", "years"));
    s.features.push_back(categorical("sex", "Sex",
                                     {{"female", "female", "sex is female"},
                                      {"male", "male", "sex is male"}}));
    s.features.push_back(
        numeric("bmi", "body mass index (BMI) is {v} kg/m²", "BMI", "kg/m²"));
    s.features.push_back(categorical("sleeplessness", "Sleepless",
                                     {{"usually", "usually", "usually sleeplessness"},
                                      {"sometimes", "sometimes", "sometimes sleeplessness"},
                                      {"never", "never", "never sleeplessness"}}));
    s.features.push_back(
        numeric("sleep_duration", "sleep time is {v} hours", "Sleep Times", "hours", " hours"));
    s.features.push_back(categorical("alcohol_freq", "Drink",
                                     {{"usually", "usually", "usually drink alcohol"},
                                      {"sometimes", "sometimes", "sometimes drink alcohol"},
                                      {"never", "never", "never drink alcohol"}}));
    s.features.push_back(categorical(
        "self_harm", "Self-harmed",
        {{"yes", "yes", "has self-harmed"},
         {"no", "no", "never self-harmed"},
         {"not_answer", "not answer", "prefer not to answer about self-harm"}}));
    s.features.push_back(
        categorical("employment", "Employment",
                    {{"employed", "employed", "the employment status is employed"},
                     {"not_employed", "not employed", "the employment status is not employed"},
                     {"other", "other", "the employment status is other"}}));
    s.features.push_back(categorical("income", "Income",
                                     {{"low", "low", "the income is low"},
                                      {"medium", "medium", "the income is medium"},
                                      {"high", "high", "the income is high"}},
                                     FeatureKind::Ordinal));
    s.features.push_back(
        numeric("work_hours", "work {v} hours per week", "Work Times", "h/week", " h / week"));
    s.features.push_back(
        categorical("education", "Education",
                    {{"low", "low", "the education level is low"},
                     {"intermediate", "intermediate", "the education level is intermediate"},
                     {"high", "high", "the education level is high"}},
                    FeatureKind::Ordinal));
    s.features.push_back(categorical("longstanding_illness", "Illness",
                                     {{"yes", "yes", "has long-standing illness"},
                                      {"no", "no", "not has long-standing illness"}}));
    return lipids_tail(std::move(s));
}

Schema worked_example() {
    Schema s;
    s.name = "worked_example";
    s.features.push_back(numeric("age", "Age is {v}", "Age", "years"));
    s.features.push_back(categorical("sex", "Sex",
                                     {{"female", "female", "sex is female"},
                                      {"male", "male", "sex is male"}}));
    s.features.push_back(
        numeric("bmi", "body mass index (BMI) is {v} kg/m²", "BMI", "kg/m²"));
    s.features.push_back(categorical("sleeplessness", "Sleepless",
                                     {{"Usually", "Usually", "usually sleeplessness"},
                                      {"Sometime", "Sometime", "sometimes sleeplessness"},
                                      {"Never", "Never", "never sleeplessness"}}));
    s.features.push_back(
        numeric("sleep_duration", "sleep time is {v} hours", "Sleep Times", "hours", " hours"));
    s.features.push_back(
        categorical("alcohol_freq", "Drink",
                    {{"3/week", "3/week", "drink alcohol three times a week"},
                     {"Never", "Never", "never drink alcohol"}}));
    s.features.push_back(categorical("self_harm", "Self-harmed",
                                     {{"Never", "Never", "never self-harmed"},
                                      {"Yes", "Yes", "has self-harmed"}}));
    s.features.push_back(categorical(
        "employment", "Employment",
        {{"Paid", "Paid", "the employment status is in paid employment"},
         {"Unemployed", "Unemployed", "the employment status is unemployed"}}));
    s.features.push_back(numeric("income", "the income is {v} pound", "Income", "pound"));
    s.features.push_back(
        numeric("work_hours", "work {v} hours per week", "Work Times", "h/week", " h / week"));
    s.features.push_back(categorical("education", "Education",
                                     {{"O Level", "O Level", "the education is o levels"},
                                      {"A Level", "A Level", "the education is a levels"}}));
    s.features.push_back(categorical("longstanding_illness", "Illness",
                                     {{"No", "No", "not has long-standing illness"},
                                      {"Yes", "Yes", "has long-standing illness"}}));
    return lipids_tail(std::move(s));
}

Schema figure3() {
    Schema s;
    s.name = "figure3";
    s.text_suffix = ".";
    s.features.push_back(numeric("age", "Age is {v}", "Age", "years"));
    {
        // The figure runs the age and sex fragments together without a space.
        FeatureSpec sex = categorical("sex", "Sex",
                                      {{"male", "male", "sex is male"},
                                       {"female", "female", "sex is female"}});
        sex.text_sep = ",";
        s.features.push_back(std::move(sex));
    }
    s.features.push_back(
        numeric("bmi", "body mass index (bmi) is {v} kg/m²", "", "kg/m²"));
    s.features.push_back(categorical("sleeplessness", "Sleepless",
                                     {{"usually", "usually", "usually sleeplessness"},
                                      {"sometime", "sometime", "sometimes sleeplessness"},
                                      {"never", "never", "never sleeplessness"}}));
    s.features.push_back(
        numeric("sleep_duration", "sleep time is {v} hours", "Sleep Times", "hours", " hours"));
    s.features.push_back(
        categorical("alcohol_freq", "Dring",
                    {{"4 / week", "4 / week", "drink alcohol three or four times a week"},
                     {"never", "never", "never drink alcohol"}}));
    s.features.push_back(categorical("self_harm", "Self-harmed",
                                     {{"never", "never", "never self-harmed"},
                                      {"yes", "yes", "has self-harmed"}}));
    s.features.push_back(categorical(
        "employment", "Employment",
        {{"paid", "paid", "the employment status is in paid employment or self-employed"}}));
    s.features.push_back(categorical(
        "income", "Income", {{"18,000", "18,000", "the income is less than 18,000 dollar"}}));
    s.features.push_back(
        numeric("work_hours", "work {v} hours per week", "Work Times", "h/week", " h / week"));
    s.features.push_back(categorical(
        "education", "Education",
        {{"A level", "A level", "the education is a levels/as levels or equivalent"}}));
    s.features.push_back(categorical("longstanding_illness", "",
                                     {{"no", "no", "not has long-standing illness"},
                                      {"yes", "yes", "has long-standing illness"}}));
    s = lipids_tail(std::move(s));
    s.list_order = {"age",        "sex",        "sleeplessness",  "sleep_duration",
                    "alcohol_freq", "self_harm", "employment",     "work_hours",
                    "education",  "income",     "hdl_cholesterol", "cldl_cholesterol",
                    "triglycerides", "total_cholesterol"};
    return s;
}

Schema figure3_corrected() {
    Schema s = figure3();
    s.name = "figure3_corrected";
    for (auto& f : s.features) {
        if (f.name == "alcohol_freq") f.list_label = "Drink";
        if (f.name == "sleeplessness")
            for (auto& c : f.categories)
                if (c.code == "sometime") c.list_text = "sometimes";
    }
    return s;
}

Schema by_name(const std::string& name) {
    if (name == "uk16") return uk16();
    if (name == "worked_example") return worked_example();
    if (name == "figure3") return figure3();
    if (name == "figure3_corrected") return figure3_corrected();
    throw ConfigError("unknown builtin schema: " + name);
}

std::vector<std::string> names() {
    return {"uk16", "worked_example", "figure3", "figure3_corrected"};
}

}  // namespace builtin

namespace fixtures {

Record worked_example_record() {
    Record r;
    r.patient_id = "table2-example";
    r.label = Label::MDD;
    r.set("age", Value::numeric(60, "60"));
    r.set("sex", Value::category("female"));
    r.set("bmi", Value::numeric(24.5018, "24.5018"));
    r.set("sleeplessness", Value::category("Sometime"));
    r.set("sleep_duration", Value::numeric(6, "6"));
    r.set("alcohol_freq", Value::category("3/week"));
    r.set("self_harm", Value::category("Never"));
    r.set("employment", Value::category("Paid"));
    r.set("income", Value::numeric(45000, "45000"));
    r.set("work_hours", Value::numeric(38, "38"));
    r.set("education", Value::category("O Level"));
    r.set("longstanding_illness", Value::category("No"));
    r.set("hdl_cholesterol", Value::numeric(2.075, "2.075"));
    r.set("cldl_cholesterol", Value::numeric(2.6077, "2.6077"));
    r.set("triglycerides", Value::numeric(1.334, "1.334"));
    r.set("total_cholesterol", Value::numeric(4.7848, "4.7848"));
    return r;
}

Record figure3_record() {
    Record r;
    r.patient_id = "figure3-example";
    r.label = Label::Unlabeled;
    r.set("age", Value::numeric(47, "47"));
    r.set("sex", Value::category("male"));
    r.set("bmi", Value::numeric(29.7973, "29.7973"));
    r.set("sleeplessness", Value::category("sometime"));
    r.set("sleep_duration", Value::numeric(9, "9"));
    r.set("alcohol_freq", Value::category("4 / week"));
    r.set("self_harm", Value::category("never"));
    r.set("employment", Value::category("paid"));
    r.set("income", Value::category("18,000"));
    r.set("work_hours", Value::numeric(17, "17"));
    r.set("education", Value::category("A level"));
    r.set("longstanding_illness", Value::category("no"));
    r.set("hdl_cholesterol", Value::numeric(1.507, "1.507"));
    r.set("cldl_cholesterol", Value::numeric(2.3299, "2.3299"));
    r.set("triglycerides", Value::numeric(1.038, "1.038"));
    r.set("total_cholesterol", Value::numeric(4.7086, "4.7086"));
    return r;
}

}  // namespace fixtures

}  // namespace mddlm::cohort
