#include "mddlm/cohort/synth.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace mddlm::cohort {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

const FeatureGen& gen_for(const GeneratorConfig& config, const std::string& name) {
    auto it = config.features.find(name);
    if (it == config.features.end())
        throw ConfigError("generator config missing feature " + name);
    return it->second;
}

/// Draws one feature value; returns Missing with the configured rate.
Value draw_value(const FeatureSpec& f, const FeatureGen& g, Rng& rng) {
    if (g.missing_rate > 0.0 && rng.bernoulli(g.missing_rate)) return Value::missing();
    if (f.is_numeric()) {
        double v = rng.normal(g.numeric.mean, g.numeric.sd);
        v = std::clamp(v, g.numeric.min, g.numeric.max);
        // Round through the emitted literal so the stored number is exactly
        // what a re-ingest would parse.
        std::string literal = format_fixed(v, g.numeric.decimals);
        double parsed;
        parse_double(literal, parsed);
        return Value::numeric(parsed, literal);
    }
    double u = rng.uniform();
    double acc = 0.0;
    size_t idx = f.categories.size() - 1;
    for (size_t i = 0; i < g.probs.size() && i < f.categories.size(); ++i) {
        acc += g.probs[i];
        if (u < acc) {
            idx = i;
            break;
        }
    }
    return Value::category(f.categories[idx].code);
}

double contribution(const FeatureSpec& f, const FeatureGen& g, const Value& v) {
    if (v.is_missing()) return 0.0;
    if (f.is_numeric()) {
        double sd = g.numeric.sd > 0.0 ? g.numeric.sd : 1.0;
        return g.beta * (v.number - g.numeric.mean) / sd;
    }
    for (size_t i = 0; i < f.categories.size(); ++i)
        if (f.categories[i].code == v.text)
            return i < g.beta_category.size() ? g.beta_category[i] : 0.0;
    return 0.0;
}

Record draw_record(const GeneratorConfig& config, uint64_t seed, size_t index, double intercept,
                   double& risk) {
    Rng rng(derive_seed(derive_seed(seed, "record"), index));
    Record r;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "p%06zu", index);
    r.patient_id = buf;
    double eta = intercept;
    for (const auto& f : config.schema.features) {
        const FeatureGen& g = gen_for(config, f.name);
        Value v = draw_value(f, g, rng);
        eta += contribution(f, g, v);
        r.set(f.name, std::move(v));
    }
    risk = sigmoid(eta);
    r.label = rng.bernoulli(risk) ? Label::MDD : Label::HC;
    return r;
}

}  // namespace

void GeneratorConfig::validate() const {
    schema.validate();
    if (n == 0) throw ConfigError("generator config: n must be positive");
    for (const auto& f : schema.features) {
        const FeatureGen& g = gen_for(*this, f.name);
        if (!std::isfinite(g.beta)) throw ConfigError("non-finite beta for " + f.name);
        for (double b : g.beta_category)
            if (!std::isfinite(b)) throw ConfigError("non-finite category beta for " + f.name);
        if (g.missing_rate < 0.0 || g.missing_rate >= 1.0)
            throw ConfigError("missing_rate outside [0,1) for " + f.name);
        if (f.is_numeric()) {
            if (!(g.numeric.sd >= 0.0) || !std::isfinite(g.numeric.mean))
                throw ConfigError("bad numeric marginal for " + f.name);
        } else {
            if (g.probs.size() != f.categories.size())
                throw ConfigError("category probs mismatch for " + f.name);
            double sum = 0.0;
            for (double p : g.probs) {
                if (p < 0.0) throw ConfigError("negative category prob for " + f.name);
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw ConfigError("category probs of " + f.name + " must sum to 1");
        }
    }
    if (has_intercept && !std::isfinite(intercept)) throw ConfigError("non-finite intercept");
    if (!has_intercept && (target_prevalence <= 0.0 || target_prevalence >= 1.0))
        throw ConfigError("target_prevalence outside (0,1)");
}

double oracle_score(const GeneratorConfig& config, const Record& record, double intercept) {
    double eta = intercept;
    for (const auto& f : config.schema.features)
        eta += contribution(f, gen_for(config, f.name), record.get(f.name));
    return sigmoid(eta);
}

double resolve_intercept(const GeneratorConfig& config) {
    config.validate();
    if (config.has_intercept) return config.intercept;
    // Calibrate so that the Monte Carlo mean of sigmoid(eta + b) matches the
    // target prevalence. The sample is fixed, so the result is deterministic.
    const size_t kSamples = 50000;
    std::vector<double> etas;
    etas.reserve(kSamples);
    Rng rng(derive_seed(fnv1a64(config.name), "intercept-calibration"));
    for (size_t i = 0; i < kSamples; ++i) {
        double eta = 0.0;
        for (const auto& f : config.schema.features) {
            const FeatureGen& g = gen_for(config, f.name);
            eta += contribution(f, g, draw_value(f, g, rng));
        }
        etas.push_back(eta);
    }
    auto prevalence_at = [&](double b) {
        double s = 0.0;
        for (double eta : etas) s += sigmoid(eta + b);
        return s / static_cast<double>(etas.size());
    };
    double lo = -30.0, hi = 30.0;
    for (int iter = 0; iter < 200; ++iter) {
        double mid = (lo + hi) / 2.0;
        if (prevalence_at(mid) < config.target_prevalence)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-9) break;
    }
    return (lo + hi) / 2.0;
}

Cohort synth_cohort(const GeneratorConfig& config, uint64_t seed) {
    config.validate();
    double intercept = resolve_intercept(config);
    Cohort cohort;
    cohort.schema = config.schema;
    cohort.provenance.kind = Provenance::Kind::Synthetic;
    cohort.provenance.seed = seed;
    cohort.provenance.generator = config.name;
    cohort.records.reserve(config.n);
    cohort.oracle_scores.reserve(config.n);
    for (size_t i = 0; i < config.n; ++i) {
        double risk = 0.0;
        cohort.records.push_back(draw_record(config, seed, i, intercept, risk));
        cohort.oracle_scores.push_back(risk);
    }
    cohort.validate();
    return cohort;
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

namespace {

FeatureGen numeric_gen(double mean, double sd, double min, double max, int decimals,
                       double beta = 0.0, double missing_rate = 0.0) {
    FeatureGen g;
    g.numeric = {mean, sd, min, max, decimals};
    g.beta = beta;
    g.missing_rate = missing_rate;
    return g;
}

FeatureGen category_gen(std::vector<double> probs, std::vector<double> betas = {},
                        double missing_rate = 0.0) {
    FeatureGen g;
    g.probs = std::move(probs);
    g.beta_category = std::move(betas);
    g.missing_rate = missing_rate;
    return g;
}

/// Plausible cohort marginals over the uk16 schema; betas zero.
GeneratorConfig uk16_base() {
    GeneratorConfig c;
    c.schema = builtin::uk16();
    c.features["age"] = numeric_gen(60, 8, 40, 70, 0);
    c.features["sex"] = category_gen({0.54, 0.46});
    c.features["bmi"] = numeric_gen(27.2, 4.2, 16, 50, 1);
    c.features["sleeplessness"] = category_gen({0.28, 0.47, 0.25}, {}, 0.003);
    c.features["sleep_duration"] = numeric_gen(7.1, 1.1, 3, 12, 0);
    c.features["alcohol_freq"] = category_gen({0.20, 0.715, 0.085}, {}, 0.003);
    c.features["self_harm"] = category_gen({0.05, 0.93, 0.02}, {}, 0.0);
    c.features["employment"] = category_gen({0.57, 0.414, 0.016}, {}, 0.006);
    c.features["income"] = category_gen({0.23, 0.72, 0.05}, {}, 0.0);
    c.features["work_hours"] = numeric_gen(30, 14, 0, 80, 0);
    c.features["education"] = category_gen({0.17, 0.50, 0.33}, {}, 0.02);
    c.features["longstanding_illness"] = category_gen({0.3, 0.7});
    c.features["hdl_cholesterol"] = numeric_gen(1.45, 0.38, 0.4, 4.0, 2);
    c.features["cldl_cholesterol"] = numeric_gen(3.5, 0.87, 0.5, 10.0, 2);
    c.features["triglycerides"] = numeric_gen(1.75, 0.95, 0.2, 12.0, 2);
    c.features["total_cholesterol"] = numeric_gen(5.7, 1.1, 1.5, 12.0, 2);
    return c;
}

}  // namespace

GeneratorConfig synth_preset(const std::string& name) {
    GeneratorConfig c = uk16_base();
    c.name = name;
    if (name == "null") {
        c.has_intercept = true;
        c.intercept = 0.0;
        return c;
    }
    if (name == "strong-signal") {
        // Most of the log-odds variance sits on categorical features so the
        // signal survives verbalization; numerics add a moderate share.
        c.features["self_harm"].beta_category = {6.0, -1.8, 0.0};
        c.features["sleeplessness"].beta_category = {3.2, 0.0, -2.8};
        c.features["alcohol_freq"].beta_category = {1.8, 0.0, -1.4};
        c.features["employment"].beta_category = {-1.6, 2.0, 0.4};
        c.features["income"].beta_category = {1.8, 0.0, -2.0};
        c.features["education"].beta_category = {1.6, 0.0, -1.6};
        c.features["longstanding_illness"].beta_category = {2.4, -0.8};
        c.features["sex"].beta_category = {1.0, -1.0};
        c.features["age"].beta = -1.1;
        c.features["bmi"].beta = 0.7;
        c.features["sleep_duration"].beta = -0.85;
        c.features["work_hours"].beta = -0.4;
        c.features["hdl_cholesterol"].beta = -0.3;
        c.features["triglycerides"].beta = 0.3;
        c.target_prevalence = 0.5;
        return c;
    }
    if (name == "paper-analog") {
        c.features["self_harm"].beta_category = {1.4, -0.2, 0.3};
        c.features["self_harm"].missing_rate = 0.68;
        c.features["sleeplessness"].beta_category = {0.5, 0.0, -0.4};
        c.features["sex"].beta_category = {0.25, -0.25};
        c.features["age"].beta = -0.35;
        c.features["sleep_duration"].beta = -0.15;
        c.features["income"].missing_rate = 0.14;
        // 12,715 MDD out of 274,348 participants.
        c.target_prevalence = 12715.0 / 274348.0;
        return c;
    }
    throw ConfigError("unknown synth preset: " + name);
}

std::vector<std::string> synth_preset_names() { return {"strong-signal", "paper-analog", "null"}; }

// ---------------------------------------------------------------------------
// JSON round-trip
// ---------------------------------------------------------------------------

std::string generator_to_json_string(const GeneratorConfig& config) {
    nlohmann::json j;
    j["name"] = config.name;
    j["schema"] = config.schema.name;  // builtin schema reference
    j["n"] = config.n;
    if (config.has_intercept)
        j["intercept"] = config.intercept;
    else
        j["target_prevalence"] = config.target_prevalence;
    nlohmann::json feats = nlohmann::json::object();
    for (const auto& [name, g] : config.features) {
        nlohmann::json fj;
        fj["missing_rate"] = g.missing_rate;
        if (!g.probs.empty()) {
            fj["probs"] = g.probs;
            fj["beta_category"] = g.beta_category;
        } else {
            fj["mean"] = g.numeric.mean;
            fj["sd"] = g.numeric.sd;
            fj["min"] = g.numeric.min;
            fj["max"] = g.numeric.max;
            fj["decimals"] = g.numeric.decimals;
            fj["beta"] = g.beta;
        }
        feats[name] = std::move(fj);
    }
    j["features"] = std::move(feats);
    return j.dump(2);
}

GeneratorConfig generator_from_json_string(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    GeneratorConfig c;
    c.name = j.value("name", "custom");
    c.schema = builtin::by_name(j.value("schema", "uk16"));
    c.n = j.value("n", size_t{1000});
    if (j.contains("intercept")) {
        c.has_intercept = true;
        c.intercept = j.at("intercept").get<double>();
    } else {
        c.target_prevalence = j.value("target_prevalence", 0.5);
    }
    for (const auto& [name, fj] : j.at("features").items()) {
        FeatureGen g;
        g.missing_rate = fj.value("missing_rate", 0.0);
        if (fj.contains("probs")) {
            g.probs = fj.at("probs").get<std::vector<double>>();
            g.beta_category = fj.value("beta_category", std::vector<double>{});
        } else {
            g.numeric.mean = fj.value("mean", 0.0);
            g.numeric.sd = fj.value("sd", 1.0);
            g.numeric.min = fj.value("min", -1e30);
            g.numeric.max = fj.value("max", 1e30);
            g.numeric.decimals = fj.value("decimals", 0);
            g.beta = fj.value("beta", 0.0);
        }
        c.features[name] = std::move(g);
    }
    c.validate();
    return c;
}

}  // namespace mddlm::cohort
