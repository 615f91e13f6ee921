#include <doctest.h>

#include <unistd.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "mddlm/backends/local.hpp"
#include "mddlm/backends/remote.hpp"

using namespace mddlm;
using namespace mddlm::backends;

namespace {

struct TempDir {
    std::string path;
    TempDir() {
        path = (std::filesystem::temp_directory_path() /
                ("mddlm-be-" + std::to_string(::getpid()) + "-" +
                 std::to_string(reinterpret_cast<uintptr_t>(this))))
                   .string();
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("classify_from_logliks hand cases and shift invariance") {
    auto even = classify_from_logliks(-1.0, -1.0, "t");
    CHECK(even.p_yes == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(even.p_yes + even.p_no == doctest::Approx(1.0).epsilon(1e-12));

    auto ninety = classify_from_logliks(std::log(0.9), std::log(0.1), "t");
    CHECK(ninety.p_yes == doctest::Approx(0.9).epsilon(1e-12));

    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        double ly = rng.normal(0, 5), ln = rng.normal(0, 5), c = rng.normal(0, 40);
        auto base = classify_from_logliks(ly, ln, "t");
        auto shifted = classify_from_logliks(ly + c, ln + c, "t");
        CHECK(std::abs(base.p_yes - shifted.p_yes) <= 1e-12);
        CHECK(std::abs(base.p_yes + base.p_no - 1.0) <= 1e-12);
    }
}

TEST_CASE("probability literal parser") {
    CHECK(parse_probability_literal("Prediction: Yes. Probability: 83%.") ==
          doctest::Approx(0.83));
    CHECK(parse_probability_literal("confidence 0.42 overall") == doctest::Approx(0.42));
    CHECK(parse_probability_literal("roughly 7 %") == doctest::Approx(0.07));
    CHECK_FALSE(parse_probability_literal("no numeric content here").has_value());
    CHECK_FALSE(parse_probability_literal("saw 12 patients").has_value());
}

// ---------------------------------------------------------------------------
// Local backend
// ---------------------------------------------------------------------------

namespace {

struct LocalSetup {
    lm::Tokenizer tokenizer;
    lm::ModelParams<double> params;
    LocalSetup()
        : tokenizer(lm::Tokenizer::build({"alpha beta gamma yes no answer maybe"})) {
        lm::ModelConfig c;
        c.layers = 2;
        c.heads = 2;
        c.embed_dim = 16;
        c.mlp_dim = 32;
        c.context_len = 32;
        c.vocab_size = static_cast<int>(tokenizer.vocab_size());
        params = lm::init_params<double>(c, 77);
    }
};

/// Independent oracle: materialize the full softmax distribution at every
/// continuation position and sum the log of the picked entries.
double brute_force_loglik(const lm::ModelParams<double>& params, const lm::Tokenizer& tok,
                          const std::string& prompt, const std::string& continuation) {
    std::vector<int> ids{lm::Tokenizer::kBos};
    for (int id : tok.encode(prompt)) ids.push_back(id);
    size_t prompt_len = ids.size();
    auto cont = tok.encode(continuation);
    for (int id : cont) ids.push_back(id);
    auto logits = lm::forward<double>(params, nullptr, ids);
    double sum = 0;
    for (size_t j = 0; j < cont.size(); ++j) {
        Eigen::Index row = static_cast<Eigen::Index>(prompt_len + j - 1);
        Eigen::VectorXd probs = logits.row(row).transpose();
        probs = (probs.array() - probs.maxCoeff()).exp();
        probs /= probs.sum();
        sum += std::log(probs(cont[j]));
    }
    return sum;
}

}  // namespace

TEST_CASE("local sequence_loglik matches the full-softmax oracle within 1e-10") {
    LocalSetup s;
    LocalBackend<double> backend(s.params, nullptr, s.tokenizer);
    for (const char* cont : {"yes", "no", "yes maybe", "alpha beta gamma"}) {
        double fast = backend.sequence_loglik("alpha beta answer", cont);
        double slow = brute_force_loglik(s.params, s.tokenizer, "alpha beta answer", cont);
        CHECK(std::abs(fast - slow) <= 1e-10);
    }
}

TEST_CASE("sequence_loglik obeys the chain rule for multi-token continuations") {
    LocalSetup s;
    LocalBackend<double> backend(s.params, nullptr, s.tokenizer);
    // p("yes maybe" | p) = p("yes" | p) * p("maybe" | p + "yes")
    double joint = backend.sequence_loglik("alpha answer", "yes maybe");
    double first = backend.sequence_loglik("alpha answer", "yes");
    double second = backend.sequence_loglik("alpha answer yes", "maybe");
    CHECK(joint == doctest::Approx(first + second).epsilon(1e-10));
}

TEST_CASE("hand-built three-token model: loglik equals the hand chain product") {
    // Vocab: specials + {a, b}; a model with a deterministic readout is
    // emulated by a 1-layer net evaluated directly; here we check against
    // the model's own softmax, computed by hand from the logits matrix.
    LocalSetup s;
    LocalBackend<double> backend(s.params, nullptr, s.tokenizer);
    std::vector<int> ids{lm::Tokenizer::kBos};
    for (int id : s.tokenizer.encode("alpha")) ids.push_back(id);
    int yes_id = s.tokenizer.id_of("yes");
    auto logits = lm::forward<double>(s.params, nullptr, ids);
    auto row = logits.row(logits.rows() - 1);
    double hand = row(yes_id) - (std::log((row.array() - row.maxCoeff()).exp().sum()) +
                                 row.maxCoeff());
    CHECK(backend.sequence_loglik("alpha", "yes") == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("classify over a local backend is deterministic and normalized") {
    LocalSetup s;
    LocalBackend<double> backend(s.params, nullptr, s.tokenizer);
    auto a = classify(backend, "alpha beta answer");
    auto b = classify(backend, "alpha beta answer");
    CHECK(a.p_yes == b.p_yes);
    CHECK(a.p_yes + a.p_no == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.source == "local");
}

TEST_CASE("classify_with_rationale keeps the likelihood score and attaches free text") {
    LocalSetup s;
    LocalBackend<double> backend(s.params, nullptr, s.tokenizer);
    auto plain = classify(backend, "alpha beta answer");
    auto with = classify_with_rationale(backend, "alpha beta answer");
    CHECK(with.score.p_yes == plain.p_yes);
    CHECK((with.rationale.prediction == "Yes" || with.rationale.prediction == "No"));
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

namespace {

class FakeTransport : public HttpTransport {
public:
    std::vector<HttpResponse> script;
    size_t calls = 0;
    std::string last_body;
    HttpResponse post(const std::string&, const std::vector<std::pair<std::string, std::string>>&,
                      const std::string& body) override {
        last_body = body;
        if (calls >= script.size()) throw IoError("fake transport: script exhausted");
        return script[calls++];
    }
};

std::string echo_response(const std::string& prompt, const std::string& continuation,
                          std::vector<double> cont_logprobs) {
    nlohmann::json logprobs;
    std::vector<nlohmann::json> token_lps;
    std::vector<size_t> offsets;
    // one fake token for the prompt region, then the continuation tokens
    token_lps.push_back(nullptr);
    offsets.push_back(0);
    size_t at = prompt.size();
    for (double lp : cont_logprobs) {
        token_lps.push_back(lp);
        offsets.push_back(at);
        at += 2;
    }
    nlohmann::json j{
        {"choices",
         {{{"text", prompt + continuation},
           {"logprobs",
            {{"tokens", nlohmann::json::array()},
             {"token_logprobs", token_lps},
             {"text_offset", offsets}}}}}}};
    return j.dump();
}

RemoteConfig fast_config(const std::string& cache_dir = "") {
    RemoteConfig rc;
    rc.endpoint = "http://fake.test/v1/completions";
    rc.model = "fake-model";
    rc.cache_dir = cache_dir;
    rc.backoff_initial_ms = 1;
    return rc;
}

}  // namespace

TEST_CASE("remote sequence_loglik sums echoed continuation logprobs") {
    auto transport = std::make_shared<FakeTransport>();
    transport->script.push_back({200, echo_response("prompt ", "Yes", {-0.2, -0.3})});
    RemoteBackend backend(fast_config(), transport);
    CHECK(backend.sequence_loglik("prompt ", "Yes") == doctest::Approx(-0.5));
    // request carries the wire-protocol fields
    auto req = nlohmann::json::parse(transport->last_body);
    CHECK(req.at("echo") == true);
    CHECK(req.at("logprobs") == true);
    CHECK(req.at("temperature") == 0);
    CHECK(req.at("max_tokens") == 0);
    CHECK(req.at("model") == "fake-model");
}

TEST_CASE("warm cache answers without any network call, bit-identically") {
    TempDir dir;
    auto transport = std::make_shared<FakeTransport>();
    transport->script.push_back({200, echo_response("p", "Yes", {-0.7})});
    transport->script.push_back({200, echo_response("p", "No", {-1.1})});
    RemoteBackend backend(fast_config(dir.path), transport);
    auto first = classify(backend, "p");
    CHECK(transport->calls == 2);
    auto second = classify(backend, "p");
    CHECK(transport->calls == 2);  // zero additional network calls
    CHECK(second.p_yes == first.p_yes);
    CHECK(second.loglik_yes == first.loglik_yes);

    // a fresh backend over the same cache dir replays identically
    auto no_net = std::make_shared<FakeTransport>();
    RemoteBackend replay(fast_config(dir.path), no_net);
    auto third = classify(replay, "p");
    CHECK(no_net->calls == 0);
    CHECK(third.p_yes == first.p_yes);
}

TEST_CASE("429 retries with backoff, then succeeds") {
    auto transport = std::make_shared<FakeTransport>();
    transport->script.push_back({429, "slow down"});
    transport->script.push_back({200, echo_response("p", "Yes", {-0.5})});
    RemoteBackend backend(fast_config(), transport);
    CHECK(backend.sequence_loglik("p", "Yes") == doctest::Approx(-0.5));
    CHECK(transport->calls == 2);
}

TEST_CASE("retry budget exhaustion and permanent 4xx") {
    auto transport = std::make_shared<FakeTransport>();
    for (int i = 0; i < 8; ++i) transport->script.push_back({503, "down"});
    auto config = fast_config();
    config.max_retries = 2;
    RemoteBackend backend(config, transport);
    CHECK_THROWS_WITH_AS(backend.sequence_loglik("p", "Yes"),
                         doctest::Contains("retry budget"), IoError);
    CHECK(transport->calls == 3);  // initial try + two retries

    auto bad = std::make_shared<FakeTransport>();
    bad->script.push_back({404, "nope"});
    RemoteBackend backend404(fast_config(), bad);
    CHECK_THROWS_WITH_AS(backend404.sequence_loglik("p", "Yes"),
                         doctest::Contains("permanent"), IoError);
    CHECK(bad->calls == 1);
}

TEST_CASE("truncated body produces a decode error naming the missing field") {
    auto transport = std::make_shared<FakeTransport>();
    transport->script.push_back({200, R"({"choices":[{"text":"x"}]})"});
    RemoteBackend backend(fast_config(), transport);
    CHECK_THROWS_WITH_AS(backend.sequence_loglik("p", "Yes"),
                         doctest::Contains("logprobs"), DataError);

    auto transport2 = std::make_shared<FakeTransport>();
    transport2->script.push_back({200, R"({"noise": 1})"});
    RemoteBackend backend2(fast_config(), transport2);
    CHECK_THROWS_WITH_AS(backend2.sequence_loglik("p", "Yes"),
                         doctest::Contains("choices"), DataError);
}

TEST_CASE("remote generate returns the completion text") {
    auto transport = std::make_shared<FakeTransport>();
    transport->script.push_back({200, R"({"choices":[{"text":"a narrative"}]})"});
    RemoteBackend backend(fast_config(), transport);
    CHECK(backend.generate("describe", 32) == "a narrative");
    auto req = nlohmann::json::parse(transport->last_body);
    CHECK(req.at("max_tokens") == 32);
}

TEST_CASE("remote backend serves the narrative client seam") {
    auto transport = std::make_shared<FakeTransport>();
    transport->script.push_back({200, R"({"choices":[{"text":"paraphrased profile"}]})"});
    auto backend = std::make_shared<RemoteBackend>(fast_config(), transport);
    RemoteNarrativeClient client(backend, "fake-model");
    CHECK(client.model_name() == "fake-model");
    CHECK(client.complete("meta prompt") == "paraphrased profile");
}

namespace {
/// Classifies fine but cannot generate: exercises the rationale failure path.
class HalfBackend : public Backend {
public:
    std::string id() const override { return "half"; }
    Capabilities capabilities() const override { return {true, true}; }
    double sequence_loglik(const std::string&, const std::string& cont) override {
        return cont == "Yes" ? std::log(0.7) : std::log(0.3);
    }
    std::string generate(const std::string&, int) override {
        throw IoError("generation unavailable");
    }
};
}  // namespace

namespace {
class TextOnlyBackend : public Backend {
public:
    std::string id() const override { return "text-only"; }
    Capabilities capabilities() const override { return {false, true}; }
    double sequence_loglik(const std::string&, const std::string&) override { return 0; }
    std::string generate(const std::string&, int) override { return "text"; }
};
}  // namespace

TEST_CASE("classify requires token-logprob support") {
    TextOnlyBackend backend;
    CHECK_THROWS_WITH_AS(classify(backend, "p"), doctest::Contains("token-logprob"),
                         ConfigError);
}

TEST_CASE("rationale failure still returns the class score, with a warning") {
    HalfBackend backend;
    auto out = classify_with_rationale(backend, "p");
    CHECK(out.score.p_yes == doctest::Approx(0.7));
    CHECK(out.rationale.free_text.empty());
    CHECK_FALSE(out.rationale.parsed_probability.has_value());
    REQUIRE(out.warnings.size() == 1);
    CHECK(out.warnings[0].find("rationale generation failed") != std::string::npos);
}

TEST_CASE("canned rationale response parses the verbalized probability") {
    auto transport = std::make_shared<FakeTransport>();
    transport->script.push_back({200, echo_response("p", "Yes", {-0.1})});
    transport->script.push_back({200, echo_response("p", "No", {-2.0})});
    transport->script.push_back(
        {200, R"({"choices":[{"text":"Prediction: Yes. Probability: 83%."}]})"});
    RemoteBackend backend(fast_config(), transport);
    auto out = classify_with_rationale(backend, "p");
    CHECK(out.rationale.prediction == "Yes");
    REQUIRE(out.rationale.parsed_probability.has_value());
    CHECK(*out.rationale.parsed_probability == doctest::Approx(0.83));
    // the likelihood-based score is untouched by the verbalized figure
    CHECK(out.score.p_yes == doctest::Approx(std::exp(-0.1) / (std::exp(-0.1) + std::exp(-2.0))));
}
