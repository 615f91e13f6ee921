#include "mddlm/backends/remote.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mddlm/cohort/io.hpp"

namespace mddlm::backends {

using nlohmann::json;

namespace {

class HttplibTransport : public HttpTransport {
public:
    HttpResponse post(const std::string& url,
                      const std::vector<std::pair<std::string, std::string>>& headers,
                      const std::string& body) override {
        // Split "http://host[:port]/path".
        const std::string prefix = "http://";
        if (url.rfind(prefix, 0) != 0)
            throw ConfigError("remote endpoint must start with http:// (got " + url + ")");
        std::string rest = url.substr(prefix.size());
        size_t slash = rest.find('/');
        std::string host_port = slash == std::string::npos ? rest : rest.substr(0, slash);
        std::string path = slash == std::string::npos ? "/" : rest.substr(slash);

        httplib::Client client(("http://" + host_port).c_str());
        client.set_connection_timeout(10);
        client.set_read_timeout(120);
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        auto res = client.Post(path.c_str(), h, body, "application/json");
        if (!res) throw IoError("transport error: no response from " + url);
        return {res->status, res->body};
    }
};

}  // namespace

std::unique_ptr<HttpTransport> make_httplib_transport() {
    return std::make_unique<HttplibTransport>();
}

RequestCache::RequestCache(std::string dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

namespace {
std::string cache_path(const std::string& dir, uint64_t key) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx.json", static_cast<unsigned long long>(key));
    return dir + "/" + buf;
}
}  // namespace

std::optional<std::string> RequestCache::get(uint64_t key) const {
    std::string path = cache_path(dir_, key);
    if (!std::filesystem::exists(path)) return std::nullopt;
    json j = json::parse(cohort::read_file(path));
    return j.at("response").get<std::string>();
}

void RequestCache::put(uint64_t key, const std::string& request,
                       const std::string& response) const {
    json j{{"request", request},
           {"response", response},
           {"timestamp", static_cast<int64_t>(std::chrono::duration_cast<std::chrono::seconds>(
                                                  std::chrono::system_clock::now().time_since_epoch())
                                                  .count())}};
    cohort::write_file(cache_path(dir_, key), j.dump(2));
}

std::string remote_complete(const RemoteConfig& config, HttpTransport& transport,
                            const std::string& request_body, const RequestCache* cache) {
    if (config.endpoint.empty()) throw ConfigError("remote backend: endpoint not configured");
    uint64_t key = fnv1a64(config.endpoint, fnv1a64(request_body));
    if (cache) {
        if (auto hit = cache->get(key)) return *hit;
    }

    std::vector<std::pair<std::string, std::string>> headers;
    if (!config.auth_env.empty()) {
        if (const char* token = std::getenv(config.auth_env.c_str()); token && *token)
            headers.emplace_back("Authorization", std::string("Bearer ") + token);
    }

    double backoff_ms = config.backoff_initial_ms;
    for (int attempt = 0;; ++attempt) {
        HttpResponse res = transport.post(config.endpoint, headers, request_body);
        if (res.status >= 200 && res.status < 300) {
            if (cache) cache->put(key, request_body, res.body);
            return res.body;
        }
        bool retryable = res.status == 429 || res.status >= 500;
        if (!retryable)
            throw IoError("remote backend: permanent HTTP " + std::to_string(res.status) + ": " +
                          res.body);
        if (attempt >= config.max_retries)
            throw IoError("remote backend: retry budget exhausted after HTTP " +
                          std::to_string(res.status));
        std::this_thread::sleep_for(
            std::chrono::milliseconds(static_cast<int64_t>(backoff_ms)));
        backoff_ms *= config.backoff_factor;
    }
}

RemoteBackend::RemoteBackend(RemoteConfig config, std::shared_ptr<HttpTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
    if (!config_.cache_dir.empty()) cache_.emplace(config_.cache_dir);
}

namespace {

json parse_body(const std::string& body) {
    try {
        return json::parse(body);
    } catch (const json::exception& e) {
        throw DataError(std::string("remote response: invalid json: ") + e.what());
    }
}

const json& require_field(const json& j, const char* field) {
    if (!j.contains(field))
        throw DataError(std::string("remote response: missing field '") + field + "'");
    return j.at(field);
}

}  // namespace

double RemoteBackend::sequence_loglik(const std::string& prompt,
                                      const std::string& continuation) {
    json request{{"model", config_.model},       {"prompt", prompt + continuation},
                 {"max_tokens", 0},              {"temperature", 0},
                 {"logprobs", true},             {"echo", true}};
    std::string body = remote_complete(config_, *transport_, request.dump(),
                                       cache_ ? &*cache_ : nullptr);
    json j = parse_body(body);
    const json& choices = require_field(j, "choices");
    if (!choices.is_array() || choices.empty())
        throw DataError("remote response: empty 'choices'");
    const json& logprobs = require_field(choices.at(0), "logprobs");
    const json& token_logprobs = require_field(logprobs, "token_logprobs");
    const json& offsets = require_field(logprobs, "text_offset");
    if (token_logprobs.size() != offsets.size())
        throw DataError("remote response: token_logprobs/text_offset length mismatch");

    // Sum the logprobs of echoed tokens that start inside the continuation.
    double sum = 0.0;
    size_t boundary = prompt.size();
    for (size_t i = 0; i < offsets.size(); ++i) {
        if (offsets.at(i).get<size_t>() < boundary) continue;
        const json& lp = token_logprobs.at(i);
        if (lp.is_null())
            throw DataError("remote response: null logprob inside continuation");
        sum += lp.get<double>();
    }
    return sum;
}

std::string RemoteBackend::generate(const std::string& prompt, int max_new) {
    json request{{"model", config_.model},
                 {"prompt", prompt},
                 {"max_tokens", max_new},
                 {"temperature", 0}};
    std::string body = remote_complete(config_, *transport_, request.dump(),
                                       cache_ ? &*cache_ : nullptr);
    json j = parse_body(body);
    const json& choices = require_field(j, "choices");
    if (!choices.is_array() || choices.empty())
        throw DataError("remote response: empty 'choices'");
    return require_field(choices.at(0), "text").get<std::string>();
}

}  // namespace mddlm::backends
