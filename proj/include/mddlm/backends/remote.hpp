#pragma once

#include <map>
#include <memory>

#include "mddlm/backends/backend.hpp"
#include "mddlm/promptgen/promptgen.hpp"

namespace mddlm::backends {

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Transport seam. The production implementation speaks HTTP; tests inject
/// canned responses.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& url,
                              const std::vector<std::pair<std::string, std::string>>& headers,
                              const std::string& body) = 0;
};

std::unique_ptr<HttpTransport> make_httplib_transport();

struct RemoteConfig {
    std::string endpoint;  // completions-style URL, e.g. http://host:8000/v1/completions
    std::string model;
    std::string auth_env = "MDDLLM_API_KEY";
    std::string cache_dir;  // empty disables the disk cache
    int max_retries = 3;
    double backoff_initial_ms = 100.0;
    double backoff_factor = 2.0;
};

/// One file per request hash holding request and response bodies verbatim
/// plus a timestamp.
class RequestCache {
public:
    explicit RequestCache(std::string dir);
    std::optional<std::string> get(uint64_t key) const;
    void put(uint64_t key, const std::string& request, const std::string& response) const;

private:
    std::string dir_;
};

/// POSTs a completions-style request with caching and bounded retries
/// (exponential backoff on 429/5xx; other 4xx are permanent). Returns the
/// response body.
std::string remote_complete(const RemoteConfig& config, HttpTransport& transport,
                            const std::string& request_body, const RequestCache* cache);

class RemoteBackend : public Backend {
public:
    RemoteBackend(RemoteConfig config, std::shared_ptr<HttpTransport> transport);

    std::string id() const override { return "remote/" + config_.model; }
    Capabilities capabilities() const override { return {true, true}; }
    double sequence_loglik(const std::string& prompt, const std::string& continuation) override;
    std::string generate(const std::string& prompt, int max_new) override;

private:
    RemoteConfig config_;
    std::shared_ptr<HttpTransport> transport_;
    std::optional<RequestCache> cache_;
};

/// Adapter exposing a remote backend as the Narrative template's chat client.
class RemoteNarrativeClient : public prompt::NarrativeClient {
public:
    RemoteNarrativeClient(std::shared_ptr<RemoteBackend> backend, std::string model,
                          int max_new = 512)
        : backend_(std::move(backend)), model_(std::move(model)), max_new_(max_new) {}
    std::string complete(const std::string& meta_prompt) override {
        return backend_->generate(meta_prompt, max_new_);
    }
    std::string model_name() const override { return model_; }

private:
    std::shared_ptr<RemoteBackend> backend_;
    std::string model_;
    int max_new_;
};

}  // namespace mddlm::backends
