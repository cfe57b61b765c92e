#pragma once

#include <memory>
#include <optional>
#include <string>

#include "advbench/models.hpp"

namespace advbench {

inline constexpr const char* kProtocolVersion = "1";
inline constexpr std::size_t kMaxRemoteBatch = 256;
inline constexpr int kRemoteRetries = 3;

struct BindAddress {
    std::string host = "127.0.0.1";
    int port = 8500;  // 0 picks a free port
};

// "host:port".
BindAddress parse_bind_address(const std::string& text);
// Explicit flag, else ADVBENCH_BIND, else 127.0.0.1:8500.
BindAddress resolve_bind_address(const std::optional<std::string>& flag);

// HTTP server answering GET /v1/metadata and POST /v1/predict for one model.
// Requests are served on background threads until stop() or destruction.
class PredictionServer {
public:
    PredictionServer(std::shared_ptr<const Model> model, const BindAddress& address);
    ~PredictionServer();

    PredictionServer(const PredictionServer&) = delete;
    PredictionServer& operator=(const PredictionServer&) = delete;

    int port() const noexcept;
    std::string endpoint() const;
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Prediction-only adapter for a served model. Metadata is fetched once at
// construction; batches above 256 are split across requests.
class RemoteModel final : public Model {
public:
    // endpoint: "http://host:port" (scheme optional).
    explicit RemoteModel(std::string endpoint);

    const ModelInfo& info() const override { return info_; }
    Tensor predict(const Tensor& batch) const override;

    const std::string& endpoint() const noexcept { return endpoint_; }

private:
    std::string endpoint_;
    std::string host_;
    int port_ = 0;
    ModelInfo info_;
};

}  // namespace advbench
