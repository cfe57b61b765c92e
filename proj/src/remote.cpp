#include "advbench/remote.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "advbench/error.hpp"

namespace advbench {
namespace {

using nlohmann::json;

json error_body(const std::string& code, const std::string& detail) {
    return json{{"error", code}, {"detail", detail}};
}

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json metadata_json(const ModelInfo& info) {
    return json{{"input_shape", info.input_shape},
                {"num_classes", info.num_classes},
                {"bounds", {info.bounds.lower, info.bounds.upper}},
                {"model_name", info.name},
                {"protocol_version", kProtocolVersion}};
}

void handle_predict(const Model& model, const httplib::Request& req, httplib::Response& res) {
    const ModelInfo& info = model.info();
    json body;
    try {
        body = json::parse(req.body);
    } catch (const json::out_of_range& e) {
        // 406: a numeric literal too large for a double, e.g. 1e999.
        if (e.id == 406) return reply(res, 422, error_body("non_finite_input", e.what()));
        return reply(res, 400, error_body("malformed_json", e.what()));
    } catch (const json::exception& e) {
        return reply(res, 400, error_body("malformed_json", e.what()));
    }
    if (!body.is_object() || !body.contains("inputs") || !body.contains("shape") || !body["inputs"].is_array() ||
        !body["shape"].is_array()) {
        return reply(res, 400, error_body("malformed_request", "expected {\"inputs\": [[...]], \"shape\": [c,h,w]}"));
    }
    Shape shape;
    for (const auto& d : body["shape"]) {
        if (!d.is_number_unsigned()) return reply(res, 400, error_body("malformed_request", "shape must hold non-negative integers"));
        shape.push_back(d.get<std::size_t>());
    }
    const auto& inputs = body["inputs"];
    const std::size_t n = inputs.size();
    const std::size_t stride = shape_size(info.input_shape);
    std::vector<double> values;
    values.reserve(n * stride);
    for (const auto& row : inputs) {
        if (!row.is_array()) return reply(res, 400, error_body("malformed_request", "each input must be an array"));
        for (const auto& v : row) {
            if (!v.is_number()) return reply(res, 400, error_body("malformed_request", "inputs must hold numbers"));
            values.push_back(v.get<double>());
        }
    }

    if (shape != info.input_shape) {
        return reply(res, 422, error_body("shape_mismatch", "shape " + shape_string(shape) + " does not match model input " +
                                                                shape_string(info.input_shape)));
    }
    for (const auto& row : inputs) {
        if (row.size() != stride) {
            return reply(res, 422, error_body("shape_mismatch", "input of length " + std::to_string(row.size()) +
                                                                    " does not match " + std::to_string(stride) + " elements"));
        }
    }
    if (n > kMaxRemoteBatch) {
        return reply(res, 422, error_body("batch_too_large", std::to_string(n) + " inputs exceed the limit of " +
                                                                 std::to_string(kMaxRemoteBatch)));
    }

    try {
        Shape batch_shape{n};
        batch_shape.insert(batch_shape.end(), info.input_shape.begin(), info.input_shape.end());
        const Tensor logits = model.predict(Tensor(std::move(batch_shape), std::move(values)));
        json rows = json::array();
        const std::size_t k = info.num_classes;
        for (std::size_t r = 0; r < n; ++r) {
            const auto d = logits.data().subspan(r * k, k);
            rows.push_back(std::vector<double>(d.begin(), d.end()));
        }
        reply(res, 200, json{{"logits", rows}});
    } catch (const BoundsError& e) {
        reply(res, 422, error_body("out_of_bounds", e.what()));
    } catch (const OverflowError& e) {
        reply(res, 422, error_body("non_finite_input", e.what()));
    } catch (const std::exception& e) {
        reply(res, 500, error_body("evaluation_failed", e.what()));
    }
}

}  // namespace

BindAddress parse_bind_address(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
        throw ValidationError("bind address '" + text + "' must look like host:port");
    }
    BindAddress out;
    out.host = text.substr(0, colon);
    try {
        std::size_t used = 0;
        out.port = std::stoi(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ValidationError("bind address '" + text + "' has an invalid port");
    }
    if (out.port < 0 || out.port > 65535) throw ValidationError("bind address '" + text + "' has an invalid port");
    return out;
}

BindAddress resolve_bind_address(const std::optional<std::string>& flag) {
    if (flag) return parse_bind_address(*flag);
    if (const char* env = std::getenv("ADVBENCH_BIND"); env && *env) return parse_bind_address(env);
    return BindAddress{};
}

struct PredictionServer::Impl {
    std::shared_ptr<const Model> model;
    httplib::Server server;
    std::thread thread;
    std::string host;
    int port = 0;
};

PredictionServer::PredictionServer(std::shared_ptr<const Model> model, const BindAddress& address)
    : impl_(std::make_unique<Impl>()) {
    if (!model) throw ValidationError("server needs a model");
    impl_->model = std::move(model);
    impl_->host = address.host;
    const Model& m = *impl_->model;

    impl_->server.Get("/v1/metadata", [&m](const httplib::Request&, httplib::Response& res) {
        reply(res, 200, metadata_json(m.info()));
    });
    impl_->server.Post("/v1/predict", [&m](const httplib::Request& req, httplib::Response& res) {
        handle_predict(m, req, res);
    });
    impl_->server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (res.status == 404) {
            res.set_content(error_body("not_found", "no route for " + req.method + " " + req.path).dump(),
                            "application/json");
        }
    });

    if (address.port == 0) {
        impl_->port = impl_->server.bind_to_any_port(address.host);
        if (impl_->port < 0) throw IoError("cannot bind " + address.host);
    } else {
        if (!impl_->server.bind_to_port(address.host, address.port)) {
            throw IoError("cannot bind " + address.host + ":" + std::to_string(address.port));
        }
        impl_->port = address.port;
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

PredictionServer::~PredictionServer() { stop(); }

int PredictionServer::port() const noexcept { return impl_->port; }

std::string PredictionServer::endpoint() const {
    return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

void PredictionServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

namespace {

struct Endpoint {
    std::string host;
    int port = 80;
};

Endpoint parse_endpoint(const std::string& url) {
    std::string rest = url;
    if (rest.rfind("http://", 0) == 0) {
        rest = rest.substr(7);
    } else if (rest.find("://") != std::string::npos) {
        throw ValidationError("endpoint '" + url + "': only http:// is supported");
    }
    while (!rest.empty() && rest.back() == '/') rest.pop_back();
    if (rest.find('/') != std::string::npos) throw ValidationError("endpoint '" + url + "' must not contain a path");
    Endpoint e;
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) {
        e.host = rest;
    } else {
        const BindAddress b = parse_bind_address(rest);
        e.host = b.host;
        e.port = b.port;
    }
    if (e.host.empty()) throw ValidationError("endpoint '" + url + "' has no host");
    return e;
}

httplib::Result send(const std::string& host, int port, const std::function<httplib::Result(httplib::Client&)>& call,
                     const std::string& what) {
    httplib::Error last = httplib::Error::Success;
    for (int attempt = 0; attempt <= kRemoteRetries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        httplib::Client client(host, port);
        client.set_connection_timeout(std::chrono::seconds(5));
        client.set_read_timeout(std::chrono::seconds(60));
        auto result = call(client);
        if (result) return result;
        last = result.error();
    }
    throw TransportError(what + " to " + host + ":" + std::to_string(port) + " failed after " +
                         std::to_string(kRemoteRetries) + " retries: " + httplib::to_string(last));
}

json expect_ok(const httplib::Result& result) {
    json body;
    try {
        body = json::parse(result->body);
    } catch (const json::exception&) {
        if (result->status != 200) throw ProtocolError(result->status, "unknown", result->body);
        throw ProtocolError(result->status, "malformed_response", "response is not JSON");
    }
    if (result->status != 200) {
        const bool structured = body.is_object() && body.contains("error") && body["error"].is_string() &&
                                body.contains("detail") && body["detail"].is_string();
        if (!structured) throw ProtocolError(result->status, "unknown", result->body);
        throw ProtocolError(result->status, body["error"].get<std::string>(), body["detail"].get<std::string>());
    }
    return body;
}

}  // namespace

RemoteModel::RemoteModel(std::string endpoint) : endpoint_(std::move(endpoint)) {
    const Endpoint e = parse_endpoint(endpoint_);
    host_ = e.host;
    port_ = e.port;
    const auto result = send(host_, port_, [](httplib::Client& c) { return c.Get("/v1/metadata"); }, "metadata request");
    const json meta = expect_ok(result);
    try {
        if (meta.at("protocol_version").get<std::string>() != kProtocolVersion) {
            throw ProtocolError(200, "version_mismatch",
                                "server speaks protocol " + meta.at("protocol_version").get<std::string>());
        }
        info_.name = meta.at("model_name").get<std::string>();
        info_.input_shape = meta.at("input_shape").get<Shape>();
        info_.num_classes = meta.at("num_classes").get<std::size_t>();
        const auto bounds = meta.at("bounds").get<std::vector<double>>();
        if (bounds.size() != 2) throw ProtocolError(200, "malformed_response", "bounds must be [lower, upper]");
        info_.bounds = Bounds{bounds[0], bounds[1]};
        info_.capability = Capability::BlackBox;
    } catch (const json::exception& e) {
        throw ProtocolError(200, "malformed_response", std::string("bad metadata: ") + e.what());
    }
}

Tensor RemoteModel::predict(const Tensor& batch) const {
    validate_batch(info_, batch);
    const std::size_t n = batch.dim(0);
    const std::size_t k = info_.num_classes;
    const std::size_t stride = shape_size(info_.input_shape);
    std::vector<double> out;
    out.reserve(n * k);
    std::size_t begin = 0;
    do {
        const std::size_t end = std::min(n, begin + kMaxRemoteBatch);
        json inputs = json::array();
        for (std::size_t r = begin; r < end; ++r) {
            const auto d = batch.data().subspan(r * stride, stride);
            inputs.push_back(std::vector<double>(d.begin(), d.end()));
        }
        const std::string payload = json{{"inputs", inputs}, {"shape", info_.input_shape}}.dump();
        const auto result = send(
            host_, port_, [&](httplib::Client& c) { return c.Post("/v1/predict", payload, "application/json"); },
            "predict request");
        const json body = expect_ok(result);
        try {
            const auto& rows = body.at("logits");
            if (rows.size() != end - begin) {
                throw ProtocolError(200, "malformed_response", "expected " + std::to_string(end - begin) + " logit rows");
            }
            for (const auto& row : rows) {
                const auto values = row.get<std::vector<double>>();
                if (values.size() != k) throw ProtocolError(200, "malformed_response", "logit row has the wrong length");
                out.insert(out.end(), values.begin(), values.end());
            }
        } catch (const json::exception& e) {
            throw ProtocolError(200, "malformed_response", e.what());
        }
        begin = end;
    } while (begin < n);
    return Tensor({n, k}, std::move(out));
}

}  // namespace advbench
