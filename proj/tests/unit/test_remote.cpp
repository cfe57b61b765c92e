#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "advbench/attacks.hpp"
#include "advbench/dataset.hpp"
#include "advbench/error.hpp"
#include "advbench/perception.hpp"
#include "advbench/remote.hpp"
#include "support/oracles.hpp"

using namespace advbench;
using nlohmann::json;

namespace {

class RemoteTest : public ::testing::Test {
protected:
    void SetUp() override {
        local_ = std::make_shared<NetworkModel>(NetworkModel::initialize(Architecture::Mlp, {1, 4, 4}, 3, 42));
        server_ = std::make_unique<PredictionServer>(local_, BindAddress{"127.0.0.1", 0});
    }

    httplib::Result post(const std::string& body) {
        httplib::Client client("127.0.0.1", server_->port());
        return client.Post("/v1/predict", body, "application/json");
    }

    json predict_body(const Tensor& batch) {
        json rows = json::array();
        const std::size_t stride = 16;
        for (std::size_t r = 0; r < batch.dim(0); ++r)
            rows.push_back(std::vector<double>(batch.values().begin() + static_cast<long>(r * stride),
                                               batch.values().begin() + static_cast<long>((r + 1) * stride)));
        return json{{"inputs", rows}, {"shape", {1, 4, 4}}};
    }

    void expect_error(const httplib::Result& res, int status, const std::string& code) {
        ASSERT_TRUE(res);
        EXPECT_EQ(res->status, status);
        const auto body = json::parse(res->body);
        EXPECT_EQ(body.at("error"), code) << res->body;
        EXPECT_TRUE(body.at("detail").is_string());
    }

    std::shared_ptr<NetworkModel> local_;
    std::unique_ptr<PredictionServer> server_;
};

}  // namespace

TEST_F(RemoteTest, MetadataDescribesModel) {
    httplib::Client client("127.0.0.1", server_->port());
    const auto res = client.Get("/v1/metadata");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    const auto body = json::parse(res->body);
    EXPECT_EQ(body.at("input_shape"), json({1, 4, 4}));
    EXPECT_EQ(body.at("num_classes"), 3);
    EXPECT_EQ(body.at("bounds"), json({0.0, 1.0}));
    EXPECT_EQ(body.at("model_name"), local_->info().name);
    EXPECT_EQ(body.at("protocol_version"), kProtocolVersion);
}

TEST_F(RemoteTest, RemotePredictionsMatchLocalBitForBit) {
    CounterRng rng(1, "parity");
    const RemoteModel remote(server_->endpoint());
    EXPECT_EQ(remote.info().name, local_->info().name);
    EXPECT_EQ(remote.info().input_shape, local_->info().input_shape);
    EXPECT_FALSE(remote.white_box());
    for (std::size_t n : {1u, 7u, 256u, 600u}) {
        const Tensor batch = oracle::random_tensor({n, 1, 4, 4}, rng, 0, 1);
        EXPECT_EQ(remote.predict(batch), local_->predict(batch)) << n;
    }
    EXPECT_EQ(remote.predict(Tensor({0, 1, 4, 4})).shape(), (Shape{0, 3}));
}

TEST_F(RemoteTest, ConcurrentClientsAgree) {
    CounterRng rng(2, "concurrent");
    const Tensor batch = oracle::random_tensor({20, 1, 4, 4}, rng, 0, 1);
    const Tensor expect = local_->predict(batch);
    const RemoteModel remote(server_->endpoint());
    std::vector<std::thread> workers;
    std::vector<int> ok(4, 0);
    for (int t = 0; t < 4; ++t)
        workers.emplace_back([&, t] {
            for (int i = 0; i < 5; ++i) ok[static_cast<std::size_t>(t)] += remote.predict(batch) == expect;
        });
    for (auto& w : workers) w.join();
    for (int v : ok) EXPECT_EQ(v, 5);
}

TEST_F(RemoteTest, BlackBoxEvaluationMatchesLocal) {
    const auto data = generate_blobs(3, 16, 3, 4);
    const RemoteModel remote(server_->endpoint());
    const std::vector<CorruptionKind> kinds{CorruptionKind::GaussianNoise, CorruptionKind::Rotation};
    ReportOptions opts;
    opts.seed = 5;
    EXPECT_EQ(robustness_report(remote, data, kinds, opts), robustness_report(*local_, data, kinds, opts));
}

TEST_F(RemoteTest, GradientAttacksAreRefused) {
    const RemoteModel remote(server_->endpoint());
    const Tensor x = Tensor::filled({1, 4, 4}, 0.5);
    EXPECT_THROW(fgsm(remote, Adversary::untargeted(x, 0), AttackConfig::defaults(AttackAlgorithm::Fgsm)),
                 CapabilityError);
}

TEST_F(RemoteTest, MalformedJson) { expect_error(post("{\"inputs\": ["), 400, "malformed_json"); }

TEST_F(RemoteTest, MalformedRequest) {
    expect_error(post(R"({"inputs": [[0.1]]})"), 400, "malformed_request");
    expect_error(post(R"({"inputs": [["a"]], "shape": [1,4,4]})"), 400, "malformed_request");
    expect_error(post(R"({"inputs": [1], "shape": [1,4,4]})"), 400, "malformed_request");
}

TEST_F(RemoteTest, ShapeMismatch) {
    auto body = predict_body(Tensor::filled({1, 1, 4, 4}, 0.5));
    body["shape"] = {1, 2, 8};
    expect_error(post(body.dump()), 422, "shape_mismatch");
    body = predict_body(Tensor::filled({1, 1, 4, 4}, 0.5));
    body["inputs"][0].erase(0);
    expect_error(post(body.dump()), 422, "shape_mismatch");
}

TEST_F(RemoteTest, BatchTooLarge) {
    expect_error(post(predict_body(Tensor::filled({257, 1, 4, 4}, 0.5)).dump()), 422, "batch_too_large");
    const auto res = post(predict_body(Tensor::filled({256, 1, 4, 4}, 0.5)).dump());
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(json::parse(res->body).at("logits").size(), 256u);
}

TEST_F(RemoteTest, OutOfBounds) {
    auto body = predict_body(Tensor::filled({1, 1, 4, 4}, 0.5));
    body["inputs"][0][3] = 1.5;
    expect_error(post(body.dump()), 422, "out_of_bounds");
}

TEST_F(RemoteTest, NonFiniteInput) {
    std::string text = predict_body(Tensor::filled({1, 1, 4, 4}, 0.5)).dump();
    text.replace(text.find("0.5"), 3, "1e999");
    expect_error(post(text), 422, "non_finite_input");
}

TEST_F(RemoteTest, UnknownRouteIs404) {
    httplib::Client client("127.0.0.1", server_->port());
    const auto res = client.Get("/v2/other");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 404);
}

TEST_F(RemoteTest, ClientChecksBoundsBeforeSending) {
    const RemoteModel remote(server_->endpoint());
    EXPECT_THROW(remote.predict(Tensor::filled({1, 1, 4, 4}, 2.0)), BoundsError);
}

TEST_F(RemoteTest, ClientSurfacesServerErrors) {
    // Swap in a server with a different input shape on the same port after
    // the client has cached metadata.
    const RemoteModel remote(server_->endpoint());
    const int port = server_->port();
    server_.reset();
    auto other = std::make_shared<NetworkModel>(NetworkModel::initialize(Architecture::Logistic, {1, 2, 2}, 3, 1));
    server_ = std::make_unique<PredictionServer>(other, BindAddress{"127.0.0.1", port});
    try {
        remote.predict(Tensor::filled({1, 1, 4, 4}, 0.5));
        FAIL() << "expected ProtocolError";
    } catch (const ProtocolError& e) {
        EXPECT_EQ(e.status(), 422);
        EXPECT_EQ(e.server_code(), "shape_mismatch");
    }
}

TEST_F(RemoteTest, StoppedServerGivesTransportError) {
    const RemoteModel remote("http://" + std::string("127.0.0.1:") + std::to_string(server_->port()));
    server_->stop();
    EXPECT_THROW(remote.predict(Tensor::filled({1, 1, 4, 4}, 0.5)), TransportError);
}

TEST(BindAddress, ParsingAndPrecedence) {
    const auto a = parse_bind_address("0.0.0.0:9000");
    EXPECT_EQ(a.host, "0.0.0.0");
    EXPECT_EQ(a.port, 9000);
    EXPECT_THROW(parse_bind_address("localhost"), ValidationError);
    EXPECT_THROW(parse_bind_address("h:70000"), ValidationError);
    EXPECT_THROW(parse_bind_address("h:12x"), ValidationError);

    ::unsetenv("ADVBENCH_BIND");
    EXPECT_EQ(resolve_bind_address(std::nullopt).port, 8500);
    EXPECT_EQ(resolve_bind_address(std::nullopt).host, "127.0.0.1");
    ::setenv("ADVBENCH_BIND", "127.0.0.2:8600", 1);
    EXPECT_EQ(resolve_bind_address(std::nullopt).port, 8600);
    EXPECT_EQ(resolve_bind_address(std::string("127.0.0.1:8700")).port, 8700);
    ::unsetenv("ADVBENCH_BIND");
}

TEST(RemoteModelSetup, RejectsBadEndpoints) {
    EXPECT_THROW(RemoteModel("https://127.0.0.1:1"), ValidationError);
    EXPECT_THROW(RemoteModel("http://127.0.0.1:1/v1"), ValidationError);
}

TEST(RemoteModelSetup, UnreachableServerIsTransportError) {
    // Bind then release a port so nothing listens on it.
    int port = 0;
    {
        auto model = std::make_shared<NetworkModel>(NetworkModel::initialize(Architecture::Logistic, {1, 2, 2}, 2, 1));
        PredictionServer s(model, BindAddress{"127.0.0.1", 0});
        port = s.port();
    }
    EXPECT_THROW(RemoteModel("127.0.0.1:" + std::to_string(port)), TransportError);
}
