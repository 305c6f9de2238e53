#pragma once

#include <chrono>
#include <cstdint>
#include <cstring>
#include <functional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "rigfield/core/errors.hpp"
#include "rigfield/guidance/prompt.hpp"
#include "rigfield/io/image.hpp"
#include "rigfield/render/camera.hpp"

// after Eigen: <resolv.h> (pulled in by httplib) defines a `_res` macro that breaks Eigen headers
#include <httplib.h>

namespace rigfield {

struct GuidanceContext {
    std::string prompt;          // already augmented
    ViewTag view = ViewTag::Front;
    BodyPart part = BodyPart::Body;
    double guidance_scale = 100.0;
    int timestep_min = 20;
    int timestep_max = 980;
    int max_timestep = 1000;
    std::uint64_t seed = 0;
    nlohmann::json weighting = {{"mode", "constant"}};  // passed opaquely to the service

    void validate() const {
        require(guidance_scale > 0, "guidance: guidance_scale must be positive");
        require(0 < timestep_min && timestep_min <= timestep_max && timestep_max <= max_timestep,
                "guidance: need 0 < m_min <= m_max <= max timestep");
    }
};

struct GuidanceGradient {
    Image gradient;  // H x W x 3, d loss / d pixel
    nlohmann::json diagnostics = nlohmann::json::object();
};

// Everything an oracle may look at for one step.
struct GuidanceView {
    Camera camera;  // at oracle resolution
    GuidanceContext context;
    Image background;  // what the render was composited over, at oracle resolution
};

class GuidanceOracle {
public:
    virtual ~GuidanceOracle() = default;
    virtual GuidanceGradient gradient(const Image& rendered, const GuidanceView& view) = 0;
    virtual std::string name() const = 0;
};

// g = lambda (rendered - target): the gradient of (lambda / 2) |rendered - target|^2.
inline GuidanceGradient mock_gradient(const Image& rendered, const Image& target, double lambda) {
    require(rendered.same_shape(target), "mock_gradient: rendered and target images differ in shape");
    GuidanceGradient g{Image(rendered.width, rendered.height, rendered.channels), {}};
    double loss = 0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        const double r = static_cast<double>(rendered.data[i]) - target.data[i];
        g.gradient.data[i] = static_cast<float>(lambda * r);
        loss += 0.5 * lambda * r * r;
    }
    g.diagnostics = {{"oracle", "mock"}, {"loss", loss}, {"weighting", 1.0}};
    return g;
}

// Analytic stand-in: targets come from a callback (e.g. a textured rig seen from the same camera).
class MockOracle : public GuidanceOracle {
public:
    using TargetFn = std::function<Image(const GuidanceView&)>;
    MockOracle(TargetFn target, double lambda) : target_(std::move(target)), lambda_(lambda) {
        require(lambda >= 0, "mock oracle: lambda must be nonnegative");
    }
    GuidanceGradient gradient(const Image& rendered, const GuidanceView& view) override {
        return mock_gradient(rendered, target_(view), lambda_);
    }
    std::string name() const override { return "mock"; }
    double lambda() const { return lambda_; }

private:
    TargetFn target_;
    double lambda_;
};

// ---- wire format ---------------------------------------------------------------
// body = u32 LE header length | JSON header (UTF-8) | float32 LE payload (H*W*3, row-major, interleaved)

namespace wire {

inline constexpr int kVersion = 1;

inline std::string encode(const nlohmann::json& header, const std::vector<float>& payload) {
    const std::string h = header.dump();
    std::string body(4 + h.size() + 4 * payload.size(), '\0');
    const auto n = static_cast<std::uint32_t>(h.size());
    for (int i = 0; i < 4; ++i) body[static_cast<std::size_t>(i)] = static_cast<char>((n >> (8 * i)) & 0xFF);
    std::memcpy(body.data() + 4, h.data(), h.size());
    char* out = body.data() + 4 + h.size();
    for (float f : payload) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int i = 0; i < 4; ++i) *out++ = static_cast<char>((bits >> (8 * i)) & 0xFF);
    }
    return body;
}

struct Message {
    nlohmann::json header;
    std::vector<float> payload;
};

inline Message decode(const std::string& body) {
    if (body.size() < 4) throw ProtocolError("wire: body shorter than the length prefix");
    std::uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n |= static_cast<std::uint32_t>(static_cast<unsigned char>(body[static_cast<std::size_t>(i)])) << (8 * i);
    if (4 + static_cast<std::size_t>(n) > body.size()) throw ProtocolError("wire: header length exceeds body size");
    Message m;
    try {
        m.header = nlohmann::json::parse(body.substr(4, n));
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("wire: header is not valid JSON: ") + e.what());
    }
    const std::size_t rest = body.size() - 4 - n;
    if (rest % 4 != 0) throw ProtocolError("wire: payload is not a whole number of float32 values");
    m.payload.resize(rest / 4);
    const auto* p = reinterpret_cast<const unsigned char*>(body.data() + 4 + n);
    for (std::size_t i = 0; i < m.payload.size(); ++i) {
        std::uint32_t bits = 0;
        for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(p[4 * i + static_cast<std::size_t>(k)]) << (8 * k);
        std::memcpy(&m.payload[i], &bits, 4);
    }
    return m;
}

inline nlohmann::json request_header(const Image& img, const GuidanceContext& ctx) {
    return {{"v", kVersion},
            {"height", img.height},
            {"width", img.width},
            {"channels", 3},
            {"dtype", "float32le"},
            {"prompt", ctx.prompt},
            {"guidance_scale", ctx.guidance_scale},
            {"timestep_range", {ctx.timestep_min, ctx.timestep_max}},
            {"seed", ctx.seed},
            {"weighting", ctx.weighting}};
}

inline std::string encode_request(const Image& img, const GuidanceContext& ctx) {
    require(img.channels == 3, "sds request: image must have 3 channels");
    ctx.validate();
    return encode(request_header(img, ctx), img.data);
}

// Checks a response against the request dimensions and returns the gradient.
inline GuidanceGradient decode_response(const std::string& body, int height, int width) {
    const auto m = decode(body);
    const auto& h = m.header;
    if (!h.is_object() || h.value("v", -1) != kVersion) throw ProtocolError("sds response: missing or unsupported \"v\"");
    if (!h.contains("height") || !h.contains("width") || !h["height"].is_number_integer() || !h["width"].is_number_integer())
        throw ProtocolError("sds response: header lacks integer height/width");
    if (h["height"].get<int>() != height || h["width"].get<int>() != width || h.value("channels", 3) != 3)
        throw ProtocolError("sds response: gradient dimensions differ from the request");
    if (h.value("dtype", "float32le") != "float32le") throw ProtocolError("sds response: unsupported dtype");
    if (m.payload.size() != static_cast<std::size_t>(height) * width * 3)
        throw ProtocolError("sds response: payload size does not match the header dimensions");
    GuidanceGradient g{Image(width, height, 3), h.value("diagnostics", nlohmann::json::object())};
    for (float v : m.payload)
        if (!std::isfinite(v)) throw ProtocolError("sds response: non-finite gradient entry");
    g.gradient.data = m.payload;
    return g;
}

}  // namespace wire

struct RetryPolicy {
    int attempts = 3;
    double initial_backoff_s = 0.25;
    double multiplier = 2.0;
    double connect_timeout_s = 2.0;
    double read_timeout_s = 60.0;
};

// Client for the score-distillation service (POST /sds_grad, GET /health).
class RemoteSdsClient {
public:
    explicit RemoteSdsClient(std::string endpoint, RetryPolicy policy = {})
        : endpoint_(std::move(endpoint)), policy_(policy) {
        require(!endpoint_.empty(), "remote oracle: endpoint is empty");
        require(policy_.attempts >= 1, "remote oracle: need at least one attempt");
        while (!endpoint_.empty() && endpoint_.back() == '/') endpoint_.pop_back();
    }

    const std::string& endpoint() const { return endpoint_; }

    GuidanceGradient sds_gradient(const Image& rendered, const GuidanceContext& ctx) const {
        const std::string body = wire::encode_request(rendered, ctx);
        const std::string reply = with_retries("/sds_grad", [&](httplib::Client& c) {
            return c.Post("/sds_grad", body, "application/octet-stream");
        });
        return wire::decode_response(reply, rendered.height, rendered.width);
    }

    nlohmann::json health() const {
        const std::string reply = with_retries("/health", [](httplib::Client& c) { return c.Get("/health"); });
        try {
            return nlohmann::json::parse(reply);
        } catch (const nlohmann::json::exception&) {
            return {{"status", reply}};
        }
    }

private:
    template <typename Call>
    std::string with_retries(const std::string& path, Call&& call) const {
        double wait = policy_.initial_backoff_s;
        std::string last = "no attempt made";
        for (int attempt = 1; attempt <= policy_.attempts; ++attempt) {
            httplib::Client client(endpoint_);
            client.set_connection_timeout(std::chrono::milliseconds(static_cast<long>(policy_.connect_timeout_s * 1000)));
            client.set_read_timeout(std::chrono::milliseconds(static_cast<long>(policy_.read_timeout_s * 1000)));
            if (!client.is_valid()) throw TransportError("invalid endpoint URL", endpoint_, attempt);
            auto res = call(client);
            if (res) {
                if (res->status == 200) return res->body;
                // 4xx (except 429) will not improve with retries
                if (res->status >= 400 && res->status < 500 && res->status != 429)
                    throw ProtocolError("sds service rejected " + path + " with HTTP " + std::to_string(res->status) + ": " +
                                        res->body.substr(0, 200));
                last = "HTTP " + std::to_string(res->status);
            } else {
                last = httplib::to_string(res.error());
            }
            if (attempt < policy_.attempts) {
                std::this_thread::sleep_for(std::chrono::duration<double>(wait));
                wait *= policy_.multiplier;
            }
        }
        throw TransportError(path + " failed: " + last, endpoint_, policy_.attempts);
    }

    std::string endpoint_;
    RetryPolicy policy_;
};

class RemoteOracle : public GuidanceOracle {
public:
    explicit RemoteOracle(RemoteSdsClient client) : client_(std::move(client)) {}
    GuidanceGradient gradient(const Image& rendered, const GuidanceView& view) override {
        return client_.sds_gradient(rendered, view.context);
    }
    std::string name() const override { return "remote"; }
    const RemoteSdsClient& client() const { return client_; }

private:
    RemoteSdsClient client_;
};

}  // namespace rigfield
