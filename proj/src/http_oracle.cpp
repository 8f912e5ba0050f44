#include "semslam/supervision.hpp"

#include <chrono>
#include <cmath>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace semslam {

HttpOracle::HttpOracle(std::string base_url, double timeout_seconds)
    : base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds) {}

std::optional<std::string> HttpOracle::post(const std::string& path,
                                            const CompositeSpec& spec,
                                            const std::string& prompt) {
    nlohmann::json overlays = nlohmann::json::array();
    for (const auto& e : spec.entries) {
        overlays.push_back({{"number", e.number},
                            {"box",
                             {static_cast<int>(std::lround(e.box.u_min)),
                              static_cast<int>(std::lround(e.box.v_min)),
                              static_cast<int>(std::lround(e.box.u_max)),
                              static_cast<int>(std::lround(e.box.v_max))}},
                            {"label", e.label}});
    }
    const nlohmann::json request = {
        {"frame_id", spec.frame_id}, {"prompt", prompt}, {"overlays", overlays}};

    httplib::Client client(base_url_);
    const auto timeout = std::chrono::milliseconds(
        static_cast<long long>(timeout_seconds_ * 1000.0));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    const auto res = client.Post(path, request.dump(), "application/json");
    if (!res || res->status != 200) return std::nullopt;
    try {
        const nlohmann::json body = nlohmann::json::parse(res->body);
        if (!body.contains("text") || !body["text"].is_string()) return std::nullopt;
        return body["text"].get<std::string>();
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
}

std::optional<std::string> HttpOracle::landmark_eval(const CompositeSpec& spec,
                                                     const std::string& prompt) {
    return post("/landmark_eval", spec, prompt);
}

std::optional<std::string> HttpOracle::class_label_gen(const CompositeSpec& spec,
                                                       const std::string& prompt) {
    return post("/class_label_gen", spec, prompt);
}

} // namespace semslam
