#include "llmnet/abm.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>

namespace llmnet {

namespace {

std::string trim_lower(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    while (!s.empty() && (s.back() == '.' || s.back() == '"')) s.pop_back();
    while (!s.empty() && s.front() == '"') s.erase(s.begin());
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

void replace_all(std::string& s, const std::string& key, const std::string& value) {
    for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size()))
        s.replace(pos, key.size(), value);
}

} // namespace

LatentState classify_answer(const std::string& estimate, const std::string& true_answer) {
    const std::string e = trim_lower(estimate);
    if (e == "-1") return LatentState::D;
    if (!e.empty() && e == trim_lower(true_answer)) return LatentState::T;
    return LatentState::H;
}

ExternalAgentAdapter::ExternalAgentAdapter(ExternalAgentConfig config, Classifier classifier, LogSink log)
    : config_(std::move(config)), classifier_(std::move(classifier)), log_(std::move(log)) {
    if (!classifier_) {
        classifier_ = [truth = config_.true_answer](const std::string& text) { return classify_answer(text, truth); };
    }
    if (!log_) log_ = [](const std::string& msg) { std::cerr << "[external-agent] " << msg << '\n'; };
}

int ExternalAgentAdapter::max_tokens(double u) const {
    return config_.token_overhead + static_cast<int>(std::lround(u));
}

std::string ExternalAgentAdapter::render_prompt(const AgentView& view) const {
    std::string neighbors;
    for (NodeId j : view.sources) {
        std::string answer = "(no answer yet)";
        if (view.population && j < view.population->transcripts.size() && !view.population->transcripts[j].empty())
            answer = view.population->transcripts[j];
        neighbors += "- agent " + std::to_string(j) + ": " + answer + "\n";
    }
    if (neighbors.empty()) neighbors = "(none)\n";
    const std::string observation =
        view.id < config_.observations.size() ? config_.observations[view.id] : std::string{};
    std::string user = config_.user_template;
    replace_all(user, "{question}", config_.question);
    replace_all(user, "{observation}", observation);
    replace_all(user, "{neighbors}", neighbors);
    replace_all(user, "{round}", view.population ? std::to_string(view.population->round) : "0");
    return user;
}

AgentResponse ExternalAgentAdapter::respond(const AgentView& view) const {
    nlohmann::json request = {
        {"system", config_.system_prompt}, {"user", render_prompt(view)}, {"max_tokens", max_tokens(view.u)}};
    httplib::Client client(config_.host, config_.port);
    const auto secs = static_cast<time_t>(config_.timeout_seconds);
    const auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    const std::string who = "agent " + std::to_string(view.id) + ": ";

    auto res = client.Post(config_.path, request.dump(), "application/json");
    if (!res) {
        log_(who + "request failed (" + httplib::to_string(res.error()) + "); treating as does-not-know");
        return {LatentState::D, "-1"};
    }
    if (res->status != 200) {
        log_(who + "endpoint returned HTTP " + std::to_string(res->status) + "; treating as does-not-know");
        return {LatentState::D, "-1"};
    }
    const auto body = nlohmann::json::parse(res->body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("text") || !body["text"].is_string()) {
        log_(who + "malformed response body; treating as does-not-know");
        return {LatentState::D, "-1"};
    }
    std::string text = body["text"].get<std::string>();
    return {classifier_(text), std::move(text)};
}

} // namespace llmnet
