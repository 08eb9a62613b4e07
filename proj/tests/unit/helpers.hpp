#pragma once

#include "llmnet/graph.hpp"
#include "llmnet/kernel.hpp"
#include "llmnet/meanfield.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace test {

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("llmnet_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string source_dir() {
    const char* s = std::getenv("LLMNET_SOURCE_DIR");
    return s ? s : LLMNET_SOURCE_DIR_FALLBACK;
}

inline llmnet::SimplexDensity random_simplex(std::mt19937_64& rng) {
    std::exponential_distribution<double> e(1.0);
    const double a = e(rng), b = e(rng), c = e(rng), s = a + b + c;
    return {a / s, b / s, c / s};
}

inline llmnet::DegreeDistribution random_q(std::mt19937_64& rng, std::size_t max_degree) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    llmnet::DegreeDistribution q;
    double s = 0.0;
    for (std::size_t l = 0; l <= max_degree; ++l) s += q.probs.emplace_back(u(rng));
    for (double& p : q.probs) p /= s;
    return q;
}

inline llmnet::MeanFieldState random_state(std::mt19937_64& rng, std::size_t classes) {
    llmnet::MeanFieldState s;
    for (std::size_t l = 0; l < classes; ++l) s.classes.push_back(random_simplex(rng));
    return s;
}

// Default logistic family with the unanimity override that makes the T row absorbing.
inline llmnet::LogisticKernelParams absorbing_params(double activity = 0.05) {
    llmnet::LogisticKernelParams p;
    p.activity = activity;
    p.absorbing_when_unanimous = true;
    return p;
}

// Power-law in-degree distribution on 1..max_degree.
inline llmnet::DegreeDistribution power_law_q(double exponent, std::size_t max_degree) {
    llmnet::DegreeDistribution q;
    q.probs.assign(max_degree + 1, 0.0);
    double s = 0.0;
    for (std::size_t l = 1; l <= max_degree; ++l) s += q.probs[l] = std::pow(static_cast<double>(l), -exponent);
    for (double& p : q.probs) p /= s;
    return q;
}

} // namespace test
