#include "semslam/embedding.hpp"

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <vector>

#include "semslam/errors.hpp"

namespace semslam {

namespace {

std::uint64_t fnv1a(const char* data, std::size_t n) {
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

NgramHashEmbedding::NgramHashEmbedding(int dim) : dim_(dim) {}

Eigen::VectorXd NgramHashEmbedding::embed(const std::string& label) {
    if (label.empty()) throw EmbeddingUnavailable("embed: empty label");
    auto it = cache_.find(label);
    if (it != cache_.end()) return it->second;

    std::string padded = " ";
    for (char c : label) padded.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    padded.push_back(' ');

    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
        const std::uint64_t h = fnv1a(padded.data() + i, 3);
        const int bucket = static_cast<int>(h % static_cast<std::uint64_t>(dim_));
        const double sign = ((h >> 32) & 1u) ? 1.0 : -1.0;
        v(bucket) += sign;
    }
    if (v.norm() < 1e-12) {
        v(static_cast<int>(fnv1a(padded.data(), padded.size()) %
                           static_cast<std::uint64_t>(dim_))) = 1.0;
    }
    v.normalize();
    cache_.emplace(label, v);
    return v;
}

TextProtocolEmbedding::TextProtocolEmbedding(Transport transport)
    : transport_(std::move(transport)) {}

Eigen::VectorXd TextProtocolEmbedding::embed(const std::string& label) {
    if (label.empty()) throw EmbeddingUnavailable("embed: empty label");
    auto it = cache_.find(label);
    if (it != cache_.end()) return it->second;

    std::string response;
    try {
        response = transport_(label);
    } catch (const std::exception& e) {
        throw EmbeddingUnavailable(std::string("embedding transport failed: ") + e.what());
    }

    std::vector<double> values;
    const char* p = response.c_str();
    while (*p != '\0') {
        while (*p == ' ' || *p == ',' || *p == '\t' || *p == '\n' || *p == '\r') ++p;
        if (*p == '\0') break;
        char* end = nullptr;
        const double v = std::strtod(p, &end);
        if (end == p) {
            throw EmbeddingUnavailable("embedding response is not a float vector: " + response);
        }
        values.push_back(v);
        p = end;
    }
    if (values.empty()) throw EmbeddingUnavailable("embedding response was empty");
    if (dim_ >= 0 && static_cast<Eigen::Index>(values.size()) != dim_) {
        throw EmbeddingUnavailable("embedding dimension changed between responses");
    }

    Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(values.data(),
                                                    static_cast<Eigen::Index>(values.size()));
    const double norm = v.norm();
    if (norm < 1e-12) throw EmbeddingUnavailable("embedding response had zero norm");
    v /= norm;
    dim_ = v.size();
    cache_.emplace(label, v);
    return v;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return a.dot(b) / (na * nb);
}

double semantic_similarity(const std::string& label_a, const std::string& label_b,
                           EmbeddingProvider& provider) {
    if (label_a.empty() || label_b.empty()) {
        throw EmbeddingUnavailable("semantic_similarity: empty label");
    }
    if (label_a == label_b) return 1.0;
    return cosine_similarity(provider.embed(label_a), provider.embed(label_b));
}

} // namespace semslam
