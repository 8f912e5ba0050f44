#ifndef SEMSLAM_EMBEDDING_HPP
#define SEMSLAM_EMBEDDING_HPP

#include <Eigen/Core>
#include <functional>
#include <map>
#include <string>

namespace semslam {

/// Maps a label to a unit-normalized vector. Implementations must be
/// deterministic: the same label always yields the same vector.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual Eigen::VectorXd embed(const std::string& label) = 0;
};

/// Default provider: lowercased, space-padded character 3-grams hashed
/// (FNV-1a) into a signed fixed-dimension vector, then normalized. Needs no
/// external model and keeps equal-label similarity exactly 1.
class NgramHashEmbedding : public EmbeddingProvider {
public:
    explicit NgramHashEmbedding(int dim = 256);
    Eigen::VectorXd embed(const std::string& label) override;

private:
    int dim_;
    std::map<std::string, Eigen::VectorXd> cache_;
};

/// Adapter for external embedding backends speaking a plain text protocol:
/// the request is the label string, the response a list of decimal floats
/// (whitespace or comma separated). The transport is any callable; responses
/// are validated against a fixed dimension, normalized, and cached, so a
/// label embeds identically for the rest of the run. Transport failures,
/// unparseable bodies, and dimension changes raise EmbeddingUnavailable.
class TextProtocolEmbedding : public EmbeddingProvider {
public:
    using Transport = std::function<std::string(const std::string&)>;
    explicit TextProtocolEmbedding(Transport transport);
    Eigen::VectorXd embed(const std::string& label) override;

private:
    Transport transport_;
    Eigen::Index dim_ = -1; // pinned by the first response
    std::map<std::string, Eigen::VectorXd> cache_;
};

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Cosine of the providers' embeddings; equal strings short-circuit to 1.
double semantic_similarity(const std::string& label_a, const std::string& label_b,
                           EmbeddingProvider& provider);

} // namespace semslam

#endif
