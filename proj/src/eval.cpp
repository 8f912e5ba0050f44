#include "semslam/eval.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "semslam/errors.hpp"

namespace semslam {

TrajectoryRecord pose_to_record(double t, const Pose& pose) {
    TrajectoryRecord rec;
    rec.t = t;
    rec.translation = pose.translation;
    Eigen::Quaterniond q(pose.rotation);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    rec.quaternion = Eigen::Vector4d(q.x(), q.y(), q.z(), q.w());
    return rec;
}

Pose record_to_pose(const TrajectoryRecord& rec) {
    const Eigen::Quaterniond q(rec.quaternion(3), rec.quaternion(0), rec.quaternion(1),
                               rec.quaternion(2));
    return Pose(q.normalized().toRotationMatrix(), rec.translation);
}

ApeStats ape(const std::vector<TrajectoryRecord>& est,
             const std::vector<TrajectoryRecord>& gt) {
    if (est.size() != gt.size()) {
        throw LengthMismatch("ape: trajectories have different lengths (" +
                             std::to_string(est.size()) + " vs " + std::to_string(gt.size()) +
                             ")");
    }
    if (est.empty()) throw LengthMismatch("ape: empty trajectories");

    std::vector<double> errors;
    errors.reserve(est.size());
    double sum = 0.0;
    double sum_sq = 0.0;
    double max_err = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        if (std::abs(est[i].t - gt[i].t) > 1e-6) {
            throw LengthMismatch("ape: timestamps disagree at sample " + std::to_string(i));
        }
        const double e = (est[i].translation - gt[i].translation).norm();
        errors.push_back(e);
        sum += e;
        sum_sq += e * e;
        max_err = std::max(max_err, e);
    }

    std::sort(errors.begin(), errors.end());
    const std::size_t n = errors.size();
    ApeStats stats;
    stats.rmse = std::sqrt(sum_sq / static_cast<double>(n));
    stats.mean = sum / static_cast<double>(n);
    stats.median = (n % 2 == 1) ? errors[n / 2] : 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
    stats.max_error = max_err;
    return stats;
}

namespace {

std::vector<std::string> tokens(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

bool shares_category_token(const std::vector<std::string>& label_set,
                           const std::string& category) {
    const std::vector<std::string> cat_tokens = tokens(category);
    if (cat_tokens.empty()) return false;
    for (const auto& label : label_set) {
        const std::vector<std::string> label_tokens = tokens(label);
        const bool all = std::all_of(cat_tokens.begin(), cat_tokens.end(), [&](const auto& t) {
            return std::find(label_tokens.begin(), label_tokens.end(), t) != label_tokens.end();
        });
        if (all) return true;
    }
    return false;
}

} // namespace

PrfResult landmark_prf(const MapExport& map, const WorldGT& world, const MatchConfig& cfg,
                       EmbeddingProvider* embeddings) {
    NgramHashEmbedding fallback;
    EmbeddingProvider& emb = embeddings != nullptr ? *embeddings : fallback;

    // objects removed by any recorded event are excluded from ground truth
    std::vector<const WorldObject*> gt_objects;
    for (const auto& o : world.objects) {
        if (!o.active_until) gt_objects.push_back(&o);
    }

    auto semantic_pass = [&](const MapLandmark& lm, const WorldObject& obj) {
        if (cfg.rule == MatchConfig::SemanticRule::ExactCategory) {
            return shares_category_token(lm.label_set, obj.category);
        }
        double best = -1.0;
        for (const auto& label : lm.label_set) {
            best = std::max(best, semantic_similarity(label, obj.category, emb));
        }
        return best >= cfg.embedding_tau;
    };

    struct Candidate {
        std::size_t lm;
        std::size_t gt;
        double dist;
    };
    std::vector<Candidate> candidates;
    for (std::size_t li = 0; li < map.landmarks.size(); ++li) {
        for (std::size_t gi = 0; gi < gt_objects.size(); ++gi) {
            const double dist = (map.landmarks[li].position - gt_objects[gi]->position).norm();
            if (dist > cfg.distance_threshold) continue;
            if (!semantic_pass(map.landmarks[li], *gt_objects[gi])) continue;
            candidates.push_back({li, gi, dist});
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.dist < b.dist; });

    std::set<std::size_t> lm_used;
    std::set<std::size_t> gt_used;
    int tp = 0;
    for (const auto& c : candidates) {
        if (lm_used.count(c.lm) > 0 || gt_used.count(c.gt) > 0) continue;
        lm_used.insert(c.lm);
        gt_used.insert(c.gt);
        ++tp;
    }

    PrfResult out;
    out.est_count = static_cast<int>(map.landmarks.size());
    out.gt_count = static_cast<int>(gt_objects.size());
    out.true_pos = tp;
    out.false_pos = out.est_count - tp;
    out.false_neg = out.gt_count - tp;
    out.precision = out.est_count > 0 ? static_cast<double>(tp) / out.est_count : 0.0;
    out.recall = out.gt_count > 0 ? static_cast<double>(tp) / out.gt_count : 0.0;
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

} // namespace semslam
