#include "semslam/semantics.hpp"

#include <algorithm>
#include <numeric>

#include "semslam/errors.hpp"

namespace semslam {

ConfusionMatrix::ConfusionMatrix(double kappa) : kappa_(kappa) {
    if (kappa <= 0.0) throw Error("ConfusionMatrix: smoothing kappa must be > 0");
}

int ConfusionMatrix::index_of(const std::string& label) const {
    auto it = index_.find(label);
    return it == index_.end() ? -1 : it->second;
}

int ConfusionMatrix::insert(const std::string& label) {
    const int existing = index_of(label);
    if (existing >= 0) return existing;
    const int idx = static_cast<int>(labels_.size());
    labels_.push_back(label);
    index_[label] = idx;
    for (auto& row : counts_) row.push_back(0);
    counts_.emplace_back(labels_.size(), 0);
    return idx;
}

void ConfusionMatrix::record(const std::string& truth, const std::string& observed) {
    if (truth.empty() || observed.empty()) {
        throw Error("ConfusionMatrix::record: labels must be non-empty");
    }
    const int t = insert(truth);
    const int o = insert(observed);
    counts_[t][o] += 1;
}

double ConfusionMatrix::likelihood(const std::string& observed,
                                   const std::string& hypothesis) const {
    const int h = index_of(hypothesis);
    const int o = index_of(observed);
    if (h < 0 || o < 0) throw UnknownLabel("ConfusionMatrix::likelihood: unknown label");
    const double row_sum = static_cast<double>(
        std::accumulate(counts_[h].begin(), counts_[h].end(), std::int64_t{0}));
    const double n = static_cast<double>(labels_.size());
    return (static_cast<double>(counts_[h][o]) + kappa_) / (row_sum + kappa_ * n);
}

bool ConfusionMatrix::contains(const std::string& label) const { return index_of(label) >= 0; }

std::int64_t ConfusionMatrix::count(const std::string& truth,
                                    const std::string& observed) const {
    const int t = index_of(truth);
    const int o = index_of(observed);
    if (t < 0 || o < 0) return 0;
    return counts_[t][o];
}

ConfusionMatrix ConfusionMatrix::from_counts(std::vector<std::string> labels,
                                             std::vector<std::vector<std::int64_t>> counts,
                                             double kappa) {
    if (counts.size() != labels.size()) {
        throw SchemaViolation("ConfusionMatrix: counts rows must match labels");
    }
    for (const auto& row : counts) {
        if (row.size() != labels.size()) {
            throw SchemaViolation("ConfusionMatrix: counts must be square");
        }
        for (std::int64_t c : row) {
            if (c < 0) throw SchemaViolation("ConfusionMatrix: counts must be non-negative");
        }
    }
    ConfusionMatrix m(kappa);
    m.labels_ = std::move(labels);
    for (std::size_t i = 0; i < m.labels_.size(); ++i) {
        m.index_[m.labels_[i]] = static_cast<int>(i);
    }
    if (m.index_.size() != m.labels_.size()) {
        throw SchemaViolation("ConfusionMatrix: duplicate labels");
    }
    m.counts_ = std::move(counts);
    return m;
}

PosteriorResult posterior_class_update(const Detection& det, const ConfusionMatrix& m) {
    PosteriorResult out;
    out.label = det.label;
    if (!m.contains(det.label) || m.size() < 2) {
        out.posterior[det.label] = 1.0;
        return out;
    }

    const double n = static_cast<double>(m.size());
    const double conf = det.confidence;
    double total = 0.0;
    for (const auto& c : m.labels()) {
        const double prior = (c == det.label) ? conf : (1.0 - conf) / (n - 1.0);
        const double score = prior * m.likelihood(det.label, c);
        out.posterior[c] = score;
        total += score;
    }
    if (total <= 0.0) {
        // degenerate prior concentrates all mass on the detected label
        for (auto& [c, p] : out.posterior) p = (c == det.label) ? 1.0 : 0.0;
        return out;
    }
    for (auto& [c, p] : out.posterior) p /= total;

    // argmax in label order; the detected label wins ties (within rounding)
    double best = out.posterior[det.label];
    for (const auto& c : m.labels()) {
        if (out.posterior[c] > best + 1e-12) {
            best = out.posterior[c];
            out.label = c;
        }
    }
    return out;
}

std::string to_string(LandmarkStatus s) {
    switch (s) {
        case LandmarkStatus::Correct: return "correct";
        case LandmarkStatus::Empty: return "empty";
        case LandmarkStatus::Incorrect: return "incorrect";
        case LandmarkStatus::Refined: return "refined";
        case LandmarkStatus::Duplicated: return "duplicated";
        case LandmarkStatus::PreciseAmongDuplicated: return "precise_among_duplicated";
        case LandmarkStatus::Generated: return "generated";
    }
    return "correct";
}

LandmarkStatus landmark_status_from_string(const std::string& s) {
    if (s == "correct") return LandmarkStatus::Correct;
    if (s == "empty") return LandmarkStatus::Empty;
    if (s == "incorrect") return LandmarkStatus::Incorrect;
    if (s == "refined") return LandmarkStatus::Refined;
    if (s == "duplicated") return LandmarkStatus::Duplicated;
    if (s == "precise_among_duplicated") return LandmarkStatus::PreciseAmongDuplicated;
    if (s == "generated") return LandmarkStatus::Generated;
    throw SchemaViolation("unknown landmark status: " + s);
}

bool LandmarkSemantics::add_label(const std::string& label) {
    if (std::find(label_set.begin(), label_set.end(), label) != label_set.end()) return false;
    label_set.push_back(label);
    return true;
}

bool LabelDatabase::add(const std::string& label) {
    if (label.empty()) throw Error("LabelDatabase::add: empty label");
    if (present_.count(label) > 0) return false;
    present_[label] = true;
    labels_.push_back(label);
    return true;
}

bool LabelDatabase::contains(const std::string& label) const {
    return present_.count(label) > 0;
}

std::vector<std::pair<VariableKey, VariableKey>> find_duplicate_pairs(
    const LandmarkMap& landmarks, const GraphEstimate& estimate, const Pose& camera,
    const CameraIntrinsics& intrinsics, double iou_thresh, double dist_thresh) {
    struct Projected {
        VariableKey key;
        Eigen::Vector3d position;
        PixelBox box;
    };
    std::vector<Projected> projected;
    for (const auto& [key, rec] : landmarks) {
        auto pos_it = estimate.landmarks.find(key);
        if (pos_it == estimate.landmarks.end()) continue;
        const auto box = project_box(camera, intrinsics, pos_it->second, rec.extent);
        if (!box) continue;
        projected.push_back({key, pos_it->second, *box});
    }

    std::vector<std::pair<VariableKey, VariableKey>> pairs;
    for (std::size_t i = 0; i < projected.size(); ++i) {
        for (std::size_t j = i + 1; j < projected.size(); ++j) {
            if ((projected[i].position - projected[j].position).norm() >= dist_thresh) continue;
            if (box_iou(projected[i].box, projected[j].box) <= iou_thresh) continue;
            pairs.emplace_back(projected[i].key, projected[j].key);
        }
    }
    return pairs;
}

std::vector<VariableKey> resolve_duplicates(
    const std::vector<std::pair<VariableKey, VariableKey>>& pairs,
    const ConfusionMatrix& d_matrix, LandmarkMap& landmarks) {
    std::vector<VariableKey> removals;
    for (const auto& [ka, kb] : pairs) {
        auto ita = landmarks.find(ka);
        auto itb = landmarks.find(kb);
        if (ita == landmarks.end() || itb == landmarks.end()) continue;

        const std::string& la = ita->second.semantics.primary_label;
        const std::string& lb = itb->second.semantics.primary_label;
        const std::int64_t a_precise = d_matrix.count(la, lb);
        const std::int64_t b_precise = d_matrix.count(lb, la);
        if (a_precise == b_precise) continue; // tie: insufficient evidence

        auto& survivor = (a_precise > b_precise) ? ita->second : itb->second;
        auto& victim_it = (a_precise > b_precise) ? itb : ita;
        for (const auto& label : victim_it->second.semantics.label_set) {
            survivor.semantics.add_label(label);
        }
        survivor.semantics.status = LandmarkStatus::PreciseAmongDuplicated;
        removals.push_back(victim_it->first);
        landmarks.erase(victim_it);
    }
    return removals;
}

} // namespace semslam
