#include "semslam/supervision.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

#include "semslam/errors.hpp"

namespace semslam {

namespace {

// Two-role evaluator system prompts. The tag list of the current composite is
// appended below the template.
const char* kLandmarkEvalTemplate =
    R"(You are an assistant that identifies incorrect tags. You respond according to the given steps.
Step 1. Verify that each tag matches the object in its bounding box.
   example 1:
   Tag 1 (bag): Incorrect. It is empty
   Tag 4 (apple): Incorrect. It contains <object name>
   Tag 5 (apple): Correct
   Tag 6 (soccer ball): Correct
   Tag 7 (ball): Correct
   Tag 8 (ball): Correct
   Tag 11 (chair): Incorrect. It contains <object name>

Step 2. Determine if there are multiple tags pointing to the same object among the tags identified as correct in Step 1. Return Tags [number of multiple tags]. If there are no multiple tags for one object, return "no multiple tag".
   example 1:
   Tags[6, 7, 8] : ball, soccer ball, ball are visually pointing to the same object, which is a blue ball under the desk . <describe the look of an object>

Step 3. If there are multiple tags for one object from the response of Step 2, identify which tag is the most accurate. Choose one most precise tag.
   example 1:
   Tag [6]: object name "soccer ball" is more precise. So, precise_tag = [7]

Step 4. Provide lists, <empty | incorrect | corrected | duplicated | precise_tags_in_duplicated>_tags =[], results from Steps 1 and 3. [] if No tag.
   example 1:
   empty_tags = [1]
   incorrect_tags = [4, 11]
   corrected_tags = ['<object name>', '<object name>']
   duplicated_tags = [(6, 7, 8), ()]
   precise_tags_in_duplicated = [7]
)";

const char* kClassLabelGenTemplate =
    R"(Step 1: Identify the features of the object inside the bounding box for each tag number. Use the cropped images for reference. If there are multiple objects of the same category, list each object with its unique color separately.

 1. Color: What is the primary color of the <object>?
 2. Shape: What shape or structural features does the <object> have?
 3. Distinguishing Features: What features most effectively distinguish this <object> from similar objects?
Example:
 <object>: 1. brown color, 2. rectangle shape, 3. brown color, with a handle

Step 2: Create a descriptive tag for each <object> based on your answers. If multiple objects are identified, create separate tags for each. Use the format: tag_<tag_number> = []

Example:
 tag_<tag_number> = ['green <object>', 'rectangular shape <object>', 'green <object> with a handle']
 tag_<tag_number> = ['brown <object>', 'rectangular shape <object>', 'brown <object> with a handle']
)";

std::string tag_list(const CompositeSpec& spec) {
    std::ostringstream out;
    out << "\nTags:\n";
    for (const auto& e : spec.entries) {
        out << "Tag " << e.number << " (" << e.label << ")\n";
    }
    return out.str();
}

// ---- response parsing ------------------------------------------------------

// Content between the bracket at `open` and its match, quote-aware.
std::string balanced_bracket_content(const std::string& text, std::size_t open) {
    int depth = 0;
    char quote = 0;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char c = text[i];
        if (quote != 0) {
            if (c == quote) quote = 0;
            continue;
        }
        if (c == '\'' || c == '"') {
            quote = c;
        } else if (c == '[') {
            ++depth;
        } else if (c == ']') {
            --depth;
            if (depth == 0) return text.substr(open + 1, i - open - 1);
        }
    }
    throw MalformedResponse("unbalanced brackets in response list");
}

// Splits on commas at depth 0 (outside parentheses and quotes).
std::vector<std::string> split_elements(const std::string& content) {
    std::vector<std::string> out;
    std::string cur;
    int paren = 0;
    char quote = 0;
    for (char c : content) {
        if (quote != 0) {
            cur.push_back(c);
            if (c == quote) quote = 0;
            continue;
        }
        if (c == '\'' || c == '"') {
            quote = c;
            cur.push_back(c);
        } else if (c == '(') {
            ++paren;
            cur.push_back(c);
        } else if (c == ')') {
            --paren;
            cur.push_back(c);
        } else if (c == ',' && paren == 0) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

int parse_int(const std::string& s) {
    const std::string t = trim(s);
    std::size_t used = 0;
    int value = 0;
    try {
        value = std::stoi(t, &used);
    } catch (const std::exception&) {
        throw MalformedResponse("expected an integer, got '" + t + "'");
    }
    if (used != t.size()) throw MalformedResponse("expected an integer, got '" + t + "'");
    return value;
}

std::string parse_string_element(const std::string& s) {
    const std::string t = trim(s);
    if (t.size() >= 2 && (t.front() == '\'' || t.front() == '"') && t.back() == t.front()) {
        return t.substr(1, t.size() - 2);
    }
    return t; // tolerate unquoted labels
}

// Last `name = [...]` occurrence; nullopt when the name never appears.
std::optional<std::string> find_named_list(const std::string& text, const std::regex& name_re) {
    std::optional<std::string> content;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), name_re);
         it != std::sregex_iterator(); ++it) {
        const std::size_t open = static_cast<std::size_t>(it->position() + it->length() - 1);
        content = balanced_bracket_content(text, open);
    }
    return content;
}

std::vector<int> parse_int_list(const std::string& content) {
    std::vector<int> out;
    for (const auto& el : split_elements(content)) {
        const std::string t = trim(el);
        if (t.empty()) continue;
        out.push_back(parse_int(t));
    }
    return out;
}

std::vector<std::string> parse_string_list(const std::string& content) {
    std::vector<std::string> out;
    for (const auto& el : split_elements(content)) {
        const std::string t = trim(el);
        if (t.empty()) continue;
        out.push_back(parse_string_element(t));
    }
    return out;
}

// Groups are parenthesized tuples; loose integers gather into one group.
std::vector<std::vector<int>> parse_group_list(const std::string& content) {
    std::vector<std::vector<int>> groups;
    std::vector<int> loose;
    for (const auto& el : split_elements(content)) {
        const std::string t = trim(el);
        if (t.empty()) continue;
        if (t.front() == '(') {
            if (t.back() != ')') throw MalformedResponse("unbalanced tuple in duplicated list");
            std::vector<int> group;
            for (const auto& part : split_elements(t.substr(1, t.size() - 2))) {
                const std::string p = trim(part);
                if (p.empty()) continue;
                group.push_back(parse_int(p));
            }
            if (!group.empty()) groups.push_back(std::move(group));
        } else {
            loose.push_back(parse_int(t));
        }
    }
    if (loose.size() >= 2) groups.push_back(std::move(loose));
    return groups;
}

} // namespace

const OverlayEntry* CompositeSpec::find(int number) const {
    for (const auto& e : entries) {
        if (e.number == number) return &e;
    }
    return nullptr;
}

CompositeSpec build_composite(const LandmarkMap& landmarks, const GraphEstimate& estimate,
                              const Pose& camera, const CameraIntrinsics& intrinsics,
                              std::uint64_t frame_id, std::size_t max_overlays) {
    CompositeSpec spec;
    spec.frame_id = frame_id;
    spec.width = intrinsics.width;
    spec.height = intrinsics.height;

    int number = 1;
    for (const auto& [key, rec] : landmarks) {
        if (spec.entries.size() >= max_overlays) break;
        auto pos_it = estimate.landmarks.find(key);
        if (pos_it == estimate.landmarks.end()) continue;
        const auto box = project_box(camera, intrinsics, pos_it->second, rec.extent);
        if (!box) continue;

        OverlayEntry entry;
        entry.key = key;
        entry.number = number++;
        entry.box = *box;
        entry.label = rec.semantics.primary_label;
        entry.label_set = rec.semantics.label_set;
        const double pad_u = 0.1 * std::max(box->width(), 4.0);
        const double pad_v = 0.1 * std::max(box->height(), 4.0);
        entry.crop_box = clip_box({box->u_min - pad_u, box->v_min - pad_v, box->u_max + pad_u,
                                   box->v_max + pad_v},
                                  intrinsics.width, intrinsics.height);
        entry.world_pos = pos_it->second;
        entry.extent = rec.extent;
        spec.entries.push_back(std::move(entry));
    }
    return spec;
}

std::string render_landmark_eval_prompt(const CompositeSpec& spec) {
    return std::string(kLandmarkEvalTemplate) + tag_list(spec);
}

std::string render_class_label_gen_prompt(const CompositeSpec& spec) {
    return std::string(kClassLabelGenTemplate) + tag_list(spec);
}

EvalFeedback parse_landmark_eval(const std::string& text) {
    static const std::regex empty_re(R"(empty_(?:tags?|labels?)\s*=\s*\[)",
                                     std::regex::icase);
    static const std::regex incorrect_re(R"(incorrect_(?:tags?|labels?)\s*=\s*\[)",
                                         std::regex::icase);
    static const std::regex corrected_re(R"(corrected_(?:tags?|labels?)\s*=\s*\[)",
                                         std::regex::icase);
    static const std::regex duplicated_re(R"(duplicated_(?:tags?|labels?)\s*=\s*\[)",
                                          std::regex::icase);
    static const std::regex precise_re(
        R"(precise_(?:tags?|labels?)_in_duplicated\s*=\s*\[)", std::regex::icase);

    const auto empty = find_named_list(text, empty_re);
    const auto incorrect = find_named_list(text, incorrect_re);
    const auto corrected = find_named_list(text, corrected_re);
    const auto duplicated = find_named_list(text, duplicated_re);
    const auto precise = find_named_list(text, precise_re);
    if (!empty) throw MalformedResponse("missing empty list");
    if (!incorrect) throw MalformedResponse("missing incorrect list");
    if (!corrected) throw MalformedResponse("missing corrected list");
    if (!duplicated) throw MalformedResponse("missing duplicated list");
    if (!precise) throw MalformedResponse("missing precise_in_duplicated list");

    EvalFeedback out;
    out.empty = parse_int_list(*empty);
    out.incorrect = parse_int_list(*incorrect);
    out.corrected = parse_string_list(*corrected);
    out.duplicated = parse_group_list(*duplicated);
    out.precise_in_duplicated = parse_int_list(*precise);

    if (!out.incorrect.empty() && out.corrected.size() != out.incorrect.size()) {
        throw MisalignedCorrection("corrected list length does not match incorrect list");
    }
    return out;
}

GenFeedback parse_class_label_gen(const std::string& text) {
    GenFeedback out;

    static const std::regex tag_re(R"(tag_(\d+)\s*=\s*\[)", std::regex::icase);
    for (auto it = std::sregex_iterator(text.begin(), text.end(), tag_re);
         it != std::sregex_iterator(); ++it) {
        const int number = std::stoi((*it)[1].str());
        const std::size_t open = static_cast<std::size_t>(it->position() + it->length() - 1);
        auto& dst = out.labels[number];
        for (const auto& label : parse_string_list(balanced_bracket_content(text, open))) {
            if (std::find(dst.begin(), dst.end(), label) == dst.end()) dst.push_back(label);
        }
    }

    // Fig-style transcripts anchor `descriptive_label = [...]` to the nearest
    // preceding bracketed display number.
    static const std::regex descr_re(R"(descriptive_(?:label|tags?)\s*=\s*\[)",
                                     std::regex::icase);
    static const std::regex number_re(R"(\[\s*(\d+)\s*\])");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), descr_re);
         it != std::sregex_iterator(); ++it) {
        const std::size_t at = static_cast<std::size_t>(it->position());
        const std::string before = text.substr(0, at);
        std::optional<int> number;
        for (auto nit = std::sregex_iterator(before.begin(), before.end(), number_re);
             nit != std::sregex_iterator(); ++nit) {
            number = std::stoi((*nit)[1].str());
        }
        if (!number) continue;
        const std::size_t open = static_cast<std::size_t>(it->position() + it->length() - 1);
        auto& dst = out.labels[*number];
        for (const auto& label : parse_string_list(balanced_bracket_content(text, open))) {
            if (std::find(dst.begin(), dst.end(), label) == dst.end()) dst.push_back(label);
        }
    }
    for (auto it = out.labels.begin(); it != out.labels.end();) {
        it = it->second.empty() ? out.labels.erase(it) : std::next(it);
    }
    return out;
}

namespace {

std::string join_ints(const std::vector<int>& xs) {
    std::ostringstream out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i > 0) out << ", ";
        out << xs[i];
    }
    return out.str();
}

std::string join_strings(const std::vector<std::string>& xs) {
    std::ostringstream out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i > 0) out << ", ";
        out << '\'' << xs[i] << '\'';
    }
    return out.str();
}

} // namespace

std::string render_landmark_eval_response(const EvalFeedback& feedback) {
    std::ostringstream out;
    out << "empty_tags = [" << join_ints(feedback.empty) << "]\n";
    out << "incorrect_tags = [" << join_ints(feedback.incorrect) << "]\n";
    out << "corrected_tags = [" << join_strings(feedback.corrected) << "]\n";
    out << "duplicated_tags = [";
    for (std::size_t i = 0; i < feedback.duplicated.size(); ++i) {
        if (i > 0) out << ", ";
        out << '(' << join_ints(feedback.duplicated[i]) << ')';
    }
    out << "]\n";
    out << "precise_tags_in_duplicated = [" << join_ints(feedback.precise_in_duplicated)
        << "]\n";
    return out.str();
}

std::string render_class_label_gen_response(const GenFeedback& feedback) {
    std::ostringstream out;
    for (const auto& [number, labels] : feedback.labels) {
        out << "tag_" << number << " = [" << join_strings(labels) << "]\n";
    }
    return out.str();
}

std::string to_string(EditAction a) {
    switch (a) {
        case EditAction::Removed: return "removed";
        case EditAction::Relabeled: return "relabeled";
        case EditAction::Merged: return "merged";
        case EditAction::LabelGenerated: return "label_generated";
        case EditAction::SkippedStale: return "skipped_stale";
    }
    return "removed";
}

EditAction edit_action_from_string(const std::string& s) {
    if (s == "removed") return EditAction::Removed;
    if (s == "relabeled") return EditAction::Relabeled;
    if (s == "merged") return EditAction::Merged;
    if (s == "label_generated") return EditAction::LabelGenerated;
    if (s == "skipped_stale") return EditAction::SkippedStale;
    throw SchemaViolation("unknown edit action: " + s);
}

EditLog apply_feedback(const CompositeSpec& composite, const EvalFeedback& eval,
                       const GenFeedback& gen, FactorGraph& graph, LandmarkMap& landmarks,
                       ConfusionMatrix& m_matrix, ConfusionMatrix& d_matrix,
                       LabelDatabase& label_db) {
    EditLog log;
    const std::uint64_t frame = composite.frame_id;

    auto resolve = [&](int number) -> std::optional<VariableKey> {
        const OverlayEntry* entry = composite.find(number);
        if (entry == nullptr) {
            log.push_back({frame, EditAction::SkippedStale, 0,
                           "unknown display number " + std::to_string(number)});
            return std::nullopt;
        }
        if (landmarks.count(entry->key) == 0 || !graph.has_variable(entry->key)) {
            log.push_back({frame, EditAction::SkippedStale, entry->key.index,
                           "landmark no longer exists (number " + std::to_string(number) + ")"});
            return std::nullopt;
        }
        return entry->key;
    };

    auto remove_landmark = [&](VariableKey key) {
        const std::size_t n = graph.remove_landmark_factors(key);
        landmarks.erase(key);
        return n;
    };

    // (a) empty verdicts: drop the landmark and its factors
    for (int number : eval.empty) {
        const auto key = resolve(number);
        if (!key) continue;
        const std::size_t n = remove_landmark(*key);
        log.push_back({frame, EditAction::Removed, key->index,
                       "empty verdict, " + std::to_string(n) + " factors removed"});
    }

    // (b) incorrect verdicts: record {incorrect, refined} and relabel in place
    const std::size_t n_corrections = std::min(eval.incorrect.size(), eval.corrected.size());
    for (std::size_t i = 0; i < n_corrections; ++i) {
        const auto key = resolve(eval.incorrect[i]);
        if (!key) continue;
        auto& rec = landmarks.at(*key);
        const std::string old_label = rec.semantics.primary_label;
        const std::string& new_label = eval.corrected[i];
        if (new_label.empty() || old_label == new_label) continue;
        m_matrix.record(old_label, new_label);
        rec.semantics.primary_label = new_label;
        rec.semantics.add_label(new_label);
        rec.semantics.status = LandmarkStatus::Refined;
        log.push_back({frame, EditAction::Relabeled, key->index,
                       old_label + " -> " + new_label});
    }

    // (c) duplicated groups: keep the precise member, merge the rest into it
    for (std::size_t gi = 0; gi < eval.duplicated.size(); ++gi) {
        const auto& group = eval.duplicated[gi];
        std::vector<std::pair<int, VariableKey>> members;
        for (int number : group) {
            const auto key = resolve(number);
            if (key) members.emplace_back(number, *key);
        }
        if (members.size() < 2) continue;

        std::optional<int> precise_number;
        if (gi < eval.precise_in_duplicated.size()) {
            precise_number = eval.precise_in_duplicated[gi];
        }
        std::size_t precise_idx = 0;
        if (precise_number) {
            for (std::size_t i = 0; i < members.size(); ++i) {
                if (members[i].first == *precise_number) precise_idx = i;
            }
        }

        const VariableKey survivor_key = members[precise_idx].second;
        auto& survivor = landmarks.at(survivor_key);
        for (std::size_t i = 0; i < members.size(); ++i) {
            if (i == precise_idx) continue;
            const VariableKey victim_key = members[i].second;
            auto& victim = landmarks.at(victim_key);
            if (victim.semantics.primary_label != survivor.semantics.primary_label) {
                d_matrix.record(survivor.semantics.primary_label,
                                victim.semantics.primary_label);
            }
            for (const auto& label : victim.semantics.label_set) {
                survivor.semantics.add_label(label);
            }
            survivor.observation_count += victim.observation_count;
            const std::string victim_label = victim.semantics.primary_label;
            remove_landmark(victim_key);
            log.push_back({frame, EditAction::Merged, victim_key.index,
                           victim_label + " merged into landmark " +
                               std::to_string(survivor_key.index)});
        }
        survivor.semantics.status = LandmarkStatus::PreciseAmongDuplicated;
    }

    // (d) generated labels extend surviving landmarks and the label database
    for (const auto& [number, labels] : gen.labels) {
        const auto key = resolve(number);
        if (!key) continue;
        auto& rec = landmarks.at(*key);
        std::vector<std::string> added;
        for (const auto& label : labels) {
            if (label.empty()) continue;
            if (rec.semantics.add_label(label)) added.push_back(label);
            label_db.add(label);
        }
        if (added.empty()) continue;
        rec.semantics.status = LandmarkStatus::Generated;
        std::string detail = "labels:";
        for (const auto& l : added) detail += " " + l;
        log.push_back({frame, EditAction::LabelGenerated, key->index, detail});
    }

    return log;
}

} // namespace semslam
