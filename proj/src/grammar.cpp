#include "navlab/grammar.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <json.hpp>

#include "navlab/errors.hpp"
#include "navlab/rng.hpp"

namespace navlab::grammar {

namespace {

// Single source of truth for the controlled vocabulary; also written to
// resources/grammar_vocabulary.json.
constexpr const char* kVocabularyJson = R"JSON({
  "categories": ["bathroom", "hallway", "kitchen", "couch", "barstool", "countertop",
                 "arched entryway", "stairs", "glass door", "wall", "pantry", "bedroom",
                 "table", "plant", "lamp", "window"],
  "room_categories": ["bathroom", "hallway", "kitchen", "pantry", "bedroom"],
  "verb_patterns": {
    "EXIT": ["exit the "],
    "ENTER": ["enter the ", "walk into the "],
    "WALK_TO": ["go straight to the end of the ", "walk to the ", "head to the "],
    "PASS": ["pass the ", "walk past the "],
    "TURN_LEFT": ["turn left"],
    "TURN_RIGHT": ["turn right"],
    "STOP_AT": ["stop at the "]
  },
  "connectors": ["and", "then"],
  "k_max": 8
})JSON";

const char* kVerbKeys[] = {"EXIT", "ENTER", "WALK_TO", "PASS", "TURN_LEFT", "TURN_RIGHT",
                           "STOP_AT"};

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ' ') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

const char* verb_name(Verb v) {
    switch (v) {
        case Verb::Exit: return "EXIT";
        case Verb::Enter: return "ENTER";
        case Verb::WalkTo: return "WALK_TO";
        case Verb::Pass: return "PASS";
        case Verb::TurnLeft: return "TURN_LEFT";
        case Verb::TurnRight: return "TURN_RIGHT";
        case Verb::StopAt: return "STOP_AT";
    }
    return "?";
}

CompletionKind completion_for(Verb v) {
    switch (v) {
        case Verb::TurnLeft:
        case Verb::TurnRight: return CompletionKind::ExecuteTurn;
        case Verb::StopAt: return CompletionKind::Stop;
        default: return CompletionKind::ReachLandmark;
    }
}

Vocabulary Vocabulary::from_json(const std::string& json_text) {
    const auto j = nlohmann::json::parse(json_text);
    Vocabulary v;
    v.categories_ = j.at("categories").get<std::vector<std::string>>();
    v.room_categories_ = j.at("room_categories").get<std::vector<std::string>>();
    v.verb_patterns_.resize(7);
    for (int i = 0; i < 7; ++i) {
        v.verb_patterns_[static_cast<std::size_t>(i)] =
            j.at("verb_patterns").at(kVerbKeys[i]).get<std::vector<std::string>>();
    }
    v.connectors_ = j.at("connectors").get<std::vector<std::string>>();
    v.k_max_ = j.at("k_max").get<int>();

    // Token vocabulary in first-seen order: verb template words, connectors,
    // category words, punctuation.
    auto add = [&v](const std::string& w) {
        if (std::find(v.tokens_.begin(), v.tokens_.end(), w) == v.tokens_.end())
            v.tokens_.push_back(w);
    };
    for (const auto& pats : v.verb_patterns_)
        for (const auto& p : pats)
            for (const auto& w : split_words(p)) add(w);
    for (const auto& c : v.connectors_) add(c);
    for (const auto& cat : v.categories_)
        for (const auto& w : split_words(cat)) add(w);
    add(",");
    add(".");
    return v;
}

const Vocabulary& Vocabulary::instance() {
    static const Vocabulary v = from_json(kVocabularyJson);
    return v;
}

const std::string& Vocabulary::category_name(int id) const {
    if (id < 0 || id >= num_categories()) throw InputError("category id out of range");
    return categories_[static_cast<std::size_t>(id)];
}

std::optional<int> Vocabulary::category_id(const std::string& name) const {
    for (std::size_t i = 0; i < categories_.size(); ++i) {
        if (categories_[i] == name) return static_cast<int>(i);
    }
    return std::nullopt;
}

bool Vocabulary::is_room(int id) const {
    const auto& name = category_name(id);
    return std::find(room_categories_.begin(), room_categories_.end(), name) !=
           room_categories_.end();
}

const std::vector<std::string>& Vocabulary::patterns(Verb v) const {
    return verb_patterns_[static_cast<std::size_t>(v)];
}

int Vocabulary::token_id(const std::string& word) const {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i] == word) return static_cast<int>(i);
    }
    throw InputError("word not in controlled vocabulary: '" + word + "'");
}

std::vector<int> Vocabulary::tokenize(const std::string& text) const {
    std::vector<int> ids;
    std::string cur;
    auto flush = [&]() {
        if (!cur.empty()) {
            ids.push_back(token_id(cur));
            cur.clear();
        }
    };
    for (char c : text) {
        if (c == ' ') {
            flush();
        } else if (c == ',' || c == '.') {
            flush();
            ids.push_back(token_id(std::string(1, c)));
        } else {
            cur.push_back(c);
        }
    }
    flush();
    return ids;
}

// ---------------------------------------------------------------------------
// decompose

namespace {

struct ClauseParse {
    Verb verb;
    std::optional<int> category;
};

// Parses the clause core (separator stripped). `base` is the clause's byte
// offset in the full text, used for error reporting.
ClauseParse parse_clause(const std::string& core, std::size_t base, const Vocabulary& voc) {
    std::size_t i = 0;
    while (i < core.size() && core[i] == ' ') ++i;
    // Optional leading connector.
    for (const auto& conn : voc.connectors()) {
        if (core.compare(i, conn.size() + 1, conn + " ") == 0) {
            i += conn.size() + 1;
            break;
        }
    }
    while (i < core.size() && core[i] == ' ') ++i;
    const std::string rest = core.substr(i);

    // Try every pattern, longest first, so e.g. "walk into the" wins over
    // "walk to the" prefixes.
    struct Cand {
        Verb verb;
        const std::string* pattern;
    };
    std::vector<Cand> cands;
    for (int vi = 0; vi < 7; ++vi) {
        for (const auto& p : voc.patterns(static_cast<Verb>(vi)))
            cands.push_back({static_cast<Verb>(vi), &p});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.pattern->size() > b.pattern->size(); });

    for (const auto& c : cands) {
        const std::string& pat = *c.pattern;
        if (c.verb == Verb::TurnLeft || c.verb == Verb::TurnRight) {
            if (rest == pat) return {c.verb, std::nullopt};
            continue;
        }
        if (rest.rfind(pat, 0) == 0) {
            const std::string noun = rest.substr(pat.size());
            const auto cat = voc.category_id(noun);
            if (!cat)
                throw ParseError("unknown landmark noun '" + noun + "'", base + i + pat.size());
            return {c.verb, cat};
        }
    }
    throw ParseError("unrecognized verb phrase", base + i);
}

}  // namespace

std::vector<SubGoal> decompose(const std::string& text) {
    const auto& voc = Vocabulary::instance();
    if (text.empty()) throw ParseError("empty instruction", 0);
    std::vector<SubGoal> out;
    std::size_t cursor = 0;
    while (cursor < text.size()) {
        const std::size_t sep = text.find_first_of(",.", cursor);
        if (sep == std::string::npos)
            throw ParseError("missing clause separator", text.size());
        if (text[sep] == '.' && sep + 1 != text.size())
            throw ParseError("text continues after final '.'", sep + 1);
        const std::string clause = text.substr(cursor, sep - cursor + 1);
        const std::string core = clause.substr(0, clause.size() - 1);
        const auto parsed = parse_clause(core, cursor, voc);
        SubGoal sg;
        sg.verb = parsed.verb;
        sg.category = parsed.category;
        sg.clause = clause;
        sg.completion = completion_for(parsed.verb);
        out.push_back(std::move(sg));
        cursor = sep + 1;
    }
    if (out.empty()) throw ParseError("no clauses found", 0);
    if (out.back().clause.back() != '.')
        throw ParseError("instruction must end with '.'", text.size());
    return out;
}

std::string prefix_text(const Instruction& instr, int k) {
    if (k < 0 || k > instr.num_subgoals())
        throw InputError("prefix boundary out of range: k=" + std::to_string(k));
    if (k == 0) return "";
    return instr.text.substr(0, static_cast<std::size_t>(instr.clause_spans[k - 1].second));
}

// ---------------------------------------------------------------------------
// generate

namespace {

struct PathEvent {
    enum Kind { LandmarkVisit, Turn } kind;
    double arc = 0.0;
    int category = -1;   // landmark events
    bool left = false;   // turn events
};

}  // namespace

Instruction generate(const worldsim::FloorPlan& plan, const std::vector<Vec2>& reference_path,
                     std::uint64_t seed, const GenerateOptions& opts) {
    const auto& voc = Vocabulary::instance();
    if (reference_path.size() < 2) throw GenerationFailure("reference path too short");

    int near_count = 0;
    std::vector<PathEvent> landmark_events;
    for (const auto& lm : plan.landmarks) {
        const auto proj = project_to_polyline(reference_path, lm.center);
        if (proj.distance <= opts.precheck_radius) ++near_count;
        if (proj.distance <= opts.select_radius)
            landmark_events.push_back({PathEvent::LandmarkVisit, proj.arc, lm.category, false});
    }
    if (near_count < 2)
        throw GenerationFailure("path passes within 2.0 m of fewer than 2 landmarks");
    if (landmark_events.size() < 2)
        throw GenerationFailure("too few landmarks close enough to reference in an instruction");

    std::vector<PathEvent> events = landmark_events;
    // Turn events at direction changes above the threshold; nearby ones merge.
    double arc = 0.0;
    double pending_angle = 0.0;
    double pending_arc = 0.0;
    auto flush_turn = [&]() {
        if (std::abs(pending_angle) > opts.turn_threshold)
            events.push_back({PathEvent::Turn, pending_arc, -1, pending_angle > 0});
        pending_angle = 0.0;
    };
    for (std::size_t i = 1; i + 1 < reference_path.size(); ++i) {
        arc += distance(reference_path[i - 1], reference_path[i]);
        const Vec2 d0 = reference_path[i] - reference_path[i - 1];
        const Vec2 d1 = reference_path[i + 1] - reference_path[i];
        if (d0.norm() < 1e-9 || d1.norm() < 1e-9) continue;
        const double ang = wrap_angle(std::atan2(d1.y, d1.x) - std::atan2(d0.y, d0.x));
        if (pending_angle != 0.0 && arc - pending_arc > 0.6) flush_turn();
        if (pending_angle == 0.0) pending_arc = arc;
        pending_angle += ang;
    }
    flush_turn();

    std::stable_sort(events.begin(), events.end(),
                     [](const PathEvent& a, const PathEvent& b) { return a.arc < b.arc; });

    // Cap at k_max sub-goals: always keep the first and last event, thin the
    // middle deterministically.
    const int k_max = voc.k_max();
    while (static_cast<int>(events.size()) > k_max) {
        // Remove the middle event closest to its predecessor in arc.
        std::size_t victim = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i + 1 < events.size(); ++i) {
            const double gap = events[i].arc - events[i - 1].arc;
            if (gap < best) {
                best = gap;
                victim = i;
            }
        }
        events.erase(events.begin() + static_cast<std::ptrdiff_t>(victim));
    }
    if (events.size() < 2) throw GenerationFailure("instruction needs at least 2 sub-goals");

    Rng rng(seed);
    const double total_arc = polyline_length(reference_path);
    std::vector<std::string> clause_cores;
    std::vector<SubGoal> subgoals;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& ev = events[i];
        SubGoal sg;
        std::string core;
        if (ev.kind == PathEvent::Turn) {
            sg.verb = ev.left ? Verb::TurnLeft : Verb::TurnRight;
            core = voc.patterns(sg.verb)[0];
        } else {
            const bool is_last = (i + 1 == events.size());
            const bool room = voc.is_room(ev.category);
            if (is_last && total_arc - ev.arc <= 2.0) {
                sg.verb = Verb::StopAt;
            } else if (i == 0 && room && ev.arc <= opts.exit_max_arc) {
                sg.verb = Verb::Exit;
            } else if (room) {
                sg.verb = rng.bernoulli(0.5) ? Verb::Enter : Verb::WalkTo;
            } else {
                sg.verb = rng.bernoulli(0.5) ? Verb::Pass : Verb::WalkTo;
            }
            const auto& pats = voc.patterns(sg.verb);
            std::size_t pi = 0;
            if (pats.size() > 1) pi = rng.below(pats.size());
            // "go straight to the end of the X" reads naturally only for rooms.
            if (sg.verb == Verb::WalkTo && !room) pi = std::max<std::size_t>(pi, 1);
            if (sg.verb == Verb::WalkTo && room) pi = 0;
            core = pats[pi] + voc.category_name(ev.category);
            sg.category = ev.category;
        }
        sg.completion = completion_for(sg.verb);
        clause_cores.push_back(core);
        subgoals.push_back(std::move(sg));
    }

    // Surface realization: clauses own their separators so prefixes are
    // byte-exact. The final clause starts with a connector.
    const std::string final_conn = rng.bernoulli(0.7) ? "and" : "then";
    Instruction instr;
    for (std::size_t i = 0; i < subgoals.size(); ++i) {
        std::string clause;
        if (i > 0) clause += " ";
        if (i + 1 == subgoals.size() && subgoals.size() > 1) clause += final_conn + " ";
        clause += clause_cores[i];
        clause += (i + 1 == subgoals.size()) ? "." : ",";
        const int start = static_cast<int>(instr.text.size());
        instr.text += clause;
        instr.clause_spans.emplace_back(start, static_cast<int>(instr.text.size()));
        subgoals[i].clause = clause;
    }
    instr.subgoals = std::move(subgoals);
    return instr;
}

}  // namespace navlab::grammar
