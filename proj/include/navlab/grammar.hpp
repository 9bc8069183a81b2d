#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "navlab/worldsim.hpp"

namespace navlab::grammar {

enum class Verb : int {
    Exit = 0,
    Enter = 1,
    WalkTo = 2,
    Pass = 3,
    TurnLeft = 4,
    TurnRight = 5,
    StopAt = 6,
};

enum class CompletionKind : int {
    ReachLandmark = 0,  // first approach within 1.0 m of the landmark instance
    ExecuteTurn = 1,    // the matching run of turn actions finishes
    Stop = 2,           // terminal STOP
};

const char* verb_name(Verb v);
CompletionKind completion_for(Verb v);

// Distance at which a landmark sub-goal counts as reached.
constexpr double kCompletionRadius = 1.0;

struct SubGoal {
    Verb verb = Verb::WalkTo;
    std::optional<int> category;  // landmark category id; empty for turns
    std::string clause;           // exact surface text including separators
    CompletionKind completion = CompletionKind::ReachLandmark;
};

struct Instruction {
    std::string text;
    std::vector<SubGoal> subgoals;
    // Half-open byte ranges partitioning `text`, one per sub-goal.
    std::vector<std::pair<int, int>> clause_spans;

    int num_subgoals() const { return static_cast<int>(subgoals.size()); }
};

// Controlled vocabulary: the 16 landmark categories (index = category id),
// the surface patterns for each verb, and the connector words. Shipped as a
// JSON resource and embedded as a fallback.
class Vocabulary {
public:
    static const Vocabulary& instance();
    static Vocabulary from_json(const std::string& json_text);

    int num_categories() const { return static_cast<int>(categories_.size()); }
    const std::string& category_name(int id) const;
    std::optional<int> category_id(const std::string& name) const;
    bool is_room(int id) const;
    const std::vector<std::string>& categories() const { return categories_; }
    const std::vector<std::string>& patterns(Verb v) const;
    const std::vector<std::string>& connectors() const { return connectors_; }
    int k_max() const { return k_max_; }

    // Word-level token vocabulary for the policy, derived deterministically
    // from the grammar (template words, category words, connectors, ",", ".").
    const std::vector<std::string>& tokens() const { return tokens_; }
    int token_id(const std::string& word) const;  // throws InputError if unknown
    std::vector<int> tokenize(const std::string& text) const;

private:
    std::vector<std::string> categories_;
    std::vector<std::string> room_categories_;
    std::vector<std::vector<std::string>> verb_patterns_;
    std::vector<std::string> connectors_;
    int k_max_ = 8;
    std::vector<std::string> tokens_;
};

// Deterministic templated instruction generation: landmark clauses in path
// order plus turn clauses at path direction changes above 30 degrees, capped
// at k_max sub-goals, final clause always "stop at ...". Throws
// GenerationFailure when fewer than two landmarks lie near the path.
struct GenerateOptions {
    double select_radius = 0.75;   // landmarks this close to the path are referenced
    double precheck_radius = 2.0;  // precondition: >= 2 landmarks within this
    double turn_threshold = kPi / 6.0;  // 30 degrees
    double exit_max_arc = 3.0;          // first landmark this early reads as "exit"
};

Instruction generate(const worldsim::FloorPlan& plan, const std::vector<Vec2>& reference_path,
                     std::uint64_t seed, const GenerateOptions& opts = {});

// Parse grammar-conformant text back into ordered sub-goals. Clause spans
// reproduce the input exactly by concatenation. Throws ParseError with the
// byte offset of the first offending character.
std::vector<SubGoal> decompose(const std::string& text);

// Concatenation of clauses 1..k — always a character-for-character prefix of
// the instruction text. k must be in [0, K].
std::string prefix_text(const Instruction& instr, int k);

}  // namespace navlab::grammar
