#pragma once

#include "haptrain/clutch.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace haptrain {

enum class FeedbackMode { FPV, Arrows, Haptic };
enum class Phase { Baseline, Training, Evaluation };
enum class ActiveSide { None, HighSide, LowSide };

std::string to_string(FeedbackMode m);
FeedbackMode feedback_mode_from_string(const std::string& s);
std::string to_string(Phase p);
Phase phase_from_string(const std::string& s);
std::string to_string(ActiveSide s);
ActiveSide active_side_from_string(const std::string& s);

inline constexpr double kErrorThreshold = 0.4;
inline constexpr double kReleaseBand = 0.05;

// What the trainee receives on a tick.
struct FeedbackAction {
    enum class Kind { None, ArrowUp, ArrowDown, Engage };

    Kind kind = Kind::None;
    ClutchSide side = ClutchSide::Ventral;  // Engage only
    double voltage = 0.0;                   // Engage only

    static FeedbackAction none() { return {}; }
    static FeedbackAction arrow_up() { return {Kind::ArrowUp}; }
    static FeedbackAction arrow_down() { return {Kind::ArrowDown}; }
    static FeedbackAction engage(ClutchSide side, double volts) { return {Kind::Engage, side, volts}; }

    friend bool operator==(const FeedbackAction&, const FeedbackAction&) = default;
};

// "none", "arrow_up", "arrow_down", "engage_dorsal", "engage_ventral".
std::string to_string(const FeedbackAction& a);

struct FeedbackState {
    ActiveSide active = ActiveSide::None;
    double threshold = kErrorThreshold;
    double release_band = kReleaseBand;
    double last_transition_t = 0.0;

    friend bool operator==(const FeedbackState&, const FeedbackState&) = default;
};

enum class TransitionKind { Engage, Release };

struct FeedbackTransition {
    double t = 0.0;
    TransitionKind kind = TransitionKind::Engage;
    ActiveSide side = ActiveSide::None;

    friend bool operator==(const FeedbackTransition&, const FeedbackTransition&) = default;
};

std::string to_string(TransitionKind k);

struct FeedbackOutput {
    FeedbackAction action;
    FeedbackState state;
    // At most two per tick (release of one side + engage of the other on a
    // full swing across the band).
    std::vector<FeedbackTransition> transitions;
};

// Per-tick threshold state machine. error = z - centreline(x).
//   error > +threshold  -> high side (ceiling): arrow down / dorsal clutch
//   error < -threshold  -> low side (floor):    arrow up / ventral clutch
// An active side releases once |error| < threshold - release_band. FPV mode
// tracks the state but never emits an action. Throws PhaseError outside
// training.
FeedbackOutput evaluate(double error, const FeedbackState& state, FeedbackMode mode, Phase phase, double t = 0.0,
                        double voltage = kOperatingVoltage);

// Action implied by a state (what is being shown / held).
FeedbackAction action_for(ActiveSide side, FeedbackMode mode, double voltage = kOperatingVoltage);

// Device commands that realise a transition in haptic mode.
std::optional<ClutchCommand> clutch_command_for(const FeedbackTransition& tr, double voltage = kOperatingVoltage);

// Transition log recovered from a per-tick feedback-state column.
std::vector<FeedbackTransition> feedback_events(std::span<const double> t, std::span<const ActiveSide> states);

}  // namespace haptrain
