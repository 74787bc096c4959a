#include "haptrain/feedback.hpp"

#include "haptrain/error.hpp"

#include <cmath>

namespace haptrain {

std::string to_string(FeedbackMode m) {
    switch (m) {
        case FeedbackMode::FPV: return "fpv";
        case FeedbackMode::Arrows: return "arrows";
        case FeedbackMode::Haptic: return "haptic";
    }
    return "unknown";
}

FeedbackMode feedback_mode_from_string(const std::string& s) {
    if (s == "fpv") return FeedbackMode::FPV;
    if (s == "arrows") return FeedbackMode::Arrows;
    if (s == "haptic") return FeedbackMode::Haptic;
    throw ValidationError("unknown feedback group '" + s + "' (expected fpv, arrows or haptic)");
}

std::string to_string(Phase p) {
    switch (p) {
        case Phase::Baseline: return "baseline";
        case Phase::Training: return "training";
        case Phase::Evaluation: return "evaluation";
    }
    return "unknown";
}

Phase phase_from_string(const std::string& s) {
    if (s == "baseline") return Phase::Baseline;
    if (s == "training") return Phase::Training;
    if (s == "evaluation") return Phase::Evaluation;
    throw ValidationError("unknown phase '" + s + "'");
}

std::string to_string(ActiveSide s) {
    switch (s) {
        case ActiveSide::None: return "none";
        case ActiveSide::HighSide: return "high";
        case ActiveSide::LowSide: return "low";
    }
    return "unknown";
}

ActiveSide active_side_from_string(const std::string& s) {
    if (s == "none") return ActiveSide::None;
    if (s == "high") return ActiveSide::HighSide;
    if (s == "low") return ActiveSide::LowSide;
    throw ValidationError("unknown feedback state '" + s + "'");
}

std::string to_string(TransitionKind k) {
    return k == TransitionKind::Engage ? "engage" : "release";
}

std::string to_string(const FeedbackAction& a) {
    switch (a.kind) {
        case FeedbackAction::Kind::None: return "none";
        case FeedbackAction::Kind::ArrowUp: return "arrow_up";
        case FeedbackAction::Kind::ArrowDown: return "arrow_down";
        case FeedbackAction::Kind::Engage: return "engage_" + to_string(a.side);
    }
    return "unknown";
}

FeedbackAction action_for(ActiveSide side, FeedbackMode mode, double voltage) {
    if (side == ActiveSide::None || mode == FeedbackMode::FPV) return FeedbackAction::none();
    const bool high = side == ActiveSide::HighSide;
    if (mode == FeedbackMode::Arrows) return high ? FeedbackAction::arrow_down() : FeedbackAction::arrow_up();
    return FeedbackAction::engage(high ? ClutchSide::Dorsal : ClutchSide::Ventral, voltage);
}

FeedbackOutput evaluate(double error, const FeedbackState& state, FeedbackMode mode, Phase phase, double t,
                        double voltage) {
    if (phase != Phase::Training) throw PhaseError("feedback is only evaluated during training sessions");
    if (!std::isfinite(error)) throw ValidationError("non-finite tracking error");

    FeedbackOutput out;
    out.state = state;
    auto release = [&] {
        out.transitions.push_back({t, TransitionKind::Release, out.state.active});
        out.state.active = ActiveSide::None;
        out.state.last_transition_t = t;
    };
    auto engage = [&](ActiveSide side) {
        out.transitions.push_back({t, TransitionKind::Engage, side});
        out.state.active = side;
        out.state.last_transition_t = t;
    };

    const double release_level = state.threshold - state.release_band;
    switch (state.active) {
        case ActiveSide::None:
            if (error > state.threshold)
                engage(ActiveSide::HighSide);
            else if (error < -state.threshold)
                engage(ActiveSide::LowSide);
            break;
        case ActiveSide::HighSide:
            if (error < -state.threshold) {
                release();
                engage(ActiveSide::LowSide);
            } else if (std::abs(error) < release_level) {
                release();
            }
            break;
        case ActiveSide::LowSide:
            if (error > state.threshold) {
                release();
                engage(ActiveSide::HighSide);
            } else if (std::abs(error) < release_level) {
                release();
            }
            break;
    }
    out.action = action_for(out.state.active, mode, voltage);
    return out;
}

std::optional<ClutchCommand> clutch_command_for(const FeedbackTransition& tr, double voltage) {
    if (tr.side == ActiveSide::None) return std::nullopt;
    const auto side = tr.side == ActiveSide::HighSide ? ClutchSide::Dorsal : ClutchSide::Ventral;
    if (tr.kind == TransitionKind::Engage) return EngageCmd{side, static_cast<int>(std::lround(voltage))};
    return DisengageCmd{side};
}

std::vector<FeedbackTransition> feedback_events(std::span<const double> t, std::span<const ActiveSide> states) {
    if (t.size() != states.size()) throw ValidationError("time and state columns differ in length");
    std::vector<FeedbackTransition> out;
    ActiveSide prev = ActiveSide::None;
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto cur = states[i];
        if (cur == prev) continue;
        if (prev != ActiveSide::None) out.push_back({t[i], TransitionKind::Release, prev});
        if (cur != ActiveSide::None) out.push_back({t[i], TransitionKind::Engage, cur});
        prev = cur;
    }
    return out;
}

}  // namespace haptrain
