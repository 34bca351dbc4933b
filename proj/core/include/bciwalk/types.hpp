#pragma once

#include <cstdint>
#include <string_view>

namespace bciwalk {

/// The two mental states the decoder distinguishes; also the FSM states.
enum class BrainState : std::uint8_t { Idle = 0, Walk = 1 };

constexpr std::string_view to_string(BrainState s) {
  return s == BrainState::Idle ? "idle" : "walk";
}

BrainState parse_brain_state(std::string_view text);

constexpr BrainState other(BrainState s) {
  return s == BrainState::Idle ? BrainState::Walk : BrainState::Idle;
}

constexpr std::size_t index_of(BrainState s) { return static_cast<std::size_t>(s); }

}  // namespace bciwalk
