#include "lorasc/optim/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "lorasc/errors.hpp"

namespace lorasc {

std::string_view to_string(ScheduleKind kind) noexcept {
    switch (kind) {
    case ScheduleKind::Linear:
        return "linear";
    case ScheduleKind::Cosine:
        return "cosine";
    case ScheduleKind::Constant:
        return "constant";
    }
    return "unknown";
}

ScheduleKind parse_schedule_kind(std::string_view text) {
    if (text == "linear") return ScheduleKind::Linear;
    if (text == "cosine") return ScheduleKind::Cosine;
    if (text == "constant") return ScheduleKind::Constant;
    throw ConfigError("unknown schedule '" + std::string(text) +
                      "' (expected linear, cosine or constant)");
}

double lr_at(const Schedule& s, std::size_t step) {
    if (s.total_steps == 0 || step >= s.total_steps) {
        throw ArgumentError("lr_at: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(s.total_steps) + ")");
    }
    if (s.total_steps == 1 || s.kind == ScheduleKind::Constant) {
        return s.lr_start;
    }
    const double f = static_cast<double>(step) / static_cast<double>(s.total_steps - 1);
    // Convex-combination forms hit both endpoints exactly.
    if (s.kind == ScheduleKind::Linear) {
        return (1.0 - f) * s.lr_start + f * s.lr_end;
    }
    const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * f));
    return c * s.lr_start + (1.0 - c) * s.lr_end;
}

Schedule compressed_schedule(const Schedule& base, std::size_t steps_per_expert) {
    if (steps_per_expert == 0) {
        throw ArgumentError("compressed_schedule: steps_per_expert must be >= 1");
    }
    Schedule s = base;
    s.total_steps = steps_per_expert;
    return s;
}

}  // namespace lorasc
