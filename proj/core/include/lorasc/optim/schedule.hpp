#pragma once

#include <cstddef>
#include <string_view>

namespace lorasc {

enum class ScheduleKind { Linear, Cosine, Constant };

std::string_view to_string(ScheduleKind kind) noexcept;
ScheduleKind parse_schedule_kind(std::string_view text);

// Learning-rate schedule over `total_steps` optimizer steps. A one-step
// schedule cannot move and is constant at lr_start regardless of kind.
struct Schedule {
    ScheduleKind kind = ScheduleKind::Linear;
    double lr_start = 1e-3;
    double lr_end = 0.0;
    std::size_t total_steps = 1;

    bool operator==(const Schedule&) const = default;
};

// linear:   lr_start + (lr_end - lr_start) * step / (total_steps - 1)
// cosine:   lr_end + (lr_start - lr_end) * (1 + cos(pi * step / (total_steps - 1))) / 2
// constant: lr_start
double lr_at(const Schedule& schedule, std::size_t step);

// The same schedule shape and endpoints replayed over `steps_per_expert`
// steps; every expert gets an identical fresh copy.
Schedule compressed_schedule(const Schedule& base, std::size_t steps_per_expert);

}  // namespace lorasc
