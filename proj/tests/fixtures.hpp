#pragma once

#include <cstdint>

#include "lorasc/cascade/run.hpp"
#include "lorasc/data/dataset.hpp"
#include "lorasc/data/generators.hpp"
#include "lorasc/model/backbone.hpp"

namespace fixture {

inline lorasc::ModelConfig mlp(std::size_t width = 16, std::size_t input_dim = 8, std::size_t output_dim = 3,
                               std::size_t depth = 2) {
    lorasc::ModelConfig c;
    c.depth = depth;
    c.width = width;
    c.input_dim = input_dim;
    c.output_dim = output_dim;
    return c;
}

// Linear-teacher regression split into train/val/test.
inline lorasc::RunData teacher(std::size_t n_train, std::size_t n_val, std::size_t n_test, std::size_t input_dim,
                               std::size_t output_dim, std::uint64_t seed, double label_noise = 0.1) {
    const std::size_t rank = std::min<std::size_t>({3, input_dim, output_dim});
    auto pool = lorasc::gen_teacher_student(seed, n_train + n_val + n_test, input_dim, output_dim, rank, label_noise);
    auto s = lorasc::split_dataset(pool, lorasc::SplitSpec{n_train, n_val, n_test, seed});
    return lorasc::RunData{s.train, s.val, s.test, {}};
}

inline lorasc::CascadeConfig cascade(std::size_t epochs = 3, std::size_t rank = 2) {
    lorasc::CascadeConfig c;
    c.epochs = epochs;
    c.rank = rank;
    c.batch_size = 8;
    c.schedule.lr_start = 5e-3;
    c.schedule.lr_end = 0.0;
    return c;
}

}  // namespace fixture
