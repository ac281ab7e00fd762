#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>

#include "aqlm/errors.hpp"

namespace aqlm {

// Hyperparameters for one layer quantization run. Defaults follow the Adam
// settings used for codebook updates (lr 1e-4, betas 0.9 / 0.95, 100 steps).
struct QuantConfig {
    std::size_t group_size = 8;
    std::size_t num_codebooks = 2;
    std::size_t code_bits = 8;
    std::size_t beam_size = 8;
    double rel_tolerance = 1e-3;

    double adam_lr = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.95;
    double adam_eps = 1e-8;
    std::size_t adam_steps_per_phase = 100;

    std::size_t max_outer_iters = 100;
    std::size_t beam_sweeps = 1;
    std::size_t kmeans_iters = 25;
    std::uint64_t seed = 0;

    // Worker cap for row-parallel work. Results do not depend on it.
    std::size_t threads = 1;

    std::size_t codebook_size() const { return std::size_t{1} << code_bits; }

    void validate() const {
        if (group_size < 1) throw ConfigError("group size must be >= 1");
        if (code_bits < 1 || code_bits > 16) throw ConfigError("code bits must be in [1, 16]");
        if (num_codebooks < 1) throw ConfigError("number of codebooks must be >= 1");
        if (num_codebooks > std::numeric_limits<std::uint16_t>::max())
            throw ConfigError("number of codebooks must fit in 16 bits");
        if (beam_size < 1) throw ConfigError("beam size must be >= 1");
        if (!(rel_tolerance > 0.0) || std::isnan(rel_tolerance))
            throw ConfigError("relative tolerance must be > 0");
        if (!(adam_lr >= 0.0) || !std::isfinite(adam_lr)) throw ConfigError("learning rate must be finite and >= 0");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam beta1 must be in [0, 1)");
        if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam beta2 must be in [0, 1)");
        if (!(adam_eps > 0.0)) throw ConfigError("adam epsilon must be > 0");
        if (beam_sweeps < 1) throw ConfigError("beam sweeps must be >= 1");
    }

    void validate_for(std::size_t d_in) const {
        validate();
        if (d_in % group_size != 0)
            throw ConfigError("group size " + std::to_string(group_size) + " does not divide d_in " +
                              std::to_string(d_in));
    }
};

}  // namespace aqlm
