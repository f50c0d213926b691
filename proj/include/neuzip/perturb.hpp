#pragma once

// Weight perturbation tolerance probe: inject uniform noise with absolute
// and/or relative magnitude into trained weights and measure the loss over
// a magnitude grid. Per element the noise range is max(a, r*|w|) and the
// perturbed value is drawn uniformly from [w - range, w + range].

#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "neuzip/bitfloat.hpp"
#include "neuzip/errors.hpp"
#include "neuzip/nn.hpp"
#include "neuzip/rng.hpp"

namespace neuzip {

struct PerturbSpec {
    double abs_mag = 0.0;
    double rel_mag = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(abs_mag >= 0.0) || !std::isfinite(abs_mag) ||
            !(rel_mag >= 0.0) || !std::isfinite(rel_mag)) {
            throw std::invalid_argument("perturb: magnitudes must be finite and >= 0");
        }
    }
};

/// Element i uses generator word (seed, i), so the result is independent of
/// evaluation order. Zero magnitudes reproduce the input bit-for-bit.
inline std::vector<Bf16> perturb_weights(std::span<const Bf16> values,
                                         const PerturbSpec& spec) {
    spec.validate();
    std::vector<Bf16> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const Bf16 v = values[i];
        if (!v.is_finite()) {
            throw NonFiniteError("perturb: NaN/Inf in input");
        }
        const double w = v.to_double();
        const double range = std::max(spec.abs_mag, spec.rel_mag * std::abs(w));
        const double sample = w + range * (2.0 * rng::uniform(spec.seed, i) - 1.0);
        out[i] = Bf16::from_float(static_cast<float>(sample));
    }
    return out;
}

namespace detail {

inline std::uint64_t cell_seed(std::uint64_t seed, double a, double r) {
    const auto ab = std::bit_cast<std::uint64_t>(a);
    const auto rb = std::bit_cast<std::uint64_t>(r);
    return rng::derive(rng::derive(seed, ab), rb);
}

} // namespace detail

struct GridRow {
    double abs_mag = 0.0;
    double rel_mag = 0.0;
    float loss = 0.0f;
};

struct GridResult {
    float baseline = 0.0f;  // loss of the unperturbed model
    std::vector<GridRow> rows;
};

inline RawMlp perturb_model(const RawMlp& model, const PerturbSpec& spec) {
    RawMlp out = model;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        PerturbSpec layer_spec = spec;
        layer_spec.seed = rng::derive(spec.seed, l);
        out.layers[l].weight.data =
            perturb_weights(out.layers[l].weight.data, layer_spec);
    }
    return out;
}

/// Evaluates the cross product of magnitude lists on a held-out batch.
/// Each cell derives its generator from (seed, a, r), so cells are
/// schedule-independent.
inline GridResult run_grid(const RawMlp& model, const Bf16Matrix& eval_x,
                           const Bf16Matrix& eval_t,
                           std::span<const double> a_list,
                           std::span<const double> r_list, std::uint64_t seed) {
    GridResult result;
    result.baseline = mse_loss(forward(model, eval_x), eval_t);
    for (double a : a_list) {
        for (double r : r_list) {
            const PerturbSpec spec{a, r, detail::cell_seed(seed, a, r)};
            const RawMlp perturbed = perturb_model(model, spec);
            result.rows.push_back(
                GridRow{a, r, mse_loss(forward(perturbed, eval_x), eval_t)});
        }
    }
    return result;
}

/// CSV `a,r,loss` with the (0,0) baseline row first.
inline void grid_to_csv(const GridResult& grid, std::ostream& out) {
    out << "a,r,loss\n";
    char buf[96];
    std::snprintf(buf, sizeof(buf), "0,0,%.6g\n",
                  static_cast<double>(grid.baseline));
    out << buf;
    for (const GridRow& row : grid.rows) {
        std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.6g\n", row.abs_mag,
                      row.rel_mag, static_cast<double>(row.loss));
        out << buf;
    }
}

} // namespace neuzip
