#pragma once

// Desk-scale dense-network training harness over compressed weights.
//
// Weight matrices live only as lossless blobs; each forward/backward step
// decompresses one layer at a time into a scoped buffer, computes with it,
// and (during the update) recompresses in place, LOMO-style. Because the
// compression is lossless and both storage modes share the same numeric
// kernels (BF16 operands, 32-bit accumulation, fixed loop order), training
// dynamics are bit-identical to the uncompressed reference path.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "neuzip/bitfloat.hpp"
#include "neuzip/crc32.hpp"
#include "neuzip/rng.hpp"
#include "neuzip/tensorstore.hpp"

namespace neuzip {

enum class Activation { None, Relu };
enum class TrainMode { Vanilla, Neuzip };

/// Row-major BF16 matrix.
struct Bf16Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Bf16> data;

    Bf16Matrix() = default;
    Bf16Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c) {}

    Bf16& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    Bf16 at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::size_t bytes() const { return data.size() * sizeof(std::uint16_t); }

    friend bool operator==(const Bf16Matrix&, const Bf16Matrix&) = default;
};

// --- deterministic numeric kernels -------------------------------------------
// BF16 in, 32-bit float accumulation, one final rounding per output element.

/// y[b,o] = sum_i x[b,i] * w[o,i] + bias[o]
inline Bf16Matrix linear_forward(const Bf16Matrix& x, const Bf16Matrix& w,
                                 std::span<const Bf16> bias) {
    if (x.cols != w.cols || bias.size() != w.rows) {
        throw std::invalid_argument("linear_forward: dimension mismatch");
    }
    Bf16Matrix y(x.rows, w.rows);
    for (std::size_t b = 0; b < x.rows; ++b) {
        for (std::size_t o = 0; o < w.rows; ++o) {
            float acc = bias[o].to_float();
            for (std::size_t i = 0; i < x.cols; ++i) {
                acc += x.at(b, i).to_float() * w.at(o, i).to_float();
            }
            y.at(b, o) = Bf16::from_float(acc);
        }
    }
    return y;
}

/// gw[o,i] = sum_b gy[b,o] * x[b,i]
inline Bf16Matrix grad_weights(const Bf16Matrix& gy, const Bf16Matrix& x) {
    if (gy.rows != x.rows) {
        throw std::invalid_argument("grad_weights: batch mismatch");
    }
    Bf16Matrix gw(gy.cols, x.cols);
    for (std::size_t o = 0; o < gy.cols; ++o) {
        for (std::size_t i = 0; i < x.cols; ++i) {
            float acc = 0.0f;
            for (std::size_t b = 0; b < x.rows; ++b) {
                acc += gy.at(b, o).to_float() * x.at(b, i).to_float();
            }
            gw.at(o, i) = Bf16::from_float(acc);
        }
    }
    return gw;
}

inline std::vector<Bf16> grad_bias(const Bf16Matrix& gy) {
    std::vector<Bf16> gb(gy.cols);
    for (std::size_t o = 0; o < gy.cols; ++o) {
        float acc = 0.0f;
        for (std::size_t b = 0; b < gy.rows; ++b) {
            acc += gy.at(b, o).to_float();
        }
        gb[o] = Bf16::from_float(acc);
    }
    return gb;
}

/// gx[b,i] = sum_o gy[b,o] * w[o,i]
inline Bf16Matrix grad_inputs(const Bf16Matrix& gy, const Bf16Matrix& w) {
    if (gy.cols != w.rows) {
        throw std::invalid_argument("grad_inputs: dimension mismatch");
    }
    Bf16Matrix gx(gy.rows, w.cols);
    for (std::size_t b = 0; b < gy.rows; ++b) {
        for (std::size_t i = 0; i < w.cols; ++i) {
            float acc = 0.0f;
            for (std::size_t o = 0; o < gy.cols; ++o) {
                acc += gy.at(b, o).to_float() * w.at(o, i).to_float();
            }
            gx.at(b, i) = Bf16::from_float(acc);
        }
    }
    return gx;
}

inline void sgd_update(Bf16Matrix& w, const Bf16Matrix& grad, float lr) {
    if (w.rows != grad.rows || w.cols != grad.cols) {
        throw std::invalid_argument("sgd_update: shape mismatch");
    }
    for (std::size_t i = 0; i < w.data.size(); ++i) {
        w.data[i] =
            Bf16::from_float(w.data[i].to_float() - lr * grad.data[i].to_float());
    }
}

inline void sgd_update(std::vector<Bf16>& bias, std::span<const Bf16> grad,
                       float lr) {
    for (std::size_t i = 0; i < bias.size(); ++i) {
        bias[i] =
            Bf16::from_float(bias[i].to_float() - lr * grad[i].to_float());
    }
}

inline void apply_activation(Bf16Matrix& x, Activation act) {
    if (act == Activation::None) return;
    for (Bf16& v : x.data) {
        if (v.to_float() <= 0.0f) v = Bf16{0};
    }
}

/// Masks the incoming gradient with the activation derivative, evaluated on
/// the saved post-activation values (for relu, out > 0 iff pre-act > 0).
inline void mask_activation_grad(Bf16Matrix& grad, const Bf16Matrix& post,
                                 Activation act) {
    if (act == Activation::None) return;
    if (grad.rows != post.rows || grad.cols != post.cols) {
        throw std::invalid_argument("activation grad: shape mismatch");
    }
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
        if (post.data[i].to_float() <= 0.0f) grad.data[i] = Bf16{0};
    }
}

// --- memory instrumentation ---------------------------------------------------

/// Live-buffer accounting for the compressed training path: counts scoped
/// uncompressed weight buffers and gradient buffers, and tracks the resident
/// total of raw buffers plus compressed blob storage.
struct MemoryMeter {
    std::size_t live_weight_buffers = 0;
    std::size_t peak_weight_buffers = 0;
    std::size_t live_weight_bytes = 0;
    std::size_t live_grad_buffers = 0;
    std::size_t peak_grad_buffers = 0;
    std::size_t blob_bytes = 0;
    std::size_t peak_blob_bytes = 0;
    std::size_t peak_resident_bytes = 0;
    std::size_t largest_layer_bytes = 0;

    void note() {
        peak_weight_buffers = std::max(peak_weight_buffers, live_weight_buffers);
        peak_grad_buffers = std::max(peak_grad_buffers, live_grad_buffers);
        peak_blob_bytes = std::max(peak_blob_bytes, blob_bytes);
        peak_resident_bytes =
            std::max(peak_resident_bytes, live_weight_bytes + blob_bytes);
    }
    void on_weight_alloc(std::size_t bytes) {
        ++live_weight_buffers;
        live_weight_bytes += bytes;
        note();
    }
    void on_weight_free(std::size_t bytes) {
        --live_weight_buffers;
        live_weight_bytes -= bytes;
    }
    void on_grad_alloc() {
        ++live_grad_buffers;
        note();
    }
    void on_grad_free() { --live_grad_buffers; }
    void on_blob_bytes(std::size_t old_bytes, std::size_t new_bytes) {
        blob_bytes += new_bytes - old_bytes;
        note();
    }
};

// --- models -------------------------------------------------------------------

/// Dense layer whose weight matrix exists only in compressed form.
struct LinearLayer {
    LosslessBlob weight;      // shape {out_dim, in_dim}
    std::vector<Bf16> bias;   // out_dim, kept raw

    std::size_t out_dim() const { return weight.meta.shape[0]; }
    std::size_t in_dim() const { return weight.meta.shape[1]; }
};

struct MlpModel {
    std::vector<LinearLayer> layers;
    Activation activation = Activation::Relu;
    MemoryMeter* meter = nullptr;
};

struct RawLayer {
    Bf16Matrix weight;
    std::vector<Bf16> bias;
};

struct RawMlp {
    std::vector<RawLayer> layers;
    Activation activation = Activation::Relu;
};

/// Scoped uncompressed view of one layer's weight; only one of these is
/// alive at a time during forward/backward.
class WeightBuffer {
public:
    WeightBuffer(const LinearLayer& layer, MemoryMeter* meter) : meter_(meter) {
        matrix_.rows = layer.out_dim();
        matrix_.cols = layer.in_dim();
        matrix_.data = decompress_lossless(layer.weight);
        if (meter_) meter_->on_weight_alloc(matrix_.bytes());
    }
    ~WeightBuffer() {
        if (meter_) meter_->on_weight_free(matrix_.bytes());
    }
    WeightBuffer(const WeightBuffer&) = delete;
    WeightBuffer& operator=(const WeightBuffer&) = delete;

    const Bf16Matrix& get() const { return matrix_; }
    Bf16Matrix& mutable_get() { return matrix_; }

private:
    Bf16Matrix matrix_;
    MemoryMeter* meter_;
};

/// Saved layer inputs x_0 .. x_{L-1}, recorded in forward order.
struct ActivationTape {
    std::vector<Bf16Matrix> inputs;
};

// --- forward / backward -------------------------------------------------------

inline Bf16Matrix forward(const MlpModel& model, const Bf16Matrix& x0,
                          ActivationTape* tape = nullptr) {
    Bf16Matrix x = x0;
    if (tape) tape->inputs.clear();
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (tape) tape->inputs.push_back(x);
        WeightBuffer wb(model.layers[l], model.meter);
        x = linear_forward(x, wb.get(), model.layers[l].bias);
        if (l + 1 != model.layers.size()) apply_activation(x, model.activation);
    }
    return x;
}

inline Bf16Matrix forward(const RawMlp& model, const Bf16Matrix& x0,
                          ActivationTape* tape = nullptr) {
    Bf16Matrix x = x0;
    if (tape) tape->inputs.clear();
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (tape) tape->inputs.push_back(x);
        x = linear_forward(x, model.layers[l].weight, model.layers[l].bias);
        if (l + 1 != model.layers.size()) apply_activation(x, model.activation);
    }
    return x;
}

/// Reverse sweep with fused in-place updates. The input gradient is formed
/// from the pre-update weight by default; `alg1_literal` switches to the
/// update-then-propagate ordering, which deliberately diverges from the
/// reference backward pass.
inline void backward_and_update(MlpModel& model, const ActivationTape& tape,
                                const Bf16Matrix& grad_out, float lr,
                                bool alg1_literal = false) {
    const std::size_t num_layers = model.layers.size();
    if (tape.inputs.size() != num_layers) {
        throw std::invalid_argument("backward: tape does not match model");
    }
    Bf16Matrix grad = grad_out;
    for (std::size_t l = num_layers; l-- > 0;) {
        LinearLayer& layer = model.layers[l];
        if (l + 1 != num_layers) {
            mask_activation_grad(grad, tape.inputs[l + 1], model.activation);
        }
        WeightBuffer wb(layer, model.meter);
        if (model.meter) model.meter->on_grad_alloc();
        Bf16Matrix gw = grad_weights(grad, tape.inputs[l]);
        const std::vector<Bf16> gb = grad_bias(grad);

        Bf16Matrix grad_prev;
        if (l > 0 && !alg1_literal) grad_prev = grad_inputs(grad, wb.get());
        sgd_update(wb.mutable_get(), gw, lr);
        sgd_update(layer.bias, gb, lr);
        if (l > 0 && alg1_literal) grad_prev = grad_inputs(grad, wb.get());

        const std::size_t old_bytes = footprint(layer.weight).total();
        layer.weight = compress_lossless(wb.get().data, layer.weight.meta);
        if (model.meter) {
            model.meter->on_blob_bytes(old_bytes, footprint(layer.weight).total());
            model.meter->on_grad_free();
        }
        grad = std::move(grad_prev);
    }
}

inline void backward_and_update(RawMlp& model, const ActivationTape& tape,
                                const Bf16Matrix& grad_out, float lr,
                                bool alg1_literal = false) {
    const std::size_t num_layers = model.layers.size();
    if (tape.inputs.size() != num_layers) {
        throw std::invalid_argument("backward: tape does not match model");
    }
    Bf16Matrix grad = grad_out;
    for (std::size_t l = num_layers; l-- > 0;) {
        RawLayer& layer = model.layers[l];
        if (l + 1 != num_layers) {
            mask_activation_grad(grad, tape.inputs[l + 1], model.activation);
        }
        Bf16Matrix gw = grad_weights(grad, tape.inputs[l]);
        const std::vector<Bf16> gb = grad_bias(grad);

        Bf16Matrix grad_prev;
        if (l > 0 && !alg1_literal) grad_prev = grad_inputs(grad, layer.weight);
        sgd_update(layer.weight, gw, lr);
        sgd_update(layer.bias, gb, lr);
        if (l > 0 && alg1_literal) grad_prev = grad_inputs(grad, layer.weight);

        grad = std::move(grad_prev);
    }
}

// --- training -----------------------------------------------------------------

struct TrainConfig {
    std::uint64_t seed = 42;
    float lr = 0.05f;
    int steps = 200;
    std::size_t batch = 32;
    TrainMode mode = TrainMode::Neuzip;
    bool alg1_literal = false;
    /// Discard the tape after forward and rebuild activations by recomputing.
    bool recompute_activations = false;
    std::vector<std::size_t> layer_dims = {32, 64, 64, 1};
    Activation activation = Activation::Relu;
    /// Additive target noise makes the regression non-realizable, keeping
    /// the converged loss away from zero.
    double task_noise = 0.25;

    void validate() const {
        if (!(lr > 0.0f)) throw std::invalid_argument("train: lr must be > 0");
        if (steps < 0) throw std::invalid_argument("train: steps must be >= 0");
        if (batch == 0) throw std::invalid_argument("train: batch must be >= 1");
        if (layer_dims.size() < 2) {
            throw std::invalid_argument("train: need at least one layer");
        }
    }
    std::size_t in_dim() const { return layer_dims.front(); }
    std::size_t out_dim() const { return layer_dims.back(); }
};

struct TrainTrace {
    std::vector<float> losses;
    std::vector<std::uint32_t> weight_checksums;  // per layer

    friend bool operator==(const TrainTrace&, const TrainTrace&) = default;
};

namespace detail {

// Substream tags for the counter-based generator.
constexpr std::uint64_t kTagInit = 0x01;
constexpr std::uint64_t kTagTeacher = 0x02;
constexpr std::uint64_t kTagBatch = 0x03;
constexpr std::uint64_t kTagNoise = 0x04;
constexpr std::uint64_t kTagEval = 0x05;

inline Bf16Matrix init_weight(std::uint64_t seed, std::size_t layer,
                              std::size_t out_dim, std::size_t in_dim) {
    const std::uint64_t s = rng::derive(rng::derive(seed, kTagInit), layer);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    Bf16Matrix w(out_dim, in_dim);
    for (std::size_t i = 0; i < w.data.size(); ++i) {
        w.data[i] =
            Bf16::from_float(static_cast<float>(scale * rng::gaussian(s, i)));
    }
    return w;
}

/// Hidden random linear map generating regression targets.
struct Teacher {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::vector<float> map;  // row-major [out_dim, in_dim]
};

inline Teacher make_teacher(const TrainConfig& cfg) {
    Teacher t{cfg.in_dim(), cfg.out_dim(), {}};
    const std::uint64_t s = rng::derive(cfg.seed, kTagTeacher);
    const double scale = 1.0 / std::sqrt(static_cast<double>(t.in_dim));
    t.map.resize(t.in_dim * t.out_dim);
    for (std::size_t i = 0; i < t.map.size(); ++i) {
        t.map[i] = static_cast<float>(scale * rng::gaussian(s, i));
    }
    return t;
}

struct BatchData {
    Bf16Matrix inputs;
    Bf16Matrix targets;
};

inline BatchData make_batch(const TrainConfig& cfg, const Teacher& teacher,
                            std::uint64_t tag, std::uint64_t index) {
    const std::uint64_t sx = rng::derive(rng::derive(cfg.seed, tag), index);
    const std::uint64_t sn =
        rng::derive(rng::derive(cfg.seed, kTagNoise), rng::derive(tag, index));
    BatchData batch;
    batch.inputs = Bf16Matrix(cfg.batch, cfg.in_dim());
    for (std::size_t i = 0; i < batch.inputs.data.size(); ++i) {
        batch.inputs.data[i] =
            Bf16::from_float(static_cast<float>(rng::gaussian(sx, i)));
    }
    batch.targets = Bf16Matrix(cfg.batch, cfg.out_dim());
    for (std::size_t b = 0; b < cfg.batch; ++b) {
        for (std::size_t o = 0; o < cfg.out_dim(); ++o) {
            float acc = 0.0f;
            for (std::size_t i = 0; i < cfg.in_dim(); ++i) {
                acc += batch.inputs.at(b, i).to_float() *
                       teacher.map[o * cfg.in_dim() + i];
            }
            acc += static_cast<float>(
                cfg.task_noise * rng::gaussian(sn, b * cfg.out_dim() + o));
            batch.targets.at(b, o) = Bf16::from_float(acc);
        }
    }
    return batch;
}

} // namespace detail

/// Mean squared error over all outputs, accumulated in double.
inline float mse_loss(const Bf16Matrix& y, const Bf16Matrix& t) {
    if (y.rows != t.rows || y.cols != t.cols) {
        throw std::invalid_argument("mse: shape mismatch");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        const double d = static_cast<double>(y.data[i].to_float()) -
                         static_cast<double>(t.data[i].to_float());
        sum += d * d;
    }
    return static_cast<float>(sum / static_cast<double>(y.data.size()));
}

inline Bf16Matrix mse_grad(const Bf16Matrix& y, const Bf16Matrix& t) {
    Bf16Matrix g(y.rows, y.cols);
    const float inv = 2.0f / static_cast<float>(y.data.size());
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        g.data[i] = Bf16::from_float(
            inv * (y.data[i].to_float() - t.data[i].to_float()));
    }
    return g;
}

inline std::uint32_t weight_checksum(const Bf16Matrix& w) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(w.data.size() * 2);
    for (Bf16 v : w.data) {
        bytes.push_back(static_cast<std::uint8_t>(v.bits & 0xFFu));
        bytes.push_back(static_cast<std::uint8_t>(v.bits >> 8));
    }
    return crc32(bytes);
}

inline RawMlp build_raw_mlp(const TrainConfig& cfg) {
    cfg.validate();
    RawMlp model;
    model.activation = cfg.activation;
    for (std::size_t l = 0; l + 1 < cfg.layer_dims.size(); ++l) {
        RawLayer layer;
        layer.weight = detail::init_weight(cfg.seed, l, cfg.layer_dims[l + 1],
                                           cfg.layer_dims[l]);
        layer.bias.assign(cfg.layer_dims[l + 1], Bf16{0});
        model.layers.push_back(std::move(layer));
    }
    return model;
}

inline MlpModel build_mlp(const TrainConfig& cfg, MemoryMeter* meter = nullptr) {
    cfg.validate();
    MlpModel model;
    model.activation = cfg.activation;
    model.meter = meter;
    for (std::size_t l = 0; l + 1 < cfg.layer_dims.size(); ++l) {
        const Bf16Matrix w = detail::init_weight(
            cfg.seed, l, cfg.layer_dims[l + 1], cfg.layer_dims[l]);
        LinearLayer layer;
        layer.weight = compress_lossless(
            w.data, TensorMeta{{cfg.layer_dims[l + 1], cfg.layer_dims[l]}});
        layer.bias.assign(cfg.layer_dims[l + 1], Bf16{0});
        if (meter) {
            meter->largest_layer_bytes =
                std::max(meter->largest_layer_bytes, w.bytes());
            meter->on_blob_bytes(0, footprint(layer.weight).total());
        }
        model.layers.push_back(std::move(layer));
    }
    return model;
}

namespace detail {

template <class ModelT>
TrainTrace run_training(ModelT& model, const TrainConfig& cfg) {
    TrainTrace trace;
    const Teacher teacher = make_teacher(cfg);
    for (int step = 0; step < cfg.steps; ++step) {
        const BatchData batch = make_batch(cfg, teacher, kTagBatch,
                                           static_cast<std::uint64_t>(step));
        ActivationTape tape;
        Bf16Matrix y;
        if (cfg.recompute_activations) {
            y = forward(model, batch.inputs, nullptr);
            // Activation-checkpointing path: rebuild the tape by replaying
            // the forward pass before the backward sweep.
            forward(model, batch.inputs, &tape);
        } else {
            y = forward(model, batch.inputs, &tape);
        }
        trace.losses.push_back(mse_loss(y, batch.targets));
        backward_and_update(model, tape, mse_grad(y, batch.targets), cfg.lr,
                            cfg.alg1_literal);
    }
    return trace;
}

} // namespace detail

/// Trained model, returned with raw weights regardless of storage mode.
struct TrainOutcome {
    TrainTrace trace;
    RawMlp model;
};

inline TrainOutcome train_full(const TrainConfig& cfg,
                               MemoryMeter* meter = nullptr) {
    cfg.validate();
    TrainOutcome out;
    if (cfg.mode == TrainMode::Vanilla) {
        RawMlp model = build_raw_mlp(cfg);
        out.trace = detail::run_training(model, cfg);
        for (const RawLayer& l : model.layers) {
            out.trace.weight_checksums.push_back(weight_checksum(l.weight));
        }
        out.model = std::move(model);
    } else {
        MlpModel model = build_mlp(cfg, meter);
        out.trace = detail::run_training(model, cfg);
        RawMlp raw;
        raw.activation = model.activation;
        for (const LinearLayer& l : model.layers) {
            RawLayer rl;
            rl.weight.rows = l.out_dim();
            rl.weight.cols = l.in_dim();
            rl.weight.data = decompress_lossless(l.weight);
            rl.bias = l.bias;
            out.trace.weight_checksums.push_back(weight_checksum(rl.weight));
            raw.layers.push_back(std::move(rl));
        }
        out.model = std::move(raw);
    }
    return out;
}

inline TrainTrace train(const TrainConfig& cfg, MemoryMeter* meter = nullptr) {
    return train_full(cfg, meter).trace;
}

/// Held-out evaluation batch (distinct substream from training batches).
inline detail::BatchData make_eval_batch(const TrainConfig& cfg) {
    return detail::make_batch(cfg, detail::make_teacher(cfg), detail::kTagEval, 0);
}

// --- gradient checking ----------------------------------------------------------
// Parameters are promoted from BF16 to 32-bit floats; the check arithmetic
// itself runs in double so the finite-difference oracle is accurate enough
// to judge the analytic gradients rather than its own rounding noise.

namespace detail {

struct FloatMlp {
    std::vector<std::vector<float>> weights;  // row-major [out,in]
    std::vector<std::vector<float>> biases;
    std::vector<std::size_t> dims;
    Activation activation = Activation::Relu;
};

inline FloatMlp promote(const RawMlp& model) {
    FloatMlp f;
    f.activation = model.activation;
    f.dims.push_back(model.layers.front().weight.cols);
    for (const RawLayer& l : model.layers) {
        f.dims.push_back(l.weight.rows);
        std::vector<float> w(l.weight.data.size());
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] = l.weight.data[i].to_float();
        }
        f.weights.push_back(std::move(w));
        std::vector<float> b(l.bias.size());
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = l.bias[i].to_float();
        f.biases.push_back(std::move(b));
    }
    return f;
}

/// Forward activations of the float-parameterized model, in double.
inline std::vector<std::vector<double>> float_forward(
    const FloatMlp& model, const std::vector<float>& x0, std::size_t batch) {
    const std::size_t num_layers = model.weights.size();
    std::vector<std::vector<double>> acts(num_layers + 1);
    acts[0].assign(x0.begin(), x0.end());
    for (std::size_t l = 0; l < num_layers; ++l) {
        const std::size_t in = model.dims[l];
        const std::size_t out = model.dims[l + 1];
        acts[l + 1].assign(batch * out, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < out; ++o) {
                double acc = model.biases[l][o];
                for (std::size_t i = 0; i < in; ++i) {
                    acc += acts[l][b * in + i] *
                           static_cast<double>(model.weights[l][o * in + i]);
                }
                if (l + 1 != num_layers && model.activation == Activation::Relu &&
                    acc <= 0.0) {
                    acc = 0.0;
                }
                acts[l + 1][b * out + o] = acc;
            }
        }
    }
    return acts;
}

inline double float_loss(const FloatMlp& model, const std::vector<float>& x0,
                         const std::vector<float>& targets, std::size_t batch) {
    const auto acts = float_forward(model, x0, batch);
    const std::vector<double>& y = acts.back();
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - targets[i];
        sum += d * d;
    }
    return sum / static_cast<double>(y.size());
}

/// Analytic gradients of the float-path MSE loss for every weight and bias.
inline void float_gradients(const FloatMlp& model, const std::vector<float>& x0,
                            const std::vector<float>& targets, std::size_t batch,
                            std::vector<std::vector<double>>& grad_w,
                            std::vector<std::vector<double>>& grad_b) {
    const std::size_t num_layers = model.weights.size();
    const auto acts = float_forward(model, x0, batch);

    grad_w.assign(num_layers, {});
    grad_b.assign(num_layers, {});
    const std::size_t out_total = acts[num_layers].size();
    std::vector<double> grad(out_total);
    for (std::size_t i = 0; i < out_total; ++i) {
        grad[i] = 2.0 * (acts[num_layers][i] - targets[i]) /
                  static_cast<double>(out_total);
    }
    for (std::size_t l = num_layers; l-- > 0;) {
        const std::size_t in = model.dims[l];
        const std::size_t out = model.dims[l + 1];
        if (l + 1 != num_layers && model.activation == Activation::Relu) {
            for (std::size_t i = 0; i < grad.size(); ++i) {
                if (acts[l + 1][i] <= 0.0) grad[i] = 0.0;
            }
        }
        grad_w[l].assign(in * out, 0.0);
        grad_b[l].assign(out, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < out; ++o) {
                const double g = grad[b * out + o];
                grad_b[l][o] += g;
                for (std::size_t i = 0; i < in; ++i) {
                    grad_w[l][o * in + i] += g * acts[l][b * in + i];
                }
            }
        }
        if (l > 0) {
            std::vector<double> grad_prev(batch * in, 0.0);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t i = 0; i < in; ++i) {
                    double acc = 0.0;
                    for (std::size_t o = 0; o < out; ++o) {
                        acc += grad[b * out + o] *
                               static_cast<double>(model.weights[l][o * in + i]);
                    }
                    grad_prev[b * in + i] = acc;
                }
            }
            grad = std::move(grad_prev);
        }
    }
}

} // namespace detail

/// Central finite-difference check of the analytic gradients; returns the
/// maximum relative deviation over all parameters.
inline double grad_check(const RawMlp& model, const Bf16Matrix& x,
                         const Bf16Matrix& targets, double epsilon) {
    detail::FloatMlp fm = detail::promote(model);
    const std::size_t batch = x.rows;
    std::vector<float> x0(x.data.size());
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = x.data[i].to_float();
    std::vector<float> t(targets.data.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = targets.data[i].to_float();

    std::vector<std::vector<double>> grad_w;
    std::vector<std::vector<double>> grad_b;
    detail::float_gradients(fm, x0, t, batch, grad_w, grad_b);

    const float eps = static_cast<float>(epsilon);
    double worst = 0.0;
    auto check_param = [&](float& param, double analytic) {
        const float saved = param;
        param = saved + eps;
        const double w_plus = static_cast<double>(param);
        const double plus = detail::float_loss(fm, x0, t, batch);
        param = saved - eps;
        const double w_minus = static_cast<double>(param);
        const double minus = detail::float_loss(fm, x0, t, batch);
        param = saved;
        // Divide by the realized float step, not the nominal epsilon.
        const double fd = (plus - minus) / (w_plus - w_minus);
        const double dev = std::abs(analytic - fd) / (std::abs(fd) + 1e-8);
        worst = std::max(worst, dev);
    };
    for (std::size_t l = 0; l < fm.weights.size(); ++l) {
        for (std::size_t i = 0; i < fm.weights[l].size(); ++i) {
            check_param(fm.weights[l][i], grad_w[l][i]);
        }
        for (std::size_t i = 0; i < fm.biases[l].size(); ++i) {
            check_param(fm.biases[l][i], grad_b[l][i]);
        }
    }
    return worst;
}

// --- trace CSV -----------------------------------------------------------------

/// CSV rows `step,loss_bits` (loss as its 32-bit hex pattern), followed by
/// one `final_l<i>,<crc32>` row per layer.
inline void trace_to_csv(const TrainTrace& trace, std::ostream& out) {
    out << "step,loss_bits\n";
    for (std::size_t i = 0; i < trace.losses.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(trace.losses[i]);
        out << i << ',';
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%08x", bits);
        out << buf << '\n';
    }
    for (std::size_t l = 0; l < trace.weight_checksums.size(); ++l) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%08x", trace.weight_checksums[l]);
        out << "final_l" << l << ',' << buf << '\n';
    }
}

} // namespace neuzip
