// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "litesc/checkpoint.hpp"
#include "litesc/transceiver.hpp"

namespace litesc {

// Sparsification: one global magnitude sort over every weight matrix, a
// threshold at the gamma quantile, and a persistent mask that the optimizer
// honors from then on. Biases and norm parameters stay dense; they are a
// rounding error in the size accounting and expensive to lose.

struct PruneConfig {
    double gamma = 0.0;
    size_t fine_tune_epochs = 0;
};

struct PruneSummary {
    double gamma = 0.0;
    float threshold = 0.f;
    size_t total = 0;      // weight-matrix entries eligible for pruning
    size_t survivors = 0;  // entries left nonzero

    double achieved() const {
        return total == 0 ? 0.0 : double(total - survivors) / double(total);
    }
};

inline PruneSummary prune(ParamSet<float>& ps, const PruneConfig& cfg) {
    if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0))
        throw std::invalid_argument("prune: sparsity ratio must lie in [0, 1)");

    PruneSummary out;
    out.gamma = cfg.gamma;
    std::vector<float> mags;
    for (const auto& [name, p] : ps)
        if (ParamSet<float>::counts_as_weight(name, p))
            for (size_t i = 0; i < p.value.size(); ++i) mags.push_back(std::fabs(p.value[i]));
    out.total = mags.size();
    out.survivors = mags.size();
    if (out.total == 0) throw std::invalid_argument("prune: no weight matrices present");

    // 1-based rank of the threshold magnitude; rank 0 keeps everything.
    size_t rank = size_t(double(out.total) * cfg.gamma);
    if (rank == 0) return out;
    std::nth_element(mags.begin(), mags.begin() + long(rank - 1), mags.end());
    out.threshold = mags[rank - 1];

    size_t kept = 0;
    for (auto& [name, p] : ps) {
        if (!ParamSet<float>::counts_as_weight(name, p)) continue;
        p.mask.assign(p.value.size(), 1);
        for (size_t i = 0; i < p.value.size(); ++i) {
            if (std::fabs(p.value[i]) <= out.threshold) {
                p.mask[i] = 0;
                p.value[i] = 0.f;
            } else {
                ++kept;
            }
        }
    }
    out.survivors = kept;
    return out;
}

// Prune and, if configured, fine-tune the survivors on the usual objective.
// The optimizer skips masked entries, so the sparsity pattern is frozen.
inline PruneSummary prune_model(TransceiverModel& m, const Corpus& corpus, const PruneConfig& pc,
                                TrainConfig tc) {
    PruneSummary out = prune(m.ps, pc);
    if (pc.fine_tune_epochs > 0) {
        tc.epochs = pc.fine_tune_epochs;
        train(m, corpus, tc);
    }
    return out;
}

// Quantization: per-layer affine code maps. A range tracks (lo, hi) either
// directly from weights or by exponential moving average over activation
// batches, and scale() turns it into codes-per-unit for a given bit width.

struct QuantRange {
    bool started = false;
    float lo = 0.f, hi = 0.f;

    void observe(float batch_lo, float batch_hi, double c) {
        if (!started) {
            lo = batch_lo;
            hi = batch_hi;
            started = true;
        } else {
            lo = float((1.0 - c) * double(lo) + c * double(batch_lo));
            hi = float((1.0 - c) * double(hi) + c * double(batch_hi));
        }
    }

    // Codes per unit; 0 flags a degenerate (constant) range.
    double scale(int m_bits) const {
        double span = double(hi) - double(lo);
        if (!(span > 0.0)) return 0.0;
        return (std::pow(2.0, m_bits) - 1.0) / span;
    }
};

struct QuantConfig {
    int m_bits = 8;
    double ema_c = 0.3;
    size_t calibration_batches = 8;
    std::map<std::string, QuantRange> weight_ranges;  // filled by quantize_weights
    std::map<std::string, QuantRange> act_ranges;     // filled by calibrate_activations
};

using WeightCodes = std::map<std::string, ckpt::QuantizedBlob>;

// Integer codes for every weight matrix: code = round(q_w (w - lo)) over the
// surviving entries, q_w = (2^m - 1)/(hi - lo) from that layer's range.
inline WeightCodes quantize_weights(const ParamSet<float>& ps, QuantConfig& qc) {
    if (qc.m_bits < 1 || qc.m_bits > 32)
        throw std::invalid_argument("quantize_weights: bit width must lie in [1, 32]");
    double levels = std::pow(2.0, qc.m_bits) - 1.0;

    WeightCodes out;
    for (const auto& [name, p] : ps) {
        if (!ParamSet<float>::counts_as_weight(name, p)) continue;
        ckpt::QuantizedBlob q;
        q.m_bits = uint8_t(qc.m_bits);
        q.mask = p.mask;

        bool any = false;
        float lo = 0.f, hi = 0.f;
        for (size_t i = 0; i < p.value.size(); ++i) {
            if (!p.mask.empty() && !p.mask[i]) continue;
            float v = p.value[i];
            if (!any) {
                lo = hi = v;
                any = true;
            }
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }

        double qw = any && hi > lo ? levels / (double(hi) - double(lo)) : 0.0;
        q.min = lo;
        q.qw = float(qw);
        for (size_t i = 0; i < p.value.size(); ++i) {
            if (!p.mask.empty() && !p.mask[i]) continue;
            double code = qw > 0.0 ? round_even(qw * (double(p.value[i]) - double(lo))) : 0.0;
            q.codes.push_back(uint32_t(std::min(std::max(code, 0.0), levels)));
        }
        qc.weight_ranges[name] = QuantRange{true, lo, hi};
        out.emplace(name, std::move(q));
    }
    return out;
}

// Writes reconstructed values back over the originals; masked entries stay 0.
inline void dequantize_weights(ParamSet<float>& ps, const WeightCodes& wc) {
    for (const auto& [name, q] : wc) {
        auto& p = ps.at(name);
        size_t vi = 0;
        for (size_t i = 0; i < p.value.size(); ++i) {
            bool alive = q.mask.empty() || q.mask[i];
            if (!alive) {
                p.value[i] = 0.f;
                continue;
            }
            float code = float(q.codes.at(vi++));
            p.value[i] = q.qw > 0.f ? code / q.qw + q.min : q.min;
        }
    }
}

// Observer tap: records per-batch activation extrema into the EMA table and
// leaves the graph untouched.
class RangeObserver : public ActivationTap {
public:
    RangeObserver(std::map<std::string, QuantRange>& table, double c) : table_(table), c_(c) {}

    Var tap(Graph<float>&, Var x, const std::string& where) override {
        float lo = x->val[0], hi = x->val[0];
        for (size_t i = 1; i < x->val.size(); ++i) {
            lo = std::min(lo, x->val[i]);
            hi = std::max(hi, x->val[i]);
        }
        table_[where].observe(lo, hi, c_);
        return x;
    }

private:
    std::map<std::string, QuantRange>& table_;
    double c_;
};

// Quantizing tap: affine to code space, round with a straight-through
// gradient, clamp outliers to the code bounds, affine back.
class FakeQuantTap : public ActivationTap {
public:
    FakeQuantTap(const std::map<std::string, QuantRange>& table, int m_bits)
        : table_(table), m_bits_(m_bits) {}

    Var tap(Graph<float>& g, Var x, const std::string& where) override {
        auto it = table_.find(where);
        if (it == table_.end()) return x;
        double q = it->second.scale(m_bits_);
        if (q == 0.0) return x;
        float lo = it->second.lo;
        float levels = float(std::pow(2.0, m_bits_) - 1.0);
        auto y = g.affine(x, float(q), float(-q * double(lo)));
        y = g.clamp(g.ste_round(y), 0.f, levels);
        return g.affine(y, float(1.0 / q), lo);
    }

private:
    const std::map<std::string, QuantRange>& table_;
    int m_bits_;
};

// EMA-calibrates activation ranges by streaming corpus batches through the
// full pipeline at the given channel setup. One EMA step per batch per tap.
inline void calibrate_activations(TransceiverModel& m, const Corpus& corpus,
                                  const ChannelSetup& su, QuantConfig& qc, uint64_t seed,
                                  size_t batch_size = 32) {
    if (qc.calibration_batches < 1)
        throw std::invalid_argument("calibrate_activations: need at least one batch");
    if (!(qc.ema_c >= 0.0 && qc.ema_c < 1.0))
        throw std::invalid_argument("calibrate_activations: ema coefficient must lie in [0, 1)");
    if (corpus.train.empty()) throw std::invalid_argument("calibrate_activations: empty corpus");

    RangeObserver obs(qc.act_ranges, qc.ema_c);
    Rng rng(seed);
    std::vector<size_t> order(corpus.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    size_t cursor = 0;
    for (size_t k = 0; k < qc.calibration_batches; ++k) {
        std::vector<std::vector<int>> chunk;
        for (size_t b = 0; b < batch_size; ++b) {
            chunk.push_back(corpus.train[order[cursor]].tokens);
            cursor = (cursor + 1) % order.size();
        }
        run_pipeline(m, chunk, su, seed * 77 + k, batch_size, &obs);
    }
}

namespace detail {

// Swap fake-quantized weights into the live set, handing back the originals.
// Gradients accumulate per parameter regardless of the swap, which is exactly
// the straight-through rule: evaluate at the quantized point, update the
// full-resolution master.
inline std::map<std::string, TensorF> swap_in_quantized(ParamSet<float>& ps, QuantConfig& qc) {
    WeightCodes wc = quantize_weights(ps, qc);
    std::map<std::string, TensorF> saved;
    for (const auto& [name, q] : wc) saved.emplace(name, ps.at(name).value);
    dequantize_weights(ps, wc);
    return saved;
}

inline void restore_weights(ParamSet<float>& ps, std::map<std::string, TensorF>& saved) {
    for (auto& [name, v] : saved) ps.at(name).value = std::move(v);
    saved.clear();
}

}  // namespace detail

// BLEU of the model as the integer hardware would run it: quantized weights
// and quantized activations, full-resolution master left untouched.
inline double quantized_bleu(TransceiverModel& m, const std::vector<Sentence>& refs,
                             const ChannelSetup& su, QuantConfig& qc, uint64_t seed,
                             size_t limit = 0) {
    FakeQuantTap tap(qc.act_ranges, qc.m_bits);
    auto saved = detail::swap_in_quantized(m.ps, qc);
    double bleu = evaluate_bleu(m, refs, su, seed, limit, &tap).corpus;
    detail::restore_weights(m.ps, saved);
    return bleu;
}

// Quantization-aware fine-tuning. Each step runs the forward and backward
// passes at the quantized point (weights re-coded from the current master,
// activations through the calibrated taps) and applies the gradients to the
// master weights. If fine-tuning ends below the post-quantization baseline,
// the pre-tuning weights are kept, so the result never loses to plain
// calibrated quantization on the validation draw.
inline TrainLog qat_finetune(TransceiverModel& m, const Corpus& corpus, QuantConfig& qc,
                             const TrainConfig& cfg) {
    if (qc.act_ranges.empty())
        throw std::invalid_argument("qat_finetune: calibrate activations first");
    if (corpus.train.empty()) throw std::invalid_argument("qat_finetune: empty corpus");
    if (cfg.epochs < 1) throw std::invalid_argument("qat_finetune: epochs must be at least 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("qat_finetune: batch size must be positive");
    if (!(cfg.snr_lo <= cfg.snr_hi)) throw std::invalid_argument("qat_finetune: empty snr range");

    FakeQuantTap tap(qc.act_ranges, qc.m_bits);
    Rng rng(cfg.seed);
    Adam<float> opt({float(cfg.lr), 0.9f, 0.999f, 1e-8f});
    TrainLog log;
    log.csi_mode = cfg.csi_mode;
    log.eval_snr_db = 0.5 * (cfg.snr_lo + cfg.snr_hi);
    log.seed = cfg.seed;

    ChannelSetup eval_su;
    eval_su.csi_mode = cfg.csi_mode;
    eval_su.fading = cfg.fading;
    eval_su.rician_k = cfg.rician_k;
    eval_su.snr_db = log.eval_snr_db;
    eval_su.denoiser = cfg.denoiser;

    const uint64_t eval_seed = cfg.seed * 1000003;
    ParamSet<float> baseline = m.ps;
    double bleu_ptq = corpus.test.empty()
                          ? 0.0
                          : quantized_bleu(m, corpus.test, eval_su, qc, eval_seed,
                                           cfg.eval_sentences);

    std::vector<size_t> order(corpus.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        size_t batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<const std::vector<int>*> chunk;
            for (size_t i = start; i < stop; ++i) chunk.push_back(&corpus.train[order[i]].tokens);
            auto plan = detail::plan_batch(chunk);

            ChannelSetup su;
            su.csi_mode = cfg.csi_mode;
            su.fading = cfg.fading;
            su.rician_k = cfg.rician_k;
            su.snr_db = rng.uniform(cfg.snr_lo, cfg.snr_hi);
            su.denoiser = cfg.denoiser;

            auto saved = detail::swap_in_quantized(m.ps, qc);
            Graph<float> g;
            auto x = encoder_forward(g, m, plan.ids, plan.batch, plan.len, plan.mask,
                                     cfg.train_with_constellation, &tap);
            auto y = channel_forward(g, x, m, su, plan.batch, plan.len, rng);
            auto probs = receiver_forward(g, m, y, plan.batch, plan.len, plan.mask, &tap);
            auto loss = g.token_loss(probs, plan.ids, plan.mask);

            double lv = double(loss->val[0]);
            if (!std::isfinite(lv))
                throw std::runtime_error("qat_finetune: loss diverged at epoch " +
                                         std::to_string(epoch) + " batch " +
                                         std::to_string(batches));
            g.backward(loss);
            detail::restore_weights(m.ps, saved);
            opt.step(m.ps, cfg.lr);
            loss_sum += lv;
            ++batches;
        }

        EpochStat stat;
        stat.epoch = epoch;
        stat.loss = loss_sum / double(batches);
        if (cfg.eval_sentences > 0 && !corpus.test.empty())
            stat.bleu = quantized_bleu(m, corpus.test, eval_su, qc, eval_seed + epoch,
                                       cfg.eval_sentences);
        log.epochs.push_back(stat);
    }

    if (!corpus.test.empty()) {
        double bleu_ft = quantized_bleu(m, corpus.test, eval_su, qc, eval_seed,
                                        cfg.eval_sentences);
        if (bleu_ft < bleu_ptq) m.ps = std::move(baseline);
    }
    if (!cfg.log_path.empty()) log.save_csv(cfg.log_path);
    return log;
}

// Storage shrinkage from pruning plus bit-width reduction. The surviving
// count may be fractional when quoted as (1 - gamma) of the total.
inline double compression_ratio(double m_total, double m_pruned, int m_bits) {
    if (!(m_pruned > 0.0))
        throw std::invalid_argument("compression_ratio: no surviving weights");
    if (m_bits < 1) throw std::invalid_argument("compression_ratio: bit width must be positive");
    return (m_total * 32.0) / (m_pruned * double(m_bits));
}

inline double compression_ratio(double gamma, int m_bits) {
    return compression_ratio(1.0, 1.0 - gamma, m_bits);
}

struct CompressionReport {
    size_t total = 0;
    size_t survivors = 0;
    double gamma = 0.0;
    int m_bits = 32;
    double psi = 1.0;
    double bleu_before = 0.0;
    double bleu_after = 0.0;

    static const char* csv_header() { return "M,M_pruned,gamma,m_bits,psi,bleu_before,bleu_after"; }

    std::string csv_row() const {
        return std::to_string(total) + "," + std::to_string(survivors) + "," +
               std::to_string(gamma) + "," + std::to_string(m_bits) + "," + std::to_string(psi) +
               "," + std::to_string(bleu_before) + "," + std::to_string(bleu_after);
    }
};

inline CompressionReport make_report(const PruneSummary& ps, int m_bits, double bleu_before,
                                     double bleu_after) {
    CompressionReport r;
    r.total = ps.total;
    r.survivors = ps.survivors;
    r.gamma = ps.gamma;
    r.m_bits = m_bits;
    r.psi = compression_ratio(double(ps.total), double(ps.survivors), m_bits);
    r.bleu_before = bleu_before;
    r.bleu_after = bleu_after;
    return r;
}

// Checkpoint with weight matrices stored as packed integer codes, so the
// promised ratio is realized on disk. Loading reconstructs a float model and
// reinstates the sparsity masks.
inline void save_compressed(const std::string& path, const TransceiverModel& m, QuantConfig& qc) {
    WeightCodes wc = quantize_weights(m.ps, qc);
    std::vector<ckpt::Record> records;
    for (const auto& [name, p] : m.ps) {
        ckpt::Record r;
        r.name = name;
        r.partition = p.partition;
        r.flags = p.trainable ? 1 : 0;
        r.dims = p.value.shape();
        auto it = wc.find(name);
        if (it != wc.end()) {
            r.dtype = ckpt::QINT;
            r.quant = it->second;
        } else {
            r.dtype = ckpt::F32;
            r.payload.resize(p.value.size() * sizeof(float));
            std::memcpy(r.payload.data(), p.value.data(), r.payload.size());
        }
        records.push_back(std::move(r));
    }
    ckpt::Record meta;
    meta.name = "tx.meta";
    meta.flags = 0;
    meta.dtype = ckpt::F32;
    TensorF mt = m.meta_tensor();
    meta.dims = mt.shape();
    meta.payload.resize(mt.size() * sizeof(float));
    std::memcpy(meta.payload.data(), mt.data(), meta.payload.size());
    records.push_back(std::move(meta));
    ckpt::write_file(path, records);
}

}  // namespace litesc
