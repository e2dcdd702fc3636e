// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "litesc/channel.hpp"
#include "litesc/checkpoint.hpp"
#include "litesc/csi.hpp"
#include "litesc/nn.hpp"
#include "litesc/optim.hpp"
#include "litesc/text.hpp"

namespace litesc {

struct ModelConfig {
    size_t vocab = 0;
    size_t d_model = 64;
    size_t heads = 4;
    size_t blocks = 2;
    size_t symbol_dim = 16;  // reals per token; half as many complex symbols
    uint64_t seed = 1;

    size_t antennas() const { return symbol_dim / 2; }
};

// Transmitter: embedding + position code + transformer blocks (semantic
// encoder), then two dense layers down to the symbol vector (channel
// encoder), power-normalized per sentence. Receiver: dense/expand/dense with
// a layer-norm residual junction (channel decoder), transformer blocks, and a
// softmax prediction over the vocabulary (semantic decoder). Partitions tag
// who owns what: 'a' channel encoder, 'b' semantic encoder, 'x' semantic
// decoder, 'd' channel decoder.
struct TransceiverModel {
    ModelConfig cfg;
    ParamSet<float> ps;
    ConstellationSpec constellation{};  // m_bits == 0: full resolution
    size_t oov_count = 0;

    bool has_constellation() const { return constellation.m_bits > 0; }

    TensorF meta_tensor() const {
        return TensorF::from({9}, {float(cfg.vocab), float(cfg.d_model), float(cfg.heads),
                                   float(cfg.blocks), float(cfg.symbol_dim),
                                   float(constellation.m_bits), constellation.x_min,
                                   constellation.x_max, constellation.q_x});
    }

    void save(const std::string& path) const {
        ParamSet<float> copy = ps;
        auto& meta = copy.add("tx.meta", meta_tensor(), 'o');
        meta.trainable = false;
        save_params(path, copy);
    }

    static TransceiverModel load(const std::string& path) {
        TransceiverModel m;
        m.ps = load_params<float>(path);
        auto& meta = m.ps.at("tx.meta");
        m.cfg.vocab = size_t(meta.value[0]);
        m.cfg.d_model = size_t(meta.value[1]);
        m.cfg.heads = size_t(meta.value[2]);
        m.cfg.blocks = size_t(meta.value[3]);
        m.cfg.symbol_dim = size_t(meta.value[4]);
        m.constellation.m_bits = int(meta.value[5]);
        m.constellation.x_min = meta.value[6];
        m.constellation.x_max = meta.value[7];
        m.constellation.q_x = meta.value[8];
        m.ps.remove("tx.meta");
        return m;
    }
};

inline TransceiverModel make_transceiver(const ModelConfig& cfg) {
    if (cfg.vocab == 0) throw std::invalid_argument("make_transceiver: empty vocabulary");
    if (cfg.symbol_dim == 0 || cfg.symbol_dim % 2 != 0)
        throw std::invalid_argument("make_transceiver: symbol_dim must be a positive even count");
    if (cfg.d_model % cfg.heads != 0)
        throw std::invalid_argument("make_transceiver: heads must divide d_model");

    TransceiverModel m;
    m.cfg = cfg;
    Rng rng(cfg.seed);
    auto& ps = m.ps;
    size_t d = cfg.d_model;

    TensorF table({cfg.vocab, d});
    float bound = float(std::sqrt(6.0 / double(cfg.vocab + d)));
    for (size_t i = 0; i < table.size(); ++i) table[i] = float(rng.uniform(-bound, bound));
    ps.add("se.embed.w", std::move(table), 'b');
    for (size_t i = 0; i < cfg.blocks; ++i)
        add_transformer_block_params(ps, "se.b" + std::to_string(i), d, 'b', rng);

    ps.dense("ce.f1", d, 2 * d, 'a', rng);
    ps.dense("ce.f2", 2 * d, cfg.symbol_dim, 'a', rng);

    ps.dense("cd.f1", cfg.symbol_dim, d, 'd', rng);
    ps.dense("cd.f2", d, 4 * d, 'd', rng);
    ps.dense("cd.f3", 4 * d, d, 'd', rng);
    add_layer_norm_params(ps, "cd.ln", d, 'd');

    for (size_t i = 0; i < cfg.blocks; ++i)
        add_transformer_block_params(ps, "sd.b" + std::to_string(i), d, 'x', rng);
    ps.dense("sd.pred", d, cfg.vocab, 'x', rng);
    return m;
}

inline TensorF position_codes(size_t batch, size_t len, size_t d) {
    TensorF one({len, d});
    add_position_code(one);
    TensorF out({batch * len, d});
    for (size_t b = 0; b < batch; ++b)
        for (size_t i = 0; i < len * d; ++i) out[b * len * d + i] = one[i];
    return out;
}

using Var = Graph<float>::Var;

// Hook applied to named intermediate activations during the forward pass.
// Observers record ranges and return the input untouched; fake-quantization
// rewrites the value in-graph. Taps sit on dense and block outputs; the
// softmax readout stays full resolution.
struct ActivationTap {
    virtual ~ActivationTap() = default;
    virtual Var tap(Graph<float>& g, Var x, const std::string& where) = 0;
};

inline Var encoder_forward(Graph<float>& g, TransceiverModel& m, const std::vector<int>& ids,
                           size_t batch, size_t len, const std::vector<uint8_t>& mask,
                           bool quantize, ActivationTap* at = nullptr) {
    auto tp = [&](Var v, const std::string& w) { return at ? at->tap(g, v, w) : v; };
    auto& ps = m.ps;
    auto x = g.embedding(g.leaf(ps.at("se.embed.w")), ids);
    x = g.add(x, g.constant(position_codes(batch, len, m.cfg.d_model)));
    x = tp(x, "se.in");
    for (size_t i = 0; i < m.cfg.blocks; ++i) {
        x = transformer_block(g, x, ps, "se.b" + std::to_string(i), batch, len, m.cfg.heads, mask);
        x = tp(x, "se.b" + std::to_string(i));
    }
    x = tp(g.relu(dense(g, x, ps, "ce.f1")), "ce.f1");
    x = dense(g, x, ps, "ce.f2");
    x = g.power_norm(x, batch, len, mask);
    if (quantize && m.has_constellation()) {
        const auto& c = m.constellation;
        float levels = float(std::pow(2.0, c.m_bits) - 1.0);
        x = g.affine(x, c.q_x, -c.q_x * c.x_min);
        x = g.clamp(g.ste_round(x), 0.0f, levels);
        x = g.affine(x, 1.0f / c.q_x, c.x_min);
    }
    return x;
}

inline Var receiver_forward(Graph<float>& g, TransceiverModel& m, Var y, size_t batch, size_t len,
                            const std::vector<uint8_t>& mask, ActivationTap* at = nullptr) {
    auto tp = [&](Var v, const std::string& w) { return at ? at->tap(g, v, w) : v; };
    auto& ps = m.ps;
    auto h1 = tp(g.relu(dense(g, y, ps, "cd.f1")), "cd.f1");
    auto h2 = tp(g.relu(dense(g, h1, ps, "cd.f2")), "cd.f2");
    auto h3 = tp(dense(g, h2, ps, "cd.f3"), "cd.f3");
    auto h = tp(layer_norm(g, g.add(h1, h3), ps, "cd.ln"), "cd.ln");
    for (size_t i = 0; i < m.cfg.blocks; ++i) {
        h = transformer_block(g, h, ps, "sd.b" + std::to_string(i), batch, len, m.cfg.heads, mask);
        h = tp(h, "sd.b" + std::to_string(i));
    }
    return g.row_softmax(dense(g, h, ps, "sd.pred"));
}

// Per-position symbol rows <-> complex antenna columns. Row layout is all
// real parts then all imaginary parts, matching the stacked convention.
inline CMat symbols_to_cmat(const float* rows, size_t len, size_t antennas) {
    CMat x(antennas, len);
    for (size_t l = 0; l < len; ++l)
        for (size_t i = 0; i < antennas; ++i)
            x.at(i, l) = cplx(double(rows[l * 2 * antennas + i]),
                              double(rows[l * 2 * antennas + antennas + i]));
    return x;
}

inline void cmat_to_symbols(const CMat& y, float* rows) {
    size_t antennas = y.rows(), len = y.cols();
    for (size_t l = 0; l < len; ++l)
        for (size_t i = 0; i < antennas; ++i) {
            rows[l * 2 * antennas + i] = float(y.at(i, l).real());
            rows[l * 2 * antennas + antennas + i] = float(y.at(i, l).imag());
        }
}

struct ChannelSetup {
    CsiMode csi_mode = CsiMode::Perfect;
    Fading fading = Fading::Rayleigh;
    double rician_k = 0.0;
    double snr_db = 6.0;
    DenoiserModel* denoiser = nullptr;
};

namespace detail {

// One fading block per sentence: sample H, estimate it per the CSI mode, fold
// equalizer x channel into a single real map, and pre-equalize the sampled
// noise. Estimates whose Gram matrix is numerically unusable are resampled;
// that rejects a vanishing fraction of draws and keeps training total.
inline void build_channel_maps(const ChannelSetup& su, size_t antennas, size_t batch, size_t len,
                               Rng& rng, TensorF& mats, TensorF& noise) {
    size_t d = 2 * antennas;
    mats = TensorF({batch, d * d});
    noise = TensorF({batch * len, d});
    double sigma = std::sqrt(noise_var(su.snr_db));
    CMat eye = CMat::identity(antennas);

    for (size_t b = 0; b < batch; ++b) {
        for (;;) {
            ChannelRealization ch = sample_channel(su.fading, antennas, su.rician_k, rng);

            CMat n(antennas, len);
            for (auto& v : n.data()) v = cplx(sigma * rng.normal(), sigma * rng.normal());

            CMat est;
            switch (su.csi_mode) {
                case CsiMode::Perfect:
                    est = ch.h;
                    break;
                case CsiMode::Rough:
                case CsiMode::Refined: {
                    CMat yp = transmit(eye, ch, su.snr_db, rng);
                    est = ls_estimate(yp, eye);
                    if (su.csi_mode == CsiMode::Refined) est = refine(*su.denoiser, est);
                    break;
                }
                case CsiMode::None:
                    break;
            }

            CMat effective, eq_noise;
            if (su.csi_mode == CsiMode::None) {
                effective = ch.h;
                eq_noise = n;
            } else {
                CMat eh = hermitian(est);
                CMat gram = matmul(eh, est);
                if (!(cond1(gram) < ZF_COND_THRESHOLD)) continue;
                effective = lu_solve(gram, matmul(eh, ch.h));
                eq_noise = lu_solve(gram, matmul(eh, n));
            }

            auto real_map = to_real_expansion(effective);
            for (size_t i = 0; i < d * d; ++i) mats.at(b, i) = float(real_map[i]);
            cmat_to_symbols(eq_noise, noise.data() + b * len * d);
            break;
        }
    }
}

struct BatchPlan {
    std::vector<int> ids;
    std::vector<uint8_t> mask;
    size_t batch = 0, len = 0;
};

inline BatchPlan plan_batch(const std::vector<const std::vector<int>*>& seqs) {
    BatchPlan p;
    p.batch = seqs.size();
    for (const auto* s : seqs) p.len = std::max(p.len, s->size() + 1);
    p.ids.assign(p.batch * p.len, PAD);
    p.mask.assign(p.batch * p.len, 0);
    for (size_t b = 0; b < p.batch; ++b) {
        const auto& s = *seqs[b];
        for (size_t i = 0; i < s.size(); ++i) {
            p.ids[b * p.len + i] = s[i];
            p.mask[b * p.len + i] = 1;
        }
        p.ids[b * p.len + s.size()] = END;
        p.mask[b * p.len + s.size()] = 1;
    }
    return p;
}

}  // namespace detail

// Full differentiable pass through the air: symbols -> fading -> (optional
// equalization) -> received rows.
inline Var channel_forward(Graph<float>& g, Var x, TransceiverModel& m, const ChannelSetup& su,
                           size_t batch, size_t len, Rng& rng) {
    TensorF mats, noise;
    detail::build_channel_maps(su, m.cfg.antennas(), batch, len, rng, mats, noise);
    auto y = g.rowwise_linear(x, mats, batch, len);
    return g.add(y, g.constant(noise));
}

// Greedy per-position readout, cut at the first END.
inline std::vector<int> greedy_rows(const TensorF& probs, size_t row0, size_t len) {
    std::vector<int> out;
    size_t vocab = probs.cols();
    for (size_t l = 0; l < len; ++l) {
        const float* p = probs.data() + (row0 + l) * vocab;
        size_t best = 0;
        for (size_t j = 1; j < vocab; ++j)
            if (p[j] > p[best]) best = j;
        if (int(best) == END) break;
        out.push_back(int(best));
    }
    return out;
}

// Batched encode -> channel -> decode over token sequences; returns the
// predicted token sequences. The workhorse behind evaluation.
inline std::vector<std::vector<int>> run_pipeline(TransceiverModel& m,
                                                  const std::vector<std::vector<int>>& sentences,
                                                  const ChannelSetup& su, uint64_t seed,
                                                  size_t batch_size = 32,
                                                  ActivationTap* at = nullptr) {
    Rng rng(seed);
    std::vector<std::vector<int>> out;
    out.reserve(sentences.size());
    for (size_t start = 0; start < sentences.size(); start += batch_size) {
        size_t stop = std::min(sentences.size(), start + batch_size);
        std::vector<const std::vector<int>*> chunk;
        for (size_t i = start; i < stop; ++i) chunk.push_back(&sentences[i]);
        auto plan = detail::plan_batch(chunk);

        Graph<float> g;
        auto x = encoder_forward(g, m, plan.ids, plan.batch, plan.len, plan.mask, true, at);
        auto y = channel_forward(g, x, m, su, plan.batch, plan.len, rng);
        auto probs = receiver_forward(g, m, y, plan.batch, plan.len, plan.mask, at);
        for (size_t b = 0; b < plan.batch; ++b)
            out.push_back(greedy_rows(probs->val, b * plan.len, plan.len));
    }
    return out;
}

struct TrainConfig {
    CsiMode csi_mode = CsiMode::Perfect;
    Fading fading = Fading::Rayleigh;
    double rician_k = 0.0;
    double snr_lo = 4.0, snr_hi = 10.0;
    size_t batch_size = 32;
    size_t epochs = 1;
    double lr = 1e-3;
    uint64_t seed = 1;
    DenoiserModel* denoiser = nullptr;
    size_t eval_sentences = 100;  // per-epoch BLEU probe; 0 disables
    bool train_with_constellation = false;
    std::string log_path;
};

struct EpochStat {
    size_t epoch = 0;
    double loss = 0.0;
    double bleu = 0.0;
};

struct TrainLog {
    std::vector<EpochStat> epochs;
    CsiMode csi_mode = CsiMode::Perfect;
    double eval_snr_db = 0.0;
    uint64_t seed = 0;

    void save_csv(const std::string& path) const {
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write train log " + path);
        f << "# litesc train log v1\n";
        f << "epoch,loss,bleu,csi_mode,snr_db,seed\n";
        for (const auto& e : epochs)
            f << e.epoch << "," << e.loss << "," << e.bleu << "," << csi_mode_name(csi_mode)
              << "," << eval_snr_db << "," << seed << "\n";
    }
};

inline BleuSummary evaluate_bleu(TransceiverModel& m, const std::vector<Sentence>& refs,
                                 const ChannelSetup& su, uint64_t seed, size_t limit = 0,
                                 ActivationTap* at = nullptr) {
    size_t n = limit == 0 ? refs.size() : std::min(limit, refs.size());
    std::vector<std::vector<int>> tokens(n);
    for (size_t i = 0; i < n; ++i) tokens[i] = refs[i].tokens;
    auto preds = run_pipeline(m, tokens, su, seed, 32, at);
    return corpus_bleu(preds, tokens);
}

inline double token_accuracy(const std::vector<std::vector<int>>& preds,
                             const std::vector<std::vector<int>>& refs) {
    size_t hit = 0, total = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        for (size_t j = 0; j < refs[i].size(); ++j) {
            ++total;
            if (j < preds[i].size() && preds[i][j] == refs[i][j]) ++hit;
        }
    }
    return total == 0 ? 0.0 : double(hit) / double(total);
}

// CSI-aided end-to-end training: per batch, one SNR draw, one fading block
// per sentence, equalization folded into the graph as a fixed linear map.
inline TrainLog train(TransceiverModel& m, const Corpus& corpus, const TrainConfig& cfg) {
    if (corpus.train.empty()) throw std::invalid_argument("train: empty corpus");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be at least 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be positive");
    if (!(cfg.snr_lo <= cfg.snr_hi)) throw std::invalid_argument("train: empty snr range");
    if (cfg.csi_mode == CsiMode::Refined) {
        if (!cfg.denoiser) throw std::invalid_argument("train: refined mode needs a denoiser");
        if (cfg.denoiser->n != m.cfg.antennas())
            throw std::invalid_argument("train: denoiser dims do not match the antenna count");
    }

    Rng rng(cfg.seed);
    Adam<float> opt({float(cfg.lr), 0.9f, 0.999f, 1e-8f});
    TrainLog log;
    log.csi_mode = cfg.csi_mode;
    log.eval_snr_db = 0.5 * (cfg.snr_lo + cfg.snr_hi);
    log.seed = cfg.seed;

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

            Graph<float> g;
            auto x = encoder_forward(g, m, plan.ids, plan.batch, plan.len, plan.mask,
                                     cfg.train_with_constellation);
            auto y = channel_forward(g, x, m, su, plan.batch, plan.len, rng);
            auto probs = receiver_forward(g, m, y, plan.batch, plan.len, plan.mask);
            auto loss = g.token_loss(probs, plan.ids, plan.mask);

            double lv = double(loss->val[0]);
            if (!std::isfinite(lv))
                throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch) +
                                         " batch " + std::to_string(batches));
            g.backward(loss);
            opt.step(m.ps, cfg.lr);
            loss_sum += lv;
            ++batches;
        }

        EpochStat stat;
        stat.epoch = epoch;
        stat.loss = loss_sum / double(batches);
        if (cfg.eval_sentences > 0 && !corpus.test.empty()) {
            ChannelSetup su;
            su.csi_mode = cfg.csi_mode;
            su.fading = cfg.fading;
            su.rician_k = cfg.rician_k;
            su.snr_db = log.eval_snr_db;
            su.denoiser = cfg.denoiser;
            stat.bleu = evaluate_bleu(m, corpus.test, su, cfg.seed * 1000003 + epoch,
                                      cfg.eval_sentences)
                            .corpus;
        }
        log.epochs.push_back(stat);
    }
    if (!cfg.log_path.empty()) log.save_csv(cfg.log_path);
    return log;
}

// Contract entry points for a single sentence.

inline TensorF encode(TransceiverModel& m, const std::vector<int>& tokens) {
    std::vector<int> seq;
    seq.reserve(tokens.size() + 1);
    for (int t : tokens) {
        if (t < 0 || size_t(t) >= m.cfg.vocab) {
            ++m.oov_count;
            seq.push_back(UNK);
        } else {
            seq.push_back(t);
        }
    }
    seq.push_back(END);
    std::vector<uint8_t> mask(seq.size(), 1);
    Graph<float> g;
    auto x = encoder_forward(g, m, seq, 1, seq.size(), mask, m.has_constellation());
    return x->val;
}

inline Sentence decode(TransceiverModel& m, const CMat& y, const CsiEstimate& csi) {
    CMat eq;
    if (csi.mode == CsiMode::None) {
        eq = y;
    } else {
        if (csi.h_est.rows() == 0)
            throw std::invalid_argument(std::string("decode: csi mode ") +
                                        csi_mode_name(csi.mode) + " without an estimate");
        eq = zero_forcing(y, csi.h_est);
    }
    size_t len = eq.cols();
    TensorF rows({len, m.cfg.symbol_dim});
    cmat_to_symbols(eq, rows.data());
    std::vector<uint8_t> mask(len, 1);
    Graph<float> g;
    auto probs = receiver_forward(g, m, g.constant(rows), 1, len, mask);
    Sentence s;
    s.tokens = greedy_rows(probs->val, 0, len);
    return s;
}

// EMA-calibrates the constellation range from encoder outputs over corpus
// batches and installs the spec on the model.
inline void calibrate_model_constellation(TransceiverModel& m, const Corpus& corpus, int m_bits,
                                          double ema_c, size_t n_batches, size_t batch_size,
                                          uint64_t seed) {
    if (corpus.train.empty())
        throw std::invalid_argument("calibrate_model_constellation: empty corpus");
    Rng rng(seed);
    std::vector<TensorF> outputs;
    std::vector<size_t> order(corpus.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    size_t cursor = 0;
    for (size_t k = 0; k < n_batches; ++k) {
        std::vector<const std::vector<int>*> chunk;
        for (size_t b = 0; b < batch_size; ++b) {
            chunk.push_back(&corpus.train[order[cursor]].tokens);
            cursor = (cursor + 1) % order.size();
        }
        auto plan = detail::plan_batch(chunk);
        Graph<float> g;
        auto x = encoder_forward(g, m, plan.ids, plan.batch, plan.len, plan.mask, false);
        outputs.push_back(x->val);
    }
    m.constellation = calibrate_constellation(outputs, m_bits, ema_c);
}

}  // namespace litesc
