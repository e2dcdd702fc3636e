// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "litesc/compress.hpp"

using namespace litesc;

namespace {

Corpus toy_corpus(size_t n, uint64_t seed) {
    auto lines = generate_toy_corpus(n, seed);
    std::string path = "compress_corpus_tmp.txt";
    std::ofstream f(path, std::ios::trunc);
    for (auto& l : lines) f << l << "\n";
    f.close();
    auto corpus = load_corpus(path, 0.1, seed);
    std::remove(path.c_str());
    return corpus;
}

ModelConfig small_cfg(size_t vocab) {
    ModelConfig cfg;
    cfg.vocab = vocab;
    cfg.d_model = 32;
    cfg.heads = 2;
    cfg.blocks = 1;
    cfg.seed = 3;
    return cfg;
}

ParamSet<float> random_weights(const std::vector<size_t>& sizes, uint64_t seed) {
    Rng rng(seed);
    ParamSet<float> ps;
    for (size_t k = 0; k < sizes.size(); ++k) {
        TensorF w({sizes[k], 4});
        for (size_t i = 0; i < w.size(); ++i) w[i] = float(rng.uniform(-1.0, 1.0));
        ps.add("l" + std::to_string(k) + ".w", std::move(w), 'o');
    }
    return ps;
}

// Brute-force selection oracle: full sort, threshold at the 1-based
// floor(M*gamma) rank, count what survives a <= comparison.
size_t oracle_survivors(const ParamSet<float>& ps, double gamma) {
    std::vector<float> mags;
    for (const auto& [name, p] : ps)
        if (ParamSet<float>::counts_as_weight(name, p))
            for (size_t i = 0; i < p.value.size(); ++i) mags.push_back(std::fabs(p.value[i]));
    std::sort(mags.begin(), mags.end());
    size_t rank = size_t(double(mags.size()) * gamma);
    if (rank == 0) return mags.size();
    float thr = mags[rank - 1];
    size_t kept = 0;
    for (float v : mags)
        if (v > thr) ++kept;
    return kept;
}

size_t file_size(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    REQUIRE(f);
    return size_t(f.tellg());
}

}  // namespace

TEST_CASE("pruning threshold follows the worked example") {
    ParamSet<float> ps;
    ps.add("l.w", TensorF::from({2, 2}, {0.1f, -0.2f, 0.3f, -0.4f}), 'o');
    ps.add("l.b", TensorF::from({4}, {0.01f, 0.02f, 0.03f, 0.04f}), 'o');

    PruneConfig pc;
    pc.gamma = 0.5;
    auto sum = prune(ps, pc);
    REQUIRE(sum.total == 4);
    REQUIRE(sum.threshold == Catch::Approx(0.2));
    REQUIRE(sum.survivors == 2);
    REQUIRE(sum.achieved() == 0.5);

    auto& w = ps.at("l.w");
    REQUIRE(w.value[0] == 0.f);
    REQUIRE(w.value[1] == 0.f);
    REQUIRE(w.value[2] == 0.3f);
    REQUIRE(w.value[3] == -0.4f);
    REQUIRE(w.mask == std::vector<uint8_t>{0, 0, 1, 1});

    // Biases are not weight matrices; they stay dense and unmasked.
    REQUIRE(ps.at("l.b").mask.empty());
    REQUIRE(ps.at("l.b").value[0] == 0.01f);
}

TEST_CASE("zero sparsity leaves the model untouched") {
    auto ps = random_weights({8}, 11);
    TensorF before = ps.at("l0.w").value;
    auto sum = prune(ps, PruneConfig{0.0, 0});
    REQUIRE(sum.survivors == sum.total);
    REQUIRE(ps.at("l0.w").mask.empty());
    for (size_t i = 0; i < before.size(); ++i) REQUIRE(ps.at("l0.w").value[i] == before[i]);
}

TEST_CASE("sparsity ratio outside [0,1) is rejected") {
    auto ps = random_weights({8}, 12);
    REQUIRE_THROWS_AS(prune(ps, PruneConfig{1.0, 0}), std::invalid_argument);
    REQUIRE_THROWS_AS(prune(ps, PruneConfig{1.5, 0}), std::invalid_argument);
    REQUIRE_THROWS_AS(prune(ps, PruneConfig{-0.1, 0}), std::invalid_argument);
}

TEST_CASE("achieved sparsity tracks the ratio within one part in M") {
    for (uint64_t seed : {21u, 22u, 23u}) {
        auto ps = random_weights({5, 40, 300}, seed);
        for (double gamma : {0.1, 0.3, 0.5, 0.6, 0.9, 0.95, 0.999}) {
            auto copy = ps;
            auto sum = prune(copy, PruneConfig{gamma, 0});
            REQUIRE(sum.survivors == oracle_survivors(ps, gamma));
            REQUIRE(std::fabs(sum.achieved() - gamma) <= 1.0 / double(sum.total) + 1e-12);
        }
    }
}

TEST_CASE("fine-tuning never resurrects a pruned weight") {
    auto corpus = toy_corpus(200, 31);
    auto m = make_transceiver(small_cfg(corpus.vocab.size()));

    TrainConfig tc;
    tc.csi_mode = CsiMode::None;
    tc.fading = Fading::Awgn;
    tc.snr_lo = 14.0;
    tc.snr_hi = 30.0;
    tc.epochs = 2;
    tc.seed = 5;
    tc.eval_sentences = 0;

    PruneConfig pc;
    pc.gamma = 0.7;
    pc.fine_tune_epochs = 2;
    auto sum = prune_model(m, corpus, pc, tc);
    REQUIRE(sum.survivors < sum.total);

    size_t pinned = 0;
    for (const auto& [name, p] : m.ps) {
        if (p.mask.empty()) continue;
        for (size_t i = 0; i < p.value.size(); ++i)
            if (!p.mask[i]) {
                REQUIRE(p.value[i] == 0.f);
                ++pinned;
            }
    }
    REQUIRE(pinned == sum.total - sum.survivors);
}

TEST_CASE("weight codes hit the endpoints and break ties to even") {
    ParamSet<float> ps;
    ps.add("l.w", TensorF::from({2, 2}, {-1.f, 1.f, 0.f, 0.5f}), 'o');
    QuantConfig qc;
    qc.m_bits = 8;
    auto wc = quantize_weights(ps, qc);
    const auto& q = wc.at("l.w");
    REQUIRE(q.min == -1.f);
    REQUIRE(q.qw == Catch::Approx(127.5));
    REQUIRE(q.codes == std::vector<uint32_t>{0, 255, 128, 191});
    REQUIRE(qc.weight_ranges.at("l.w").lo == -1.f);
    REQUIRE(qc.weight_ranges.at("l.w").hi == 1.f);
}

TEST_CASE("reconstruction error stays within half a code step") {
    for (int m_bits : {2, 3, 4, 8, 12, 16}) {
        auto ps = random_weights({6, 64}, 40 + uint64_t(m_bits));
        auto copy = ps;
        QuantConfig qc;
        qc.m_bits = m_bits;
        auto wc = quantize_weights(copy, qc);
        dequantize_weights(copy, wc);
        for (const auto& [name, q] : wc) {
            double bound = 0.5 / double(q.qw) + 1e-6;
            const auto& orig = ps.at(name).value;
            const auto& rec = copy.at(name).value;
            for (size_t i = 0; i < orig.size(); ++i)
                REQUIRE(std::fabs(double(orig[i]) - double(rec[i])) <= bound);
        }
    }
}

TEST_CASE("a constant layer is stored as a degenerate range") {
    ParamSet<float> ps;
    ps.add("l.w", TensorF::from({2, 2}, {0.7f, 0.7f, 0.7f, 0.7f}), 'o');
    QuantConfig qc;
    qc.m_bits = 4;
    auto wc = quantize_weights(ps, qc);
    REQUIRE(wc.at("l.w").qw == 0.f);
    REQUIRE(wc.at("l.w").codes == std::vector<uint32_t>{0, 0, 0, 0});
    dequantize_weights(ps, wc);
    for (size_t i = 0; i < 4; ++i) REQUIRE(ps.at("l.w").value[i] == 0.7f);
}

TEST_CASE("range tracker blends batches the ema way") {
    QuantRange r;
    r.observe(-1.f, 2.f, 0.5);
    REQUIRE(r.lo == -1.f);
    REQUIRE(r.hi == 2.f);
    r.observe(-3.f, 2.f, 0.5);
    REQUIRE(r.lo == Catch::Approx(-2.0));

    QuantRange s;
    s.observe(0.f, 1.f, 0.1);
    s.observe(0.f, 1e4f, 0.1);
    REQUIRE(s.hi == Catch::Approx(0.9 * 1.0 + 0.1 * 1e4));
}

TEST_CASE("compression ratio reproduces the reference table") {
    const double expected[4][4] = {{11.429, 5.714, 3.81, 2.857},
                                   {20.0, 10.0, 6.667, 5.0},
                                   {80.0, 40.0, 26.667, 20.0},
                                   {160.0, 80.0, 53.333, 40.0}};
    const double gammas[4] = {0.3, 0.6, 0.9, 0.95};
    const int bits[4] = {4, 8, 12, 16};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            REQUIRE(compression_ratio(gammas[i], bits[j]) ==
                    Catch::Approx(expected[i][j]).margin(1e-3));

    for (int i = 0; i < 4; ++i)
        for (int j = 0; j + 1 < 4; ++j) {
            REQUIRE(compression_ratio(gammas[i], bits[j]) >
                    compression_ratio(gammas[i], bits[j + 1]));
            REQUIRE(compression_ratio(gammas[j + 1], bits[i]) >
                    compression_ratio(gammas[j], bits[i]));
        }

    REQUIRE(compression_ratio(1000.0, 700.0, 4) == Catch::Approx(32000.0 / 2800.0));
    REQUIRE_THROWS_AS(compression_ratio(1000.0, 0.0, 4), std::invalid_argument);
    REQUIRE_THROWS_AS(compression_ratio(1000.0, 700.0, 0), std::invalid_argument);

    auto rep = make_report(PruneSummary{0.6, 0.1f, 1000, 400}, 8, 0.9, 0.88);
    REQUIRE(rep.psi == Catch::Approx(10.0));
    REQUIRE(rep.csv_row() == "1000,400,0.600000,8,10.000000,0.900000,0.880000");
}

TEST_CASE("compressed checkpoints round-trip and shrink on disk") {
    auto corpus = toy_corpus(120, 61);
    auto m = make_transceiver(small_cfg(corpus.vocab.size()));
    prune(m.ps, PruneConfig{0.6, 0});

    const std::string fp_path = "compress_fp_tmp.ckpt";
    const std::string q_path = "compress_q_tmp.ckpt";
    m.save(fp_path);

    QuantConfig qc;
    qc.m_bits = 8;
    save_compressed(q_path, m, qc);

    // The same codes the file stores, reconstructed in memory.
    auto expect = m.ps;
    auto wc = quantize_weights(expect, qc);
    dequantize_weights(expect, wc);

    auto loaded = TransceiverModel::load(q_path);
    REQUIRE(loaded.cfg.vocab == m.cfg.vocab);
    REQUIRE(loaded.cfg.d_model == m.cfg.d_model);
    for (const auto& [name, p] : expect) {
        auto& lp = loaded.ps.at(name);
        for (size_t i = 0; i < p.value.size(); ++i) REQUIRE(lp.value[i] == p.value[i]);
        REQUIRE(lp.mask == p.mask);
    }

    // gamma=0.6 at 8 bits promises 10x on the weight payload; the whole file
    // should land well under half the float checkpoint even with metadata.
    REQUIRE(file_size(q_path) * 3 < file_size(fp_path));
    std::remove(fp_path.c_str());
    std::remove(q_path.c_str());
}

TEST_CASE("thirty-two bit fake quantization is a no-op") {
    auto corpus = toy_corpus(200, 71);
    auto m = make_transceiver(small_cfg(corpus.vocab.size()));

    QuantConfig qc;
    qc.m_bits = 32;
    qc.ema_c = 0.5;
    qc.calibration_batches = 2;
    ChannelSetup su;
    su.csi_mode = CsiMode::None;
    su.fading = Fading::Awgn;
    su.snr_db = 18.0;
    calibrate_activations(m, corpus, su, qc, 7);
    REQUIRE(!qc.act_ranges.empty());

    std::vector<std::vector<int>> probe;
    for (size_t i = 0; i < 16; ++i) probe.push_back(corpus.test[i].tokens);

    auto plain = run_pipeline(m, probe, su, 99);
    FakeQuantTap tap(qc.act_ranges, qc.m_bits);
    auto saved = litesc::detail::swap_in_quantized(m.ps, qc);
    auto quant = run_pipeline(m, probe, su, 99, 32, &tap);
    litesc::detail::restore_weights(m.ps, saved);

    REQUIRE(plain == quant);
}

TEST_CASE("qat returns at least the post-quantization score") {
    auto corpus = toy_corpus(300, 81);
    auto m = make_transceiver(small_cfg(corpus.vocab.size()));

    TrainConfig tc;
    tc.csi_mode = CsiMode::None;
    tc.fading = Fading::Awgn;
    tc.snr_lo = 14.0;
    tc.snr_hi = 30.0;
    tc.epochs = 6;
    tc.seed = 9;
    tc.eval_sentences = 0;
    train(m, corpus, tc);

    QuantConfig qc;
    qc.m_bits = 4;
    qc.ema_c = 0.3;
    qc.calibration_batches = 4;
    ChannelSetup su;
    su.csi_mode = CsiMode::None;
    su.fading = Fading::Awgn;
    su.snr_db = 22.0;
    calibrate_activations(m, corpus, su, qc, 13);

    QuantConfig uncalibrated;
    REQUIRE_THROWS_AS(qat_finetune(m, corpus, uncalibrated, tc), std::invalid_argument);

    tc.epochs = 2;
    tc.eval_sentences = 40;
    tc.snr_lo = tc.snr_hi = 22.0;
    double before = quantized_bleu(m, corpus.test, su, qc, tc.seed * 1000003, 40);
    auto log = qat_finetune(m, corpus, qc, tc);
    REQUIRE(log.epochs.size() == 2);
    double after = quantized_bleu(m, corpus.test, su, qc, tc.seed * 1000003, 40);
    REQUIRE(after >= before - 1e-12);
}
