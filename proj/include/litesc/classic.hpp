// Copyright (c) 2026 the litesc authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "litesc/channel.hpp"
#include "litesc/csi.hpp"
#include "litesc/text.hpp"

namespace litesc {

using Bits = std::vector<uint8_t>;  // one 0/1 per entry

// GF(2^8) with the reduction polynomial x^8 + x^4 + x^3 + x^2 + 1 and
// generator element 2. exp is doubled so products index without a modulo.
namespace gf {

struct Tables {
    uint8_t exp[512];
    uint8_t log[256];

    Tables() {
        unsigned x = 1;
        for (int i = 0; i < 255; ++i) {
            exp[i] = uint8_t(x);
            log[x] = uint8_t(i);
            x <<= 1;
            if (x & 0x100) x ^= 0x11D;
        }
        for (int i = 255; i < 512; ++i) exp[i] = exp[i - 255];
        log[0] = 0;
    }
};

inline const Tables& tables() {
    static const Tables t;
    return t;
}

inline uint8_t mul(uint8_t a, uint8_t b) {
    if (a == 0 || b == 0) return 0;
    const Tables& t = tables();
    return t.exp[int(t.log[a]) + int(t.log[b])];
}

inline uint8_t div(uint8_t a, uint8_t b) {
    if (b == 0) throw std::domain_error("gf: division by zero");
    if (a == 0) return 0;
    const Tables& t = tables();
    return t.exp[(int(t.log[a]) + 255 - int(t.log[b])) % 255];
}

inline uint8_t inv(uint8_t a) { return div(1, a); }

// alpha^e for any integer exponent.
inline uint8_t pow_alpha(int e) {
    e %= 255;
    if (e < 0) e += 255;
    return tables().exp[e];
}

// Coefficients ascending: p[i] multiplies x^i.
using Poly = std::vector<uint8_t>;

inline uint8_t eval(const Poly& p, uint8_t x) {
    uint8_t acc = 0;
    for (size_t i = p.size(); i-- > 0;) acc = uint8_t(mul(acc, x) ^ p[i]);
    return acc;
}

inline Poly mul_poly(const Poly& a, const Poly& b) {
    Poly out(a.size() + b.size() - 1, 0);
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) out[i + j] ^= mul(a[i], b[j]);
    return out;
}

}  // namespace gf

// Shortened Reed-Solomon over GF(2^8). Written as (k, n): k payload symbols
// carry n - k parity symbols and up to t = (n - k)/2 symbol errors per block
// are corrected.
struct RsCode {
    size_t k = 5;
    size_t n = 7;

    size_t nsym() const { return n - k; }
    size_t t() const { return (n - k) / 2; }

    void validate() const {
        if (n > 255) throw std::invalid_argument("rs: block length exceeds the field");
        if (k == 0 || k >= n) throw std::invalid_argument("rs: need 0 < k < n");
    }
};

namespace detail {

// Generator with roots alpha^0 .. alpha^(nsym-1).
inline gf::Poly rs_generator(size_t nsym) {
    gf::Poly g{1};
    for (size_t i = 0; i < nsym; ++i) g = gf::mul_poly(g, gf::Poly{gf::pow_alpha(int(i)), 1});
    return g;
}

}  // namespace detail

// Systematic encoding: the codeword transmits the k message symbols followed
// by the parity, first symbol on the highest power.
inline std::vector<uint8_t> rs_encode_block(const std::vector<uint8_t>& msg, const RsCode& code) {
    code.validate();
    if (msg.size() != code.k) throw std::invalid_argument("rs: message must hold k symbols");
    size_t nsym = code.nsym();
    gf::Poly g = detail::rs_generator(nsym);

    // Remainder of m(x) x^nsym by synthetic division; c(x) = m(x) x^nsym + rem.
    gf::Poly rem(nsym, 0);
    for (size_t i = 0; i < code.k; ++i) {
        uint8_t feedback = uint8_t(msg[i] ^ rem[nsym - 1]);
        for (size_t j = nsym - 1; j > 0; --j)
            rem[j] = uint8_t(rem[j - 1] ^ gf::mul(feedback, g[j]));
        rem[0] = gf::mul(feedback, g[0]);
    }

    std::vector<uint8_t> out(msg);
    for (size_t j = 0; j < nsym; ++j) out.push_back(rem[nsym - 1 - j]);
    return out;
}

struct RsBlockResult {
    std::vector<uint8_t> data;  // k symbols, corrected or passed through
    bool ok = false;
};

// Syndromes, Berlekamp-Massey, root search, Forney. A block is flagged as a
// failure when the locator degree exceeds t, the root count disagrees, or
// the corrected word still has nonzero syndromes; the received payload is
// then passed through untouched.
inline RsBlockResult rs_decode_block(const std::vector<uint8_t>& block, const RsCode& code) {
    code.validate();
    if (block.size() != code.n) throw std::invalid_argument("rs: block must hold n symbols");
    size_t nsym = code.nsym();

    RsBlockResult out;
    out.data.assign(block.begin(), block.begin() + long(code.k));

    // Coefficient of x^j is the symbol at position n-1-j.
    auto coef = [&](const std::vector<uint8_t>& w, size_t power) { return w[code.n - 1 - power]; };

    std::vector<uint8_t> word = block;
    auto syndromes = [&](const std::vector<uint8_t>& w) {
        gf::Poly s(nsym, 0);
        gf::Poly asc(code.n, 0);
        for (size_t j = 0; j < code.n; ++j) asc[j] = coef(w, j);
        for (size_t i = 0; i < nsym; ++i) s[i] = gf::eval(asc, gf::pow_alpha(int(i)));
        return s;
    };

    gf::Poly synd = syndromes(word);
    bool clean = true;
    for (uint8_t s : synd) clean &= (s == 0);
    if (clean) {
        out.ok = true;
        return out;
    }

    // Berlekamp-Massey for the error locator, ascending coefficients.
    gf::Poly lam{1}, prev{1};
    size_t L = 0, m = 1;
    uint8_t b = 1;
    for (size_t step = 0; step < nsym; ++step) {
        uint8_t delta = synd[step];
        for (size_t i = 1; i <= L && i < lam.size(); ++i)
            delta ^= gf::mul(lam[i], synd[step - i]);
        if (delta == 0) {
            ++m;
        } else if (2 * L <= step) {
            gf::Poly tmp = lam;
            uint8_t scale = gf::div(delta, b);
            if (lam.size() < prev.size() + m) lam.resize(prev.size() + m, 0);
            for (size_t i = 0; i < prev.size(); ++i) lam[i + m] ^= gf::mul(scale, prev[i]);
            L = step + 1 - L;
            prev = tmp;
            b = delta;
            m = 1;
        } else {
            uint8_t scale = gf::div(delta, b);
            if (lam.size() < prev.size() + m) lam.resize(prev.size() + m, 0);
            for (size_t i = 0; i < prev.size(); ++i) lam[i + m] ^= gf::mul(scale, prev[i]);
            ++m;
        }
    }
    while (!lam.empty() && lam.back() == 0) lam.pop_back();
    if (L > code.t() || lam.size() != L + 1) return out;

    // Error positions: powers j where lambda(alpha^-j) vanishes.
    std::vector<size_t> err_pow;
    for (size_t j = 0; j < code.n; ++j)
        if (gf::eval(lam, gf::pow_alpha(-int(j))) == 0) err_pow.push_back(j);
    if (err_pow.size() != L) return out;

    // Evaluator omega = S lambda mod x^nsym, then Forney magnitudes
    // e_j = X_j omega(X_j^-1) / lambda'(X_j^-1).
    gf::Poly omega = gf::mul_poly(synd, lam);
    omega.resize(nsym);
    gf::Poly dlam;
    for (size_t i = 1; i < lam.size(); i += 2) {
        dlam.resize(i, 0);
        dlam[i - 1] = lam[i];
    }
    for (size_t j : err_pow) {
        uint8_t xj = gf::pow_alpha(int(j));
        uint8_t xin = gf::pow_alpha(-int(j));
        uint8_t denom = gf::eval(dlam, xin);
        if (denom == 0) return out;
        uint8_t mag = gf::mul(xj, gf::div(gf::eval(omega, xin), denom));
        word[code.n - 1 - j] ^= mag;
    }

    gf::Poly recheck = syndromes(word);
    for (uint8_t s : recheck)
        if (s != 0) return out;

    out.data.assign(word.begin(), word.begin() + long(code.k));
    out.ok = true;
    return out;
}

namespace detail {

inline std::vector<uint8_t> bits_to_symbols(const Bits& bits, size_t pad_to) {
    std::vector<uint8_t> sym((bits.size() + 7) / 8, 0);
    for (size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) sym[i / 8] |= uint8_t(0x80u >> (i % 8));
    while (sym.size() % pad_to != 0) sym.push_back(0);
    return sym;
}

inline Bits symbols_to_bits(const std::vector<uint8_t>& sym) {
    Bits bits(sym.size() * 8);
    for (size_t i = 0; i < bits.size(); ++i) bits[i] = (sym[i / 8] >> (7 - i % 8)) & 1u;
    return bits;
}

}  // namespace detail

inline Bits rs_encode(const Bits& bits, const RsCode& code) {
    code.validate();
    auto sym = detail::bits_to_symbols(bits, code.k);
    std::vector<uint8_t> coded;
    coded.reserve(sym.size() / code.k * code.n);
    for (size_t start = 0; start < sym.size(); start += code.k) {
        std::vector<uint8_t> msg(sym.begin() + long(start), sym.begin() + long(start + code.k));
        auto block = rs_encode_block(msg, code);
        coded.insert(coded.end(), block.begin(), block.end());
    }
    return detail::symbols_to_bits(coded);
}

struct RsStreamResult {
    Bits bits;
    size_t blocks = 0;
    size_t failures = 0;
};

// Trailing bits short of a whole block (modulation padding) are dropped.
inline RsStreamResult rs_decode(const Bits& bits, const RsCode& code) {
    code.validate();
    RsStreamResult out;
    size_t block_bits = code.n * 8;
    out.blocks = bits.size() / block_bits;
    std::vector<uint8_t> payload;
    for (size_t bidx = 0; bidx < out.blocks; ++bidx) {
        std::vector<uint8_t> block(code.n, 0);
        for (size_t i = 0; i < block_bits; ++i)
            if (bits[bidx * block_bits + i]) block[i / 8] |= uint8_t(0x80u >> (i % 8));
        auto res = rs_decode_block(block, code);
        if (!res.ok) ++out.failures;
        payload.insert(payload.end(), res.data.begin(), res.data.end());
    }
    out.bits = detail::symbols_to_bits(payload);
    return out;
}

// Prefix-free variable-length code over token ids, built by greedy pair
// merging with deterministic tie-breaking on (count, lowest id).
struct HuffmanCodebook {
    std::map<int, Bits> code;
    std::vector<std::array<int, 3>> tree;  // {left, right, leaf id}; -1 = none
    int root = -1;

    static HuffmanCodebook build(const std::map<int, size_t>& freq) {
        if (freq.empty()) throw std::invalid_argument("huffman: empty alphabet");
        HuffmanCodebook book;
        using Entry = std::tuple<size_t, int, int>;  // count, tie key, node
        std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
        for (const auto& [id, count] : freq) {
            book.tree.push_back({-1, -1, id});
            heap.emplace(count, id, int(book.tree.size()) - 1);
        }
        int tie = 1 << 24;  // merged nodes break ties after every real id
        if (heap.size() == 1) {
            auto [c, t, node] = heap.top();
            book.tree.push_back({node, -1, -1});
            book.root = int(book.tree.size()) - 1;
        }
        while (heap.size() > 1) {
            auto [c1, t1, n1] = heap.top();
            heap.pop();
            auto [c2, t2, n2] = heap.top();
            heap.pop();
            book.tree.push_back({n1, n2, -1});
            book.root = int(book.tree.size()) - 1;
            heap.emplace(c1 + c2, tie++, book.root);
        }
        Bits prefix;
        book.walk(book.root, prefix);
        return book;
    }

    static HuffmanCodebook from_corpus(const Corpus& corpus) {
        std::map<int, size_t> freq;
        for (const auto& s : corpus.train) {
            for (int t : s.tokens) ++freq[t];
            ++freq[END];
        }
        ++freq[UNK];  // unseen words at test time encode as the unknown id
        return build(freq);
    }

    Bits encode(const std::vector<int>& ids) const {
        Bits out;
        for (int id : ids) {
            auto it = code.find(id);
            if (it == code.end()) it = code.find(UNK);
            if (it == code.end()) throw std::invalid_argument("huffman: id not in codebook");
            out.insert(out.end(), it->second.begin(), it->second.end());
        }
        return out;
    }

    // Walks until the bits run out; an unfinished trailing codeword is
    // dropped. Framing (the end marker) belongs to the pipeline.
    std::vector<int> decode(const Bits& bits) const {
        std::vector<int> out;
        int node = root;
        for (uint8_t b : bits) {
            node = b ? tree[size_t(node)][1] : tree[size_t(node)][0];
            if (node < 0) break;  // single-symbol tree's empty branch
            if (tree[size_t(node)][2] >= 0) {
                out.push_back(tree[size_t(node)][2]);
                node = root;
            }
        }
        return out;
    }

    double mean_bits(const std::map<int, size_t>& freq) const {
        size_t total = 0;
        double bits = 0.0;
        for (const auto& [id, count] : freq) {
            bits += double(count) * double(code.at(id).size());
            total += count;
        }
        return bits / double(total);
    }

    double kraft() const {
        double s = 0.0;
        for (const auto& [id, bits] : code) s += std::pow(2.0, -double(bits.size()));
        return s;
    }

private:
    void walk(int node, Bits& prefix) {
        if (node < 0) return;
        if (tree[size_t(node)][2] >= 0) {
            code[tree[size_t(node)][2]] = prefix.empty() ? Bits{0} : prefix;
            return;
        }
        prefix.push_back(0);
        walk(tree[size_t(node)][0], prefix);
        prefix.back() = 1;
        walk(tree[size_t(node)][1], prefix);
        prefix.pop_back();
    }
};

// Fixed-length coding: 5 bits index the 31 most frequent ids; code 31
// escapes to a 16-bit raw id for everything else.
struct Fixed5Codebook {
    static constexpr size_t ESCAPE = 31;
    std::vector<int> top;     // rank -> id
    std::map<int, size_t> rank;

    static Fixed5Codebook from_corpus(const Corpus& corpus) {
        std::map<int, size_t> freq;
        for (const auto& s : corpus.train) {
            for (int t : s.tokens) ++freq[t];
            ++freq[END];
        }
        std::vector<std::pair<int, size_t>> order(freq.begin(), freq.end());
        std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        Fixed5Codebook book;
        for (size_t i = 0; i < order.size() && i < ESCAPE; ++i) {
            book.rank[order[i].first] = i;
            book.top.push_back(order[i].first);
        }
        return book;
    }

    Bits encode(const std::vector<int>& ids) const {
        Bits out;
        auto put = [&](uint32_t v, size_t width) {
            for (size_t i = width; i-- > 0;) out.push_back((v >> i) & 1u);
        };
        for (int id : ids) {
            if (id < 0 || id > 0xFFFF) throw std::invalid_argument("fixed5: id out of range");
            auto it = rank.find(id);
            if (it != rank.end()) {
                put(uint32_t(it->second), 5);
            } else {
                put(uint32_t(ESCAPE), 5);
                put(uint32_t(id), 16);
            }
        }
        return out;
    }

    std::vector<int> decode(const Bits& bits) const {
        std::vector<int> out;
        size_t pos = 0;
        auto get = [&](size_t width, uint32_t& v) {
            if (pos + width > bits.size()) return false;
            v = 0;
            for (size_t i = 0; i < width; ++i) v = (v << 1) | bits[pos++];
            return true;
        };
        uint32_t v = 0;
        while (get(5, v)) {
            if (v < ESCAPE) {
                if (v < top.size()) out.push_back(top[v]);
            } else {
                uint32_t id = 0;
                if (!get(16, id)) break;
                out.push_back(int(id));
            }
        }
        return out;
    }

    double mean_bits(const std::map<int, size_t>& freq) const {
        size_t total = 0;
        double bits = 0.0;
        for (const auto& [id, count] : freq) {
            bits += double(count) * (rank.count(id) ? 5.0 : 21.0);
            total += count;
        }
        return bits / double(total);
    }
};

// Gray-coded square 64-QAM at unit average symbol energy. Three bits per
// axis; adjacent amplitude levels differ in exactly one bit.
namespace qam {

// index by the 3-bit word, value in units of the level grid
constexpr int GRAY_LEVEL[8] = {-7, -5, -1, -3, 7, 5, 1, 3};

inline double unit() { return 1.0 / std::sqrt(42.0); }

inline double level_of(uint32_t word3) { return GRAY_LEVEL[word3 & 7] * unit(); }

inline uint32_t nearest_word(double v) {
    double best = 1e300;
    uint32_t word = 0;
    for (uint32_t w = 0; w < 8; ++w) {
        double d = std::abs(v - level_of(w));
        if (d < best) {
            best = d;
            word = w;
        }
    }
    return word;
}

}  // namespace qam

inline std::vector<cplx> qam64_modulate(Bits bits) {
    while (bits.size() % 6 != 0) bits.push_back(0);
    std::vector<cplx> out;
    out.reserve(bits.size() / 6);
    for (size_t i = 0; i < bits.size(); i += 6) {
        uint32_t wi = uint32_t(bits[i] << 2 | bits[i + 1] << 1 | bits[i + 2]);
        uint32_t wq = uint32_t(bits[i + 3] << 2 | bits[i + 4] << 1 | bits[i + 5]);
        out.emplace_back(qam::level_of(wi), qam::level_of(wq));
    }
    return out;
}

inline Bits qam64_demodulate(const std::vector<cplx>& symbols) {
    Bits bits;
    bits.reserve(symbols.size() * 6);
    for (const cplx& s : symbols) {
        uint32_t wi = qam::nearest_word(s.real());
        uint32_t wq = qam::nearest_word(s.imag());
        for (size_t i = 3; i-- > 0;) bits.push_back((wi >> i) & 1u);
        for (size_t i = 3; i-- > 0;) bits.push_back((wq >> i) & 1u);
    }
    return bits;
}

enum class SourceScheme { Huffman, Fixed5 };

inline const char* source_scheme_name(SourceScheme s) {
    return s == SourceScheme::Huffman ? "huffman" : "fixed5";
}

struct BaselineConfig {
    SourceScheme scheme = SourceScheme::Huffman;
    RsCode rs{5, 7};
    Fading fading = Fading::Rayleigh;
    double rician_k = 0.0;
    double snr_db = 6.0;
    CsiMode csi_mode = CsiMode::Perfect;
    uint64_t seed = 1;
};

struct BaselineResult {
    BleuSummary bleu{};
    size_t sentences = 0;
    size_t rs_failures = 0;
    size_t empty_sentences = 0;
};

// Source code -> RS -> 64-QAM -> one fading draw per sentence -> hard
// decisions -> RS decode -> source decode -> BLEU against the reference.
// Data symbols are scaled so each real dimension carries unit power, the
// same accounting the semantic transceiver trains under; the constellation
// itself stays at unit symbol energy.
inline BaselineResult baseline_pipeline(const Corpus& corpus, const BaselineConfig& cfg,
                                        size_t limit = 0) {
    if (cfg.csi_mode == CsiMode::Refined)
        throw std::invalid_argument("baseline_pipeline: refinement applies to the learned system");
    cfg.rs.validate();
    if (corpus.test.empty()) throw std::invalid_argument("baseline_pipeline: empty test split");

    HuffmanCodebook huff;
    Fixed5Codebook fixed;
    if (cfg.scheme == SourceScheme::Huffman)
        huff = HuffmanCodebook::from_corpus(corpus);
    else
        fixed = Fixed5Codebook::from_corpus(corpus);

    Rng rng(cfg.seed);
    const double sigma = std::sqrt(noise_var(cfg.snr_db));
    const double amp = std::sqrt(2.0);
    const CMat eye = CMat::identity(1);

    size_t n_sent = limit == 0 ? corpus.test.size() : std::min(limit, corpus.test.size());
    std::vector<std::vector<int>> preds, refs;
    BaselineResult out;
    out.sentences = n_sent;

    for (size_t si = 0; si < n_sent; ++si) {
        std::vector<int> framed = corpus.test[si].tokens;
        framed.push_back(END);
        Bits src = cfg.scheme == SourceScheme::Huffman ? huff.encode(framed)
                                                       : fixed.encode(framed);
        Bits coded = rs_encode(src, cfg.rs);
        auto symbols = qam64_modulate(coded);

        ChannelRealization ch = sample_channel(cfg.fading, 1, cfg.rician_k, rng);
        cplx h = ch.h.at(0, 0);
        cplx h_est(1.0, 0.0);
        if (cfg.csi_mode == CsiMode::Perfect) {
            h_est = h;
        } else if (cfg.csi_mode == CsiMode::Rough) {
            CMat yp = transmit(eye, ch, cfg.snr_db, rng);
            h_est = ls_estimate(yp, eye).at(0, 0);
        }

        std::vector<cplx> rx(symbols.size());
        for (size_t i = 0; i < symbols.size(); ++i) {
            cplx noise(sigma * rng.normal(), sigma * rng.normal());
            cplx y = h * (amp * symbols[i]) + noise;
            rx[i] = y / (amp * h_est);
        }

        auto hard = qam64_demodulate(rx);
        auto stream = rs_decode(hard, cfg.rs);
        out.rs_failures += stream.failures;

        std::vector<int> ids = cfg.scheme == SourceScheme::Huffman ? huff.decode(stream.bits)
                                                                   : fixed.decode(stream.bits);
        auto stop = std::find(ids.begin(), ids.end(), END);
        std::vector<int> tokens(ids.begin(), stop);
        if (tokens.empty()) ++out.empty_sentences;
        preds.push_back(std::move(tokens));
        refs.push_back(corpus.test[si].tokens);
    }

    out.bleu = corpus_bleu(preds, refs);
    return out;
}

}  // namespace litesc
