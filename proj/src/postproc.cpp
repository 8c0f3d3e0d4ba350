#include "qrt/postproc.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "qrt/rng.hpp"

namespace qrt {

namespace {

constexpr uint64_t kPermSeed = 0x5ca1ab1e0ddba11ull;
constexpr uint64_t kDigestSeed = 0xcbf29ce484222325ull;
constexpr uint64_t kDigestMul = 1099511628211ull;

void write_u32le(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 24));
}

uint32_t read_u32le(const uint8_t* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

uint8_t range_parity(const Bits& key, const std::vector<uint32_t>& perm, size_t lo, size_t hi) {
    uint8_t par = 0;
    for (size_t i = lo; i < hi; ++i) par ^= key[perm[i]];
    return par & 1;
}

} // namespace

std::vector<uint8_t> encode_message(const DialogueMessage& m) {
    std::vector<uint8_t> out;
    out.reserve(9 + m.payload.size());
    out.push_back(uint8_t(m.type));
    write_u32le(out, m.seq);
    write_u32le(out, uint32_t(m.payload.size()));
    out.insert(out.end(), m.payload.begin(), m.payload.end());
    return out;
}

bool decode_message(const std::vector<uint8_t>& raw, DialogueMessage& out) {
    if (raw.size() < 9) return false;
    uint8_t t = raw[0];
    if (t < 1 || t > 5) return false;
    uint32_t declared = read_u32le(raw.data() + 5);
    if (declared != raw.size() - 9) return false;
    out.type = MsgType(t);
    out.seq = read_u32le(raw.data() + 1);
    out.payload.assign(raw.begin() + 9, raw.end());
    return true;
}

DialogueMessage make_sift_message(const std::vector<uint32_t>& sift_rounds) {
    DialogueMessage m;
    m.type = MsgType::SiftAnnounce;
    m.seq = 0;
    write_u32le(m.payload, uint32_t(sift_rounds.size()));
    for (uint32_t idx : sift_rounds) write_u32le(m.payload, idx);
    return m;
}

DialogueMessage make_sample_message(const std::vector<uint32_t>& positions,
                                    const Bits& revealed_bits) {
    if (positions.size() != revealed_bits.size())
        throw std::invalid_argument("sample message: positions and bits must align");
    DialogueMessage m;
    m.type = MsgType::SampleReveal;
    m.seq = 1;
    write_u32le(m.payload, uint32_t(positions.size()));
    for (uint32_t p : positions) write_u32le(m.payload, p);
    std::vector<uint8_t> packed((positions.size() + 7) / 8, 0);
    for (size_t i = 0; i < revealed_bits.size(); ++i) pack_bit(packed, i, revealed_bits[i]);
    m.payload.insert(m.payload.end(), packed.begin(), packed.end());
    return m;
}

void pack_bit(std::vector<uint8_t>& bytes, size_t index, uint8_t bit) {
    bytes[index / 8] = uint8_t((bytes[index / 8] & ~(1u << (index % 8))) |
                               (uint32_t(bit & 1) << (index % 8)));
}

uint8_t unpack_bit(const std::vector<uint8_t>& bytes, size_t index) {
    return (bytes[index / 8] >> (index % 8)) & 1;
}

uint64_t key_digest64(const Bits& key) {
    uint64_t h = kDigestSeed;
    for (uint8_t b : key) h = h * kDigestMul + (uint64_t(b & 1) + 1);
    return h;
}

size_t reconcile_block_size(double qber_hint, size_t n) {
    if (!(qber_hint > 0.0)) throw std::invalid_argument("block size: hint must be > 0");
    double v = 0.73 / qber_hint;
    size_t k = v >= double(n) ? n : std::max<size_t>(4, size_t(std::lround(v)));
    return std::min(k, n);
}

std::vector<uint32_t> reconcile_permutation(size_t n, int pass) {
    std::vector<uint32_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = uint32_t(i);
    RngStream rng(derive_seed(kPermSeed, n, uint64_t(pass)));
    rng.shuffle(perm);
    return perm;
}

CascadeOutcome cascadeReconcileImpl(const Bits& alice, const Bits& bob, double hint,
                                    const ReconcileParams& prm) {
    if (alice.size() != bob.size())
        throw std::invalid_argument("error_correct: key lengths differ");
    const size_t n = alice.size();
    CascadeOutcome out;
    out.corrected = bob;
    uint32_t seq = prm.seq_base;
    auto push = [&](MsgType t, std::vector<uint8_t> payload) {
        out.messages.push_back({t, seq++, std::move(payload)});
    };

    const int passes = (hint > 0.0 && n > 0) ? prm.passes : 0;
    const size_t k0 = passes ? reconcile_block_size(hint, n) : n;

    std::vector<std::vector<uint32_t>> perm(passes), inv(passes);
    std::vector<size_t> bsize(passes);
    std::vector<std::vector<uint8_t>> diff(passes);
    std::set<std::pair<int, uint32_t>> pending;

    for (int p = 0; p < passes; ++p) {
        perm[p] = reconcile_permutation(n, p);
        inv[p].resize(n);
        for (size_t i = 0; i < n; ++i) inv[p][perm[p][i]] = uint32_t(i);
        const size_t k = std::min<size_t>(n, k0 << p);
        bsize[p] = k;
        const size_t nb = (n + k - 1) / k;
        diff[p].assign(nb, 0);
        std::vector<uint8_t> bits((nb + 7) / 8, 0);
        for (size_t b = 0; b < nb; ++b) {
            size_t lo = b * k, hi = std::min(n, lo + k);
            uint8_t ap = range_parity(alice, perm[p], lo, hi);
            uint8_t bp = range_parity(out.corrected, perm[p], lo, hi);
            pack_bit(bits, b, ap);
            diff[p][b] = uint8_t(ap ^ bp);
            if (diff[p][b]) pending.insert({p, uint32_t(b)});
        }
        std::vector<uint8_t> payload;
        write_u32le(payload, uint32_t(nb));
        payload.insert(payload.end(), bits.begin(), bits.end());
        push(MsgType::BlockParity, std::move(payload));
        out.leaked_bits += nb;

        while (!pending.empty()) {
            auto [q, blk] = *pending.begin();
            const size_t kq = bsize[q];
            size_t lo = size_t(blk) * kq, hi = std::min(n, lo + kq);
            while (hi - lo > 1) {
                size_t mid = lo + (hi - lo) / 2;
                uint8_t ap = range_parity(alice, perm[q], lo, mid);
                std::vector<uint8_t> pl;
                write_u32le(pl, 1);
                pl.push_back(ap);
                push(MsgType::BisectParity, std::move(pl));
                out.leaked_bits += 1;
                uint8_t bp = range_parity(out.corrected, perm[q], lo, mid);
                if (ap != bp) hi = mid;
                else lo = mid;
            }
            const uint32_t g = perm[q][lo];
            out.corrected[g] ^= 1;
            for (int r = 0; r <= p; ++r) {
                uint32_t rb = inv[r][g] / uint32_t(bsize[r]);
                diff[r][rb] ^= 1;
                if (diff[r][rb]) pending.insert({r, rb});
                else pending.erase({r, rb});
            }
        }
    }

    const uint64_t ad = key_digest64(alice);
    std::vector<uint8_t> dp(8);
    for (int i = 0; i < 8; ++i) dp[i] = uint8_t(ad >> (8 * i));
    push(MsgType::KeyDigest, std::move(dp));
    out.leaked_bits += 64;
    out.success = (key_digest64(out.corrected) == ad);
    return out;
}

CascadeOutcome cascade_reconcile(const Bits& alice_key, const Bits& bob_key, double qber_hint,
                                 const ReconcileParams& params) {
    return cascadeReconcileImpl(alice_key, bob_key, qber_hint, params);
}

std::vector<uint32_t> BobSessionContext::expected_sift() const {
    std::vector<uint32_t> out;
    for (uint64_t i = 0; i < n_rounds; ++i)
        if (clicked[i] && alice_bases[i] == bob_bases[i]) out.push_back(uint32_t(i));
    return out;
}

const char* verifier_abort_name(VerifierAbort a) {
    switch (a) {
        case VerifierAbort::None: return "none";
        case VerifierAbort::UnexpectedEnd: return "unexpected_end";
        case VerifierAbort::MalformedMessage: return "malformed_message";
        case VerifierAbort::UnexpectedType: return "unexpected_type";
        case VerifierAbort::BadSequence: return "bad_sequence";
        case VerifierAbort::BadSiftList: return "bad_sift_list";
        case VerifierAbort::BadSampleList: return "bad_sample_list";
        case VerifierAbort::QberThreshold: return "qber_threshold";
        case VerifierAbort::ParityShape: return "parity_shape";
        case VerifierAbort::DigestLength: return "digest_length";
        case VerifierAbort::DigestMismatch: return "digest_mismatch";
        case VerifierAbort::TrailingMessage: return "trailing_message";
        case VerifierAbort::StepBudget: return "step_budget";
    }
    return "unknown";
}

namespace {

// Stream-consuming replay of Bob's post-processing state machine.
class Verifier {
public:
    Verifier(const BobSessionContext& ctx, const std::vector<std::vector<uint8_t>>& dialogue,
             const PostProcessingOptions& opt, uint64_t budget)
        : ctx_(ctx), dlg_(dialogue), opt_(opt), budget_(budget) {}

    VerifierResult run() {
        if (!sift_stage()) return res_;
        if (!sample_stage()) return res_;
        if (!parity_stage()) return res_;
        if (!digest_stage()) return res_;
        if (pos_ < dlg_.size()) {
            stop(VerifierAbort::TrailingMessage);
            return res_;
        }
        res_.success = true;
        res_.key = kept_;
        return res_;
    }

private:
    bool stop(VerifierAbort a) {
        res_.abort = a;
        return false;
    }

    bool charge(uint64_t units) {
        res_.steps += units;
        return res_.steps <= budget_;
    }

    bool bug_digest() const {
        return opt_.bug_skip_digest_length_check && !opt_.strict_digest_verification;
    }

    // Pulls the next frame. Strict mode rejects malformed frames, wrong
    // sequence numbers and unexpected types; the planted bugs relax exactly
    // the checks they are named after.
    bool fetch(MsgType want, DialogueMessage& m, bool parity_family) {
        if (pos_ >= dlg_.size()) return stop(VerifierAbort::UnexpectedEnd);
        if (!charge(1)) return stop(VerifierAbort::StepBudget);
        const std::vector<uint8_t>& raw = dlg_[pos_];
        if (!decode_message(raw, m)) {
            bool tolerate = false;
            if (raw.size() >= 9 && raw[0] == uint8_t(MsgType::SiftAnnounce) &&
                want == MsgType::SiftAnnounce && opt_.bug_pad_truncated_sift)
                tolerate = true; // declared length disagreement silently accepted
            if (!raw.empty() && raw[0] == uint8_t(MsgType::KeyDigest) &&
                want == MsgType::KeyDigest && bug_digest())
                tolerate = true; // no length check: even cut-off digest frames pass through
            if (!tolerate) return stop(VerifierAbort::MalformedMessage);
            m.type = MsgType(raw[0]);
            m.seq = raw.size() >= 5 ? read_u32le(raw.data() + 1) : uint32_t(pos_);
            m.payload.assign(raw.begin() + long(std::min<size_t>(9, raw.size())), raw.end());
        }
        const bool reorder_tolerated =
            parity_family && opt_.bug_accept_reordered_parity &&
            (m.type == MsgType::BlockParity || m.type == MsgType::BisectParity);
        if (m.type != want && !reorder_tolerated) return stop(VerifierAbort::UnexpectedType);
        if (m.seq != uint32_t(pos_) && !reorder_tolerated) return stop(VerifierAbort::BadSequence);
        ++pos_;
        ++res_.messages_accepted;
        return true;
    }

    bool sift_stage() {
        DialogueMessage m;
        if (!fetch(MsgType::SiftAnnounce, m, false)) return false;
        const std::vector<uint32_t> expected = ctx_.expected_sift();
        std::vector<uint32_t> announced;
        if (opt_.bug_pad_truncated_sift) {
            uint32_t count = m.payload.size() >= 4 ? read_u32le(m.payload.data()) : 0;
            count = std::min<uint32_t>(count, 1u << 24); // keep padding bounded
            announced.resize(count, 0);
            for (uint32_t i = 0; i < count; ++i) {
                size_t off = 4 + size_t(i) * 4;
                if (off + 4 <= m.payload.size())
                    announced[i] = read_u32le(m.payload.data() + off) %
                                   std::max<uint32_t>(1, uint32_t(ctx_.n_rounds));
            }
        } else {
            if (m.payload.size() < 4) return stop(VerifierAbort::BadSiftList);
            uint32_t count = read_u32le(m.payload.data());
            if (m.payload.size() != 4 + size_t(count) * 4) return stop(VerifierAbort::BadSiftList);
            announced.resize(count);
            for (uint32_t i = 0; i < count; ++i)
                announced[i] = read_u32le(m.payload.data() + 4 + size_t(i) * 4);
            if (announced != expected) return stop(VerifierAbort::BadSiftList);
        }
        if (!charge(announced.size())) return stop(VerifierAbort::StepBudget);
        sift_rounds_ = std::move(announced);
        bob_sifted_.reserve(sift_rounds_.size());
        for (uint32_t idx : sift_rounds_)
            bob_sifted_.push_back(idx < ctx_.n_rounds ? ctx_.bob_bits[idx] : 0);
        return true;
    }

    bool sample_stage() {
        DialogueMessage m;
        if (!fetch(MsgType::SampleReveal, m, false)) return false;
        if (m.payload.size() < 4) return stop(VerifierAbort::BadSampleList);
        const uint32_t count = read_u32le(m.payload.data());
        const size_t need = 4 + size_t(count) * 4 + (count + 7) / 8;
        if (count == 0 || count > bob_sifted_.size() || m.payload.size() != need)
            return stop(VerifierAbort::BadSampleList);
        if (!charge(count)) return stop(VerifierAbort::StepBudget);
        std::vector<uint8_t> revealed(bob_sifted_.size(), 0);
        const std::vector<uint8_t> packed(m.payload.begin() + 4 + size_t(count) * 4,
                                          m.payload.end());
        uint64_t mismatches = 0;
        uint32_t prev = 0;
        for (uint32_t i = 0; i < count; ++i) {
            uint32_t posn = read_u32le(m.payload.data() + 4 + size_t(i) * 4);
            if (posn >= bob_sifted_.size() || (i > 0 && posn <= prev))
                return stop(VerifierAbort::BadSampleList);
            prev = posn;
            revealed[posn] = 1;
            if (unpack_bit(packed, i) != bob_sifted_[posn]) ++mismatches;
        }
        qber_ = double(mismatches) / double(count);
        for (size_t i = 0; i < bob_sifted_.size(); ++i)
            if (!revealed[i]) kept_.push_back(bob_sifted_[i]);
        if (qber_ > ctx_.qber_abort_threshold) return stop(VerifierAbort::QberThreshold);
        return true;
    }

    // Reads a parity-family message and returns `count` announced parity
    // bits. Under the reorder bug, shape problems degrade to "assume equal".
    bool parity_bits(MsgType want, size_t count, std::vector<uint8_t>& bits,
                     const std::vector<uint8_t>& assume) {
        DialogueMessage m;
        if (!fetch(want, m, true)) return false;
        bits = assume;
        const bool strict = !opt_.bug_accept_reordered_parity;
        if (m.payload.size() < 4) {
            if (strict) return stop(VerifierAbort::ParityShape);
            return true;
        }
        const uint32_t announced = read_u32le(m.payload.data());
        if (strict &&
            (announced != count || m.payload.size() != 4 + (count + 7) / 8))
            return stop(VerifierAbort::ParityShape);
        const std::vector<uint8_t> packed(m.payload.begin() + 4, m.payload.end());
        const size_t usable = std::min<size_t>(count, std::min<size_t>(announced, packed.size() * 8));
        for (size_t i = 0; i < usable; ++i) bits[i] = unpack_bit(packed, i);
        return true;
    }

    bool parity_stage() {
        const size_t n = kept_.size();
        const int passes = (qber_ > 0.0 && n > 0) ? ctx_.reconcile_passes : 0;
        const size_t k0 = passes ? reconcile_block_size(qber_, n) : n;

        std::vector<std::vector<uint32_t>> perm(passes), inv(passes);
        std::vector<size_t> bsize(passes);
        std::vector<std::vector<uint8_t>> diff(passes);
        std::set<std::pair<int, uint32_t>> pending;

        for (int p = 0; p < passes; ++p) {
            perm[p] = reconcile_permutation(n, p);
            inv[p].resize(n);
            for (size_t i = 0; i < n; ++i) inv[p][perm[p][i]] = uint32_t(i);
            const size_t k = std::min<size_t>(n, k0 << p);
            bsize[p] = k;
            const size_t nb = (n + k - 1) / k;
            if (!charge(n)) return stop(VerifierAbort::StepBudget);

            std::vector<uint8_t> own(nb, 0);
            for (size_t b = 0; b < nb; ++b)
                own[b] = range_parity(kept_, perm[p], b * k, std::min(n, b * k + k));
            std::vector<uint8_t> alice;
            if (!parity_bits(MsgType::BlockParity, nb, alice, own)) return false;
            diff[p].assign(nb, 0);
            for (size_t b = 0; b < nb; ++b) {
                diff[p][b] = uint8_t(alice[b] ^ own[b]);
                if (diff[p][b]) pending.insert({p, uint32_t(b)});
            }

            while (!pending.empty()) {
                auto [q, blk] = *pending.begin();
                const size_t kq = bsize[q];
                size_t lo = size_t(blk) * kq, hi = std::min(n, lo + kq);
                while (hi - lo > 1) {
                    size_t mid = lo + (hi - lo) / 2;
                    if (!charge(mid - lo)) return stop(VerifierAbort::StepBudget);
                    uint8_t bp = range_parity(kept_, perm[q], lo, mid);
                    std::vector<uint8_t> one;
                    if (!parity_bits(MsgType::BisectParity, 1, one, {bp})) return false;
                    if (one[0] != bp) hi = mid;
                    else lo = mid;
                }
                const uint32_t g = perm[q][lo];
                kept_[g] ^= 1;
                for (int r = 0; r <= p; ++r) {
                    uint32_t rb = inv[r][g] / uint32_t(bsize[r]);
                    diff[r][rb] ^= 1;
                    if (diff[r][rb]) pending.insert({r, rb});
                    else pending.erase({r, rb});
                }
            }
        }
        return true;
    }

    bool digest_stage() {
        DialogueMessage m;
        if (!fetch(MsgType::KeyDigest, m, false)) return false;
        if (!bug_digest() && m.payload.size() != 8) return stop(VerifierAbort::DigestLength);
        const uint64_t own = key_digest64(kept_);
        const size_t cmp = std::min<size_t>(m.payload.size(), 8);
        for (size_t i = 0; i < cmp; ++i)
            if (m.payload[i] != uint8_t(own >> (8 * i))) return stop(VerifierAbort::DigestMismatch);
        return true;
    }

    const BobSessionContext& ctx_;
    const std::vector<std::vector<uint8_t>>& dlg_;
    const PostProcessingOptions& opt_;
    const uint64_t budget_;

    size_t pos_ = 0;
    std::vector<uint32_t> sift_rounds_;
    Bits bob_sifted_;
    Bits kept_;
    double qber_ = 0.0;
    VerifierResult res_;
};

} // namespace

VerifierResult run_postprocessing_verifier(const BobSessionContext& ctx,
                                           const std::vector<std::vector<uint8_t>>& dialogue,
                                           const PostProcessingOptions& options,
                                           uint64_t step_budget) {
    Verifier v(ctx, dialogue, options, step_budget);
    return v.run();
}

} // namespace qrt
