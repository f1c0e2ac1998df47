#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "qrir/bits.hpp"

namespace qrir {

enum class MsgType : std::uint8_t {
    syndrome = 1,
    fail_report = 2,
    disclosure = 3,
    symmetric_llr = 4,
    verify = 5,
    verify_result = 6,
    decoy = 7,
    abort = 8,
    code_select = 9,
};

// Bob -> Alice at frame start: the receiver owns the estimator, so the
// {R, p, s} choice travels to Alice before she can emit a syndrome.
struct CodeSelectMsg {
    std::uint32_t frame_id = 0;
    std::uint16_t rate_x100 = 0;
    std::uint32_t punctured = 0;
    std::uint32_t shortened = 0;
    double qber_hat = 0.0;
};

struct SyndromeMsg {
    std::uint32_t frame_id = 0;
    std::uint16_t rate_x100 = 0;
    std::uint32_t punctured = 0;
    std::uint32_t shortened = 0;
    std::uint64_t seed_commitment = 0;  // digest over the per-frame seed streams
    Bits syndrome;
};

struct FailReport {
    std::uint32_t frame_id = 0;
    std::uint32_t k = 0;  // failed round index (0 = basic round)
};

struct DisclosureMsg {
    std::uint32_t frame_id = 0;
    std::vector<std::uint32_t> positions;  // sorted ascending
    Bits values;
};

struct SymmetricLlrMsg {
    std::uint32_t frame_id = 0;
    std::vector<std::uint32_t> positions;  // sorted ascending
    Bits values;
};

struct VerifyMsg {
    std::uint32_t frame_id = 0;
    std::uint64_t hash = 0;
};

struct VerifyResult {
    std::uint32_t frame_id = 0;
    bool ok = false;
};

struct DecoyMsg {
    std::uint32_t block_id = 0;
    Bits decoy_bits;  // concatenated per-frame decoy strings
};

enum class AbortReason : std::uint8_t {
    time_budget = 1,
    round_limit = 2,
    disclosure_exhausted = 3,
    protocol_error = 4,
};

struct AbortMsg {
    std::uint32_t frame_id = 0;
    AbortReason reason = AbortReason::protocol_error;
};

using RoundMessage = std::variant<CodeSelectMsg, SyndromeMsg, FailReport, DisclosureMsg,
                                  SymmetricLlrMsg, VerifyMsg, VerifyResult, DecoyMsg, AbortMsg>;

inline MsgType msg_type_of(const RoundMessage& m) {
    struct V {
        MsgType operator()(const CodeSelectMsg&) const { return MsgType::code_select; }
        MsgType operator()(const SyndromeMsg&) const { return MsgType::syndrome; }
        MsgType operator()(const FailReport&) const { return MsgType::fail_report; }
        MsgType operator()(const DisclosureMsg&) const { return MsgType::disclosure; }
        MsgType operator()(const SymmetricLlrMsg&) const { return MsgType::symmetric_llr; }
        MsgType operator()(const VerifyMsg&) const { return MsgType::verify; }
        MsgType operator()(const VerifyResult&) const { return MsgType::verify_result; }
        MsgType operator()(const DecoyMsg&) const { return MsgType::decoy; }
        MsgType operator()(const AbortMsg&) const { return MsgType::abort; }
    };
    return std::visit(V{}, m);
}

inline std::uint32_t frame_id_of(const RoundMessage& m) {
    return std::visit([](const auto& msg) -> std::uint32_t {
        if constexpr (requires { msg.frame_id; })
            return msg.frame_id;
        else
            return msg.block_id;
    }, m);
}

}  // namespace qrir
