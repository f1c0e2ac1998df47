#pragma once

#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include "qrir/crc32.hpp"
#include "qrir/messages.hpp"

namespace qrir {

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ProtocolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ============================================================================
// Wire format: "QRIR" | version | msg_type | frame_id | payload_len |
//              payload | crc32(header+payload), all integers little-endian.
// ============================================================================

inline constexpr char kWireMagic[4] = {'Q', 'R', 'I', 'R'};
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kWireHeaderLen = 14;
inline constexpr std::uint32_t kMaxPayload = 1u << 24;

namespace wire {

inline void put_u16(std::vector<std::uint8_t>& b, std::uint16_t x) {
    b.push_back(static_cast<std::uint8_t>(x));
    b.push_back(static_cast<std::uint8_t>(x >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t x) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}
inline void put_u64(std::vector<std::uint8_t>& b, std::uint64_t x) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
}
inline void put_bitvec(std::vector<std::uint8_t>& b, const Bits& bits) {
    put_u32(b, static_cast<std::uint32_t>(bits.size()));
    auto packed = pack_bits(bits);
    b.insert(b.end(), packed.begin(), packed.end());
}

struct Reader {
    const std::uint8_t* p;
    std::size_t len, off = 0;
    void need(std::size_t n) const {
        if (off + n > len) throw ProtocolError("message payload truncated");
    }
    std::uint8_t u8() {
        need(1);
        return p[off++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t x = static_cast<std::uint16_t>(p[off] | (p[off + 1] << 8));
        off += 2;
        return x;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(p[off + i]) << (8 * i);
        off += 4;
        return x;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(p[off + i]) << (8 * i);
        off += 8;
        return x;
    }
    Bits bitvec() {
        std::uint32_t nbits = u32();
        std::size_t nbytes = (nbits + 7) / 8;
        need(nbytes);
        Bits out = unpack_bits(p + off, nbits);
        off += nbytes;
        return out;
    }
    Bits raw_bits(std::size_t nbits) {
        std::size_t nbytes = (nbits + 7) / 8;
        need(nbytes);
        Bits out = unpack_bits(p + off, nbits);
        off += nbytes;
        return out;
    }
    void done() const {
        if (off != len) throw ProtocolError("trailing bytes in message payload");
    }
};

inline void encode_positions_values(std::vector<std::uint8_t>& b,
                                    const std::vector<std::uint32_t>& positions,
                                    const Bits& values) {
    if (positions.size() != values.size())
        throw std::invalid_argument("encode: positions/values length mismatch");
    put_u32(b, static_cast<std::uint32_t>(positions.size()));
    for (auto p : positions) put_u32(b, p);
    auto packed = pack_bits(values);
    b.insert(b.end(), packed.begin(), packed.end());
}

inline std::pair<std::vector<std::uint32_t>, Bits> decode_positions_values(Reader& r) {
    std::uint32_t count = r.u32();
    if (count > kMaxPayload / 4) throw ProtocolError("position count implausible");
    std::vector<std::uint32_t> positions(count);
    for (auto& p : positions) p = r.u32();
    Bits values = r.raw_bits(count);
    return {std::move(positions), std::move(values)};
}

}  // namespace wire

inline std::vector<std::uint8_t> encode_payload(const RoundMessage& msg) {
    using namespace wire;
    std::vector<std::uint8_t> b;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, CodeSelectMsg>) {
                put_u16(b, m.rate_x100);
                put_u32(b, m.punctured);
                put_u32(b, m.shortened);
                std::uint64_t q;
                double qh = m.qber_hat;
                std::memcpy(&q, &qh, 8);
                put_u64(b, q);
            } else if constexpr (std::is_same_v<T, SyndromeMsg>) {
                put_u16(b, m.rate_x100);
                put_u32(b, m.punctured);
                put_u32(b, m.shortened);
                put_u64(b, m.seed_commitment);
                put_bitvec(b, m.syndrome);
            } else if constexpr (std::is_same_v<T, FailReport>) {
                put_u16(b, 0);  // reserved
                put_u32(b, m.k);
            } else if constexpr (std::is_same_v<T, DisclosureMsg> ||
                                 std::is_same_v<T, SymmetricLlrMsg>) {
                encode_positions_values(b, m.positions, m.values);
            } else if constexpr (std::is_same_v<T, VerifyMsg>) {
                put_u64(b, m.hash);
            } else if constexpr (std::is_same_v<T, VerifyResult>) {
                b.push_back(m.ok ? 1 : 0);
            } else if constexpr (std::is_same_v<T, DecoyMsg>) {
                put_bitvec(b, m.decoy_bits);
            } else if constexpr (std::is_same_v<T, AbortMsg>) {
                b.push_back(static_cast<std::uint8_t>(m.reason));
            }
        },
        msg);
    return b;
}

inline std::vector<std::uint8_t> encode(const RoundMessage& msg) {
    auto payload = encode_payload(msg);
    if (payload.size() > kMaxPayload) throw std::length_error("message payload exceeds 2^24 bytes");
    std::vector<std::uint8_t> out;
    out.reserve(kWireHeaderLen + payload.size() + 4);
    out.insert(out.end(), kWireMagic, kWireMagic + 4);
    out.push_back(kWireVersion);
    out.push_back(static_cast<std::uint8_t>(msg_type_of(msg)));
    wire::put_u32(out, frame_id_of(msg));
    wire::put_u32(out, static_cast<std::uint32_t>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
    wire::put_u32(out, crc32(out.data(), out.size()));
    return out;
}

struct DecodeOutcome {
    enum class Status { ok, need_more, error } status = Status::need_more;
    RoundMessage msg;
    std::size_t consumed = 0;
    std::string detail;
};

inline RoundMessage decode_payload(MsgType type, std::uint32_t frame_id,
                                   const std::uint8_t* payload, std::size_t len) {
    using namespace wire;
    Reader r{payload, len};
    RoundMessage out;
    switch (type) {
        case MsgType::code_select: {
            CodeSelectMsg m;
            m.frame_id = frame_id;
            m.rate_x100 = r.u16();
            m.punctured = r.u32();
            m.shortened = r.u32();
            std::uint64_t q = r.u64();
            std::memcpy(&m.qber_hat, &q, 8);
            out = std::move(m);
            break;
        }
        case MsgType::syndrome: {
            SyndromeMsg m;
            m.frame_id = frame_id;
            m.rate_x100 = r.u16();
            m.punctured = r.u32();
            m.shortened = r.u32();
            m.seed_commitment = r.u64();
            m.syndrome = r.bitvec();
            out = std::move(m);
            break;
        }
        case MsgType::fail_report: {
            FailReport m;
            m.frame_id = frame_id;
            r.u16();  // reserved
            m.k = r.u32();
            out = m;
            break;
        }
        case MsgType::disclosure: {
            DisclosureMsg m;
            m.frame_id = frame_id;
            std::tie(m.positions, m.values) = decode_positions_values(r);
            out = std::move(m);
            break;
        }
        case MsgType::symmetric_llr: {
            SymmetricLlrMsg m;
            m.frame_id = frame_id;
            std::tie(m.positions, m.values) = decode_positions_values(r);
            out = std::move(m);
            break;
        }
        case MsgType::verify: {
            VerifyMsg m;
            m.frame_id = frame_id;
            m.hash = r.u64();
            out = m;
            break;
        }
        case MsgType::verify_result: {
            VerifyResult m;
            m.frame_id = frame_id;
            m.ok = r.u8() != 0;
            out = m;
            break;
        }
        case MsgType::decoy: {
            DecoyMsg m;
            m.block_id = frame_id;
            m.decoy_bits = r.bitvec();
            out = std::move(m);
            break;
        }
        case MsgType::abort: {
            AbortMsg m;
            m.frame_id = frame_id;
            m.reason = static_cast<AbortReason>(r.u8());
            out = m;
            break;
        }
        default:
            throw ProtocolError("unknown message type " + std::to_string(static_cast<int>(type)));
    }
    r.done();
    return out;
}

// Attempts to decode one complete wire frame from the front of buf.
inline DecodeOutcome decode(const std::uint8_t* buf, std::size_t len) {
    DecodeOutcome out;
    if (len < kWireHeaderLen) return out;  // need_more
    if (std::memcmp(buf, kWireMagic, 4) != 0) {
        out.status = DecodeOutcome::Status::error;
        out.detail = "bad magic";
        return out;
    }
    if (buf[4] != kWireVersion) {
        out.status = DecodeOutcome::Status::error;
        out.detail = "unsupported version";
        return out;
    }
    std::uint32_t frame_id = 0, payload_len = 0;
    for (int i = 0; i < 4; ++i) frame_id |= static_cast<std::uint32_t>(buf[6 + i]) << (8 * i);
    for (int i = 0; i < 4; ++i) payload_len |= static_cast<std::uint32_t>(buf[10 + i]) << (8 * i);
    if (payload_len > kMaxPayload) {
        out.status = DecodeOutcome::Status::error;
        out.detail = "payload length implausible";
        return out;
    }
    const std::size_t total = kWireHeaderLen + payload_len + 4;
    if (len < total) return out;  // need_more
    std::uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
        stored_crc |= static_cast<std::uint32_t>(buf[kWireHeaderLen + payload_len + i]) << (8 * i);
    if (crc32(buf, kWireHeaderLen + payload_len) != stored_crc) {
        out.status = DecodeOutcome::Status::error;
        out.detail = "crc mismatch";
        return out;
    }
    try {
        out.msg = decode_payload(static_cast<MsgType>(buf[5]), frame_id, buf + kWireHeaderLen,
                                 payload_len);
    } catch (const ProtocolError& e) {
        out.status = DecodeOutcome::Status::error;
        out.detail = e.what();
        return out;
    }
    out.status = DecodeOutcome::Status::ok;
    out.consumed = total;
    return out;
}

inline DecodeOutcome decode(const std::vector<std::uint8_t>& buf) {
    return decode(buf.data(), buf.size());
}

// ============================================================================
// Link abstraction
// ============================================================================

class Link {
  public:
    virtual ~Link() = default;
    virtual void send(const RoundMessage& msg) = 0;
    virtual RoundMessage recv() = 0;  // blocks; throws TransportError on close
    virtual void close() {}           // unblocks the peer; further use throws
};

namespace detail {
struct MsgQueue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<RoundMessage> q;
    bool closed = false;

    void push(RoundMessage m) {
        {
            std::lock_guard lk(mu);
            if (closed) throw TransportError("link closed");
            q.push_back(std::move(m));
        }
        cv.notify_one();
    }
    RoundMessage pop() {
        std::unique_lock lk(mu);
        cv.wait(lk, [&] { return !q.empty() || closed; });
        if (q.empty()) throw TransportError("link closed");
        RoundMessage m = std::move(q.front());
        q.pop_front();
        return m;
    }
    void close() {
        {
            std::lock_guard lk(mu);
            closed = true;
        }
        cv.notify_all();
    }
};
}  // namespace detail

// In-memory duplex link; messages pass through the wire codec so the test
// link exercises the same encoding as TCP.
class MemoryLink : public Link {
  public:
    MemoryLink(std::shared_ptr<detail::MsgQueue> out, std::shared_ptr<detail::MsgQueue> in)
        : out_(std::move(out)), in_(std::move(in)) {}
    ~MemoryLink() override { close(); }

    void close() override {
        out_->close();
        in_->close();
    }

    void send(const RoundMessage& msg) override {
        auto bytes = encode(msg);
        auto decoded = decode(bytes);
        if (decoded.status != DecodeOutcome::Status::ok)
            throw ProtocolError("self-decode failed: " + decoded.detail);
        out_->push(std::move(decoded.msg));
    }
    RoundMessage recv() override { return in_->pop(); }

  private:
    std::shared_ptr<detail::MsgQueue> out_, in_;
};

inline std::pair<std::unique_ptr<Link>, std::unique_ptr<Link>> make_memory_link_pair() {
    auto a2b = std::make_shared<detail::MsgQueue>();
    auto b2a = std::make_shared<detail::MsgQueue>();
    return {std::make_unique<MemoryLink>(a2b, b2a), std::make_unique<MemoryLink>(b2a, a2b)};
}

// ============================================================================
// TCP binding
// ============================================================================

class TcpLink : public Link {
  public:
    explicit TcpLink(int fd) : fd_(fd) {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    }
    ~TcpLink() override {
        if (fd_ >= 0) ::close(fd_);
    }
    TcpLink(const TcpLink&) = delete;
    TcpLink& operator=(const TcpLink&) = delete;

    void close() override {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

    void send(const RoundMessage& msg) override {
        auto bytes = encode(msg);
        std::size_t off = 0;
        while (off < bytes.size()) {
            ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
            if (n <= 0) throw TransportError("send failed (peer gone?)");
            off += static_cast<std::size_t>(n);
        }
    }

    RoundMessage recv() override {
        for (;;) {
            auto outcome = decode(buf_.data(), buf_.size());
            if (outcome.status == DecodeOutcome::Status::ok) {
                buf_.erase(buf_.begin(),
                           buf_.begin() + static_cast<std::ptrdiff_t>(outcome.consumed));
                return outcome.msg;
            }
            if (outcome.status == DecodeOutcome::Status::error)
                throw ProtocolError("wire decode: " + outcome.detail);
            std::uint8_t chunk[65536];
            ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
            if (n <= 0) throw TransportError("connection closed");
            buf_.insert(buf_.end(), chunk, chunk + n);
        }
    }

  private:
    int fd_;
    std::vector<std::uint8_t> buf_;
};

inline std::unique_ptr<Link> tcp_listen_accept(const std::string& host, std::uint16_t port) {
    int srv = ::socket(AF_INET, SOCK_STREAM, 0);
    if (srv < 0) throw TransportError("socket() failed");
    int one = 1;
    ::setsockopt(srv, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(srv);
        throw TransportError("bad listen address: " + host);
    }
    if (::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(srv);
        throw TransportError("bind failed on " + host + ":" + std::to_string(port));
    }
    if (::listen(srv, 1) != 0) {
        ::close(srv);
        throw TransportError("listen failed");
    }
    int fd = ::accept(srv, nullptr, nullptr);
    ::close(srv);
    if (fd < 0) throw TransportError("accept failed");
    return std::make_unique<TcpLink>(fd);
}

inline std::unique_ptr<Link> tcp_connect(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
        throw TransportError("cannot resolve " + host);
    int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd < 0) {
        ::freeaddrinfo(res);
        throw TransportError("socket() failed");
    }
    int rc = ::connect(fd, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0) {
        ::close(fd);
        throw TransportError("connect failed to " + host + ":" + std::to_string(port));
    }
    return std::make_unique<TcpLink>(fd);
}

}  // namespace qrir
