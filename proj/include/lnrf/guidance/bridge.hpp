#pragma once

// Client side of the external denoiser/decoder wire protocol.
//
// Frame: "LNRF" | u16 version | u8 msg_type | u32 request_id | u64 length | payload
// All integers little-endian, tensors are channel-major f32.
//
//   handshake  (0)  request: empty; response: u32 C, u32 H, u32 W, u32 timesteps
//   denoise    (1)  u32 t, u32 prompt_len, prompt (UTF-8), C*H*W f32
//   denoise    (2)  u32 t, u32 C, u32 H, u32 W, C*H*W f32
//   decode     (3)  C*H*W f32
//   decode     (4)  u32 0, u32 3, u32 H, u32 W, 3*H*W f32 in [0, 1]
//   error    (255)  UTF-8 message

#include <array>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include "lnrf/guidance/denoiser.hpp"

namespace lnrf::bridge {

inline constexpr std::array<std::uint8_t, 4> kMagic = {'L', 'N', 'R', 'F'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 19;
inline constexpr std::uint64_t kMaxPayload = 1ull << 32;

enum class MsgType : std::uint8_t {
  handshake = 0,
  denoise_request = 1,
  denoise_response = 2,
  decode_request = 3,
  decode_response = 4,
  error = 255,
};

struct Frame {
  std::uint16_t version = kVersion;
  MsgType type = MsgType::handshake;
  std::uint32_t request_id = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const Frame&) const = default;
};

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<std::uint8_t>(std::uint64_t(v) >> (8 * i)));
  }
  void put_f32(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put(u);
  }
  void put_bytes(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
  void put_string(std::string_view s) {
    bytes_.insert(bytes_.end(), reinterpret_cast<const std::uint8_t*>(s.data()),
                  reinterpret_cast<const std::uint8_t*>(s.data()) + s.size());
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : bytes_(b) {}
  template <class T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  float get_f32() {
    const std::uint32_t u = get<std::uint32_t>();
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("frame payload truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> encode_header(const Frame& f) {
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put(f.version);
  w.put(static_cast<std::uint8_t>(f.type));
  w.put(f.request_id);
  w.put(static_cast<std::uint64_t>(f.payload.size()));
  return std::move(w.bytes());
}

inline std::vector<std::uint8_t> encode_frame(const Frame& f) {
  auto out = encode_header(f);
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

struct Header {
  std::uint16_t version = 0;
  MsgType type = MsgType::handshake;
  std::uint32_t request_id = 0;
  std::uint64_t length = 0;
  bool magic_ok = false;
};

inline Header decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) throw ParseError("frame header truncated");
  Header h;
  h.magic_ok = std::equal(kMagic.begin(), kMagic.end(), bytes.begin());
  ByteReader r(bytes.subspan(4, kHeaderSize - 4));
  h.version = r.get<std::uint16_t>();
  h.type = static_cast<MsgType>(r.get<std::uint8_t>());
  h.request_id = r.get<std::uint32_t>();
  h.length = r.get<std::uint64_t>();
  return h;
}

// Decodes one complete frame; the byte count must match the declared length.
inline Frame decode_frame(std::span<const std::uint8_t> bytes) {
  const Header h = decode_header(bytes);
  if (!h.magic_ok) throw ParseError("bad frame magic");
  if (h.length != bytes.size() - kHeaderSize)
    throw ParseError("frame length " + std::to_string(h.length) + " does not match " +
                     std::to_string(bytes.size() - kHeaderSize) + " payload bytes");
  Frame f;
  f.version = h.version;
  f.type = h.type;
  f.request_id = h.request_id;
  f.payload.assign(bytes.begin() + kHeaderSize, bytes.end());
  return f;
}

inline void put_tensor(ByteWriter& w, const Image& img) {
  for (double v : img.data) w.put_f32(static_cast<float>(v));
}

inline Image get_tensor(ByteReader& r, int c, int h, int w) {
  Image img(c, h, w);
  if (r.remaining() < img.size() * 4) throw ParseError("tensor payload truncated");
  for (double& v : img.data) v = r.get_f32();
  return img;
}

inline std::vector<std::uint8_t> denoise_request_payload(int t, std::string_view prompt, const Image& x_t) {
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(t));
  w.put(static_cast<std::uint32_t>(prompt.size()));
  w.put_string(prompt);
  put_tensor(w, x_t);
  return std::move(w.bytes());
}

// Response tensors: u32 tag (timestep or 0), u32 C, u32 H, u32 W, f32 data.
inline std::vector<std::uint8_t> tensor_response_payload(std::uint32_t tag, const Image& img) {
  ByteWriter w;
  w.put(tag);
  w.put(static_cast<std::uint32_t>(img.channels));
  w.put(static_cast<std::uint32_t>(img.height));
  w.put(static_cast<std::uint32_t>(img.width));
  put_tensor(w, img);
  return std::move(w.bytes());
}

inline Image parse_tensor_response(std::span<const std::uint8_t> payload, std::uint32_t* tag = nullptr) {
  ByteReader r(payload);
  const auto t = r.get<std::uint32_t>();
  const auto c = r.get<std::uint32_t>(), h = r.get<std::uint32_t>(), w = r.get<std::uint32_t>();
  if (std::uint64_t(c) * h * w * 4 != r.remaining()) throw ParseError("tensor response size mismatch");
  if (tag) *tag = t;
  return get_tensor(r, int(c), int(h), int(w));
}

struct Handshake {
  int channels = 0;
  int height = 0;
  int width = 0;
  int timesteps = 0;
};

inline std::vector<std::uint8_t> handshake_payload(const Handshake& h) {
  ByteWriter w;
  w.put(std::uint32_t(h.channels));
  w.put(std::uint32_t(h.height));
  w.put(std::uint32_t(h.width));
  w.put(std::uint32_t(h.timesteps));
  return std::move(w.bytes());
}

inline Handshake parse_handshake(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  Handshake h;
  h.channels = int(r.get<std::uint32_t>());
  h.height = int(r.get<std::uint32_t>());
  h.width = int(r.get<std::uint32_t>());
  h.timesteps = int(r.get<std::uint32_t>());
  return h;
}

struct Endpoint {
  std::string host;
  int port = 0;
};

inline Endpoint parse_endpoint(std::string_view s) {
  const auto colon = s.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == s.size())
    throw ConfigError("endpoint must be host:port, got '" + std::string(s) + "'");
  Endpoint e{std::string(s.substr(0, colon)), 0};
  try {
    e.port = std::stoi(std::string(s.substr(colon + 1)));
  } catch (const std::exception&) {
    throw ConfigError("invalid port in endpoint '" + std::string(s) + "'");
  }
  if (e.port <= 0 || e.port > 65535) throw ConfigError("invalid port in endpoint '" + std::string(s) + "'");
  return e;
}

// Explicit endpoint if non-empty, else the LNRF_BRIDGE environment variable.
inline std::string resolve_endpoint(const std::string& explicit_endpoint) {
  if (!explicit_endpoint.empty()) return explicit_endpoint;
  if (const char* env = std::getenv("LNRF_BRIDGE")) return env;
  return {};
}

// Blocking TCP connection carrying one in-flight request at a time.
class Connection {
 public:
  Connection() = default;
  explicit Connection(int fd) : fd_(fd) {}
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;
  Connection(Connection&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Connection& operator=(Connection&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Connection() { close(); }

  static Connection open(const Endpoint& ep) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(ep.host.c_str(), std::to_string(ep.port).c_str(), &hints, &res) != 0 || !res)
      throw BridgeError("cannot resolve bridge host '" + ep.host + "'");
    int fd = -1;
    for (addrinfo* a = res; a; a = a->ai_next) {
      fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
      ::close(fd);
      fd = -1;
    }
    freeaddrinfo(res);
    if (fd < 0) throw BridgeError("cannot connect to bridge at " + ep.host + ":" + std::to_string(ep.port));
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return Connection(fd);
  }

  bool is_open() const { return fd_ >= 0; }

  void send_frame(const Frame& f) {
    const auto head = encode_header(f);
    send_all(head.data(), head.size());
    send_all(f.payload.data(), f.payload.size());
  }

  void send_raw(std::span<const std::uint8_t> bytes) { send_all(bytes.data(), bytes.size()); }

  // Reads one frame. Throws ParseError on bad magic (after consuming it).
  Frame receive_frame() {
    std::array<std::uint8_t, kHeaderSize> head{};
    recv_all(head.data(), head.size());
    const Header h = decode_header(head);
    if (h.length > kMaxPayload) throw ParseError("frame payload too large");
    Frame f;
    f.version = h.version;
    f.type = h.type;
    f.request_id = h.request_id;
    f.payload.resize(h.length);
    recv_all(f.payload.data(), f.payload.size());
    if (!h.magic_ok) throw ParseError("bad frame magic");
    return f;
  }

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  void send_all(const std::uint8_t* p, std::size_t n) {
    while (n > 0) {
      const ssize_t k = ::send(fd_, p, n, MSG_NOSIGNAL);
      if (k <= 0) throw BridgeError("bridge connection lost while sending");
      p += k;
      n -= std::size_t(k);
    }
  }
  void recv_all(std::uint8_t* p, std::size_t n) {
    while (n > 0) {
      const ssize_t k = ::recv(fd_, p, n, 0);
      if (k <= 0) throw BridgeError("bridge connection lost while receiving");
      p += k;
      n -= std::size_t(k);
    }
  }

  int fd_ = -1;
};

class Client {
 public:
  explicit Client(const Endpoint& ep) : conn_(Connection::open(ep)) {
    const Frame resp = roundtrip(MsgType::handshake, {}, MsgType::handshake);
    info_ = parse_handshake(resp.payload);
  }

  const Handshake& info() const { return info_; }

  Image denoise(const Image& x_t, int t, std::string_view prompt) {
    const Frame resp = roundtrip(MsgType::denoise_request, denoise_request_payload(t, prompt, x_t),
                                 MsgType::denoise_response);
    return parse_tensor_response(resp.payload);
  }

  Image decode(const Image& latent) {
    ByteWriter w;
    put_tensor(w, latent);
    const Frame resp = roundtrip(MsgType::decode_request, std::move(w.bytes()), MsgType::decode_response);
    return parse_tensor_response(resp.payload);
  }

  std::uint32_t last_request_id() const { return next_id_ - 1; }

 private:
  Frame roundtrip(MsgType type, std::vector<std::uint8_t> payload, MsgType expected) {
    Frame req{kVersion, type, next_id_++, std::move(payload)};
    conn_.send_frame(req);
    Frame resp;
    try {
      resp = conn_.receive_frame();
    } catch (const ParseError& e) {
      throw BridgeError(std::string("malformed response: ") + e.what(), req.request_id);
    }
    if (resp.type == MsgType::error)
      throw BridgeError("bridge error for request " + std::to_string(req.request_id) + ": " +
                            std::string(resp.payload.begin(), resp.payload.end()),
                        req.request_id);
    if (resp.request_id != req.request_id)
      throw BridgeError("response id " + std::to_string(resp.request_id) + " does not match request " +
                            std::to_string(req.request_id),
                        req.request_id);
    if (resp.type != expected)
      throw BridgeError("unexpected response type " + std::to_string(int(resp.type)), req.request_id);
    return resp;
  }

  Connection conn_;
  Handshake info_;
  std::uint32_t next_id_ = 1;
};

}  // namespace lnrf::bridge

namespace lnrf {

// Maps a 4-channel latent to an RGB image in [0, 1].
class LatentDecoder {
 public:
  virtual ~LatentDecoder() = default;
  virtual Image decode(const Image& latent) = 0;
};

// Denoiser and decoder backed by the external bridge process.
class ExternalDenoiser final : public Denoiser, public LatentDecoder {
 public:
  explicit ExternalDenoiser(const std::string& endpoint) : client_(bridge::parse_endpoint(endpoint)) {}

  const bridge::Handshake& info() const { return client_.info(); }

  Image predict_eps(const Image& x_t, int t, std::string_view prompt) override {
    return client_.denoise(x_t, t, prompt);
  }
  Image decode(const Image& latent) override { return client_.decode(latent); }

 private:
  bridge::Client client_;
};

}  // namespace lnrf
