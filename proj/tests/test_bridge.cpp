#include <random>

#include <gtest/gtest.h>

#include "stub_server.hpp"
#include "support.hpp"

using namespace lnrf;
using namespace lnrf::bridge;

TEST(Framing, RandomFramesRoundTrip) {
  std::mt19937_64 rng(1);
  const MsgType types[] = {MsgType::handshake,      MsgType::denoise_request, MsgType::denoise_response,
                           MsgType::decode_request, MsgType::decode_response, MsgType::error};
  for (int i = 0; i < 1000; ++i) {
    Frame f;
    f.version = static_cast<std::uint16_t>(rng());
    f.type = types[rng() % 6];
    f.request_id = static_cast<std::uint32_t>(rng());
    f.payload.resize(rng() % 300);
    for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng());
    const auto bytes = encode_frame(f);
    ASSERT_EQ(bytes.size(), kHeaderSize + f.payload.size());
    ASSERT_EQ(decode_frame(bytes), f);
  }
}

TEST(Framing, LittleEndianLayout) {
  const Frame f{0x0102, MsgType::decode_request, 0x0a0b0c0d, {7, 8}};
  const auto b = encode_frame(f);
  const std::vector<std::uint8_t> expect = {'L', 'N', 'R', 'F', 0x02, 0x01, 3,    0x0d, 0x0c, 0x0b, 0x0a,
                                            2,   0,   0,   0,   0,    0,    0, 0, 7,    8};
  EXPECT_EQ(b, expect);
}

TEST(Framing, MalformedFramesRejected) {
  auto bytes = encode_frame(Frame{kVersion, MsgType::handshake, 1, {1, 2, 3}});
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_frame(bad_magic), ParseError);
  auto short_payload = bytes;
  short_payload.pop_back();
  EXPECT_THROW(decode_frame(short_payload), ParseError);
  EXPECT_THROW(decode_frame(std::span(bytes).first(10)), ParseError);
}

TEST(Payloads, DenoiseResponseSize) {
  const auto p = tensor_response_payload(5, Image(4, 64, 64));
  EXPECT_EQ(p.size(), 16u + 4u * 64 * 64 * 4);
  std::uint32_t tag = 0;
  const Image back = parse_tensor_response(p, &tag);
  EXPECT_EQ(tag, 5u);
  EXPECT_EQ(back.channels, 4);
  auto truncated = p;
  truncated.resize(truncated.size() - 4);
  EXPECT_THROW(parse_tensor_response(truncated), ParseError);
}

TEST(Payloads, TensorsTravelAsF32) {
  std::mt19937_64 rng(2);
  const Image x = lnrf::testing::random_image(4, 8, 8, rng);
  const auto p = denoise_request_payload(17, "a red fox", x);
  ByteReader r(p);
  EXPECT_EQ(r.get<std::uint32_t>(), 17u);
  const auto n = r.get<std::uint32_t>();
  EXPECT_EQ(r.get_string(n), "a red fox");
  const Image y = get_tensor(r, 4, 8, 8);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.data[i], round_f32(x.data[i]));
  EXPECT_EQ(r.remaining(), 0u);
}

TEST(Endpoint, Parsing) {
  const Endpoint e = parse_endpoint("127.0.0.1:7861");
  EXPECT_EQ(e.host, "127.0.0.1");
  EXPECT_EQ(e.port, 7861);
  EXPECT_EQ(parse_endpoint("[::1]:80").host, "[::1]");
  EXPECT_THROW(parse_endpoint("localhost"), ConfigError);
  EXPECT_THROW(parse_endpoint("localhost:"), ConfigError);
  EXPECT_THROW(parse_endpoint("localhost:99999"), ConfigError);
  EXPECT_THROW(parse_endpoint("localhost:http"), ConfigError);
}

TEST(Endpoint, EnvironmentFallback) {
  ::setenv("LNRF_BRIDGE", "10.0.0.1:1234", 1);
  EXPECT_EQ(resolve_endpoint(""), "10.0.0.1:1234");
  EXPECT_EQ(resolve_endpoint("a:1"), "a:1");
  ::unsetenv("LNRF_BRIDGE");
  EXPECT_EQ(resolve_endpoint(""), "");
}

TEST(Client, ConnectionRefused) {
  // Grab a free port, then close it so nothing listens there.
  std::string endpoint;
  {
    lnrf::testing::StubServer s;
    endpoint = s.endpoint();
  }
  EXPECT_THROW(ExternalDenoiser{endpoint}, BridgeError);
}

TEST(Client, HandshakeAdvertisesLatentShape) {
  lnrf::testing::StubServer stub;
  ExternalDenoiser den(stub.endpoint());
  EXPECT_EQ(den.info().channels, 4);
  EXPECT_EQ(den.info().height, 64);
  EXPECT_EQ(den.info().width, 64);
  EXPECT_EQ(den.info().timesteps, 1000);
}

TEST(Client, ZeroEpsDrivesSdsToMinusWeightedNoise) {
  lnrf::testing::StubServer stub;
  ExternalDenoiser den(stub.endpoint());
  const DiffusionSchedule sched = default_schedule();
  std::mt19937_64 rng(3);
  const Image x = lnrf::testing::random_image(4, 64, 64, rng);
  for (int i = 0; i < 5; ++i) {
    const SdsSample s = sds_gradient(den, x, "prompt", sched, rng);
    const double w = sched.weight(s.t);
    for (std::size_t j = 0; j < x.size(); ++j) ASSERT_NEAR(s.grad.data[j], -w * s.eps.data[j], 1e-6);
  }
  EXPECT_EQ(stub.requests(), 6);  // handshake + 5 denoise
}

TEST(Client, DecodeOfZeroLatentIsMidGray) {
  lnrf::testing::StubServer stub;
  ExternalDenoiser den(stub.endpoint());
  const Image rgb = den.decode(Image(4, 64, 64));
  ASSERT_EQ(rgb.channels, 3);
  ASSERT_EQ(rgb.height, 512);
  for (double v : rgb.data) ASSERT_EQ(v, 0.5);
}

TEST(Client, ServerErrorCarriesRequestId) {
  lnrf::testing::StubServer stub;
  ExternalDenoiser den(stub.endpoint());
  try {
    den.predict_eps(Image(4, 32, 32), 10, "");  // stub expects 64x64
    FAIL() << "expected BridgeError";
  } catch (const BridgeError& e) {
    EXPECT_EQ(e.request_id(), 2u);
    EXPECT_NE(std::string(e.what()).find("request 2"), std::string::npos) << e.what();
  }
  // The connection survives the error.
  EXPECT_NO_THROW(den.predict_eps(Image(4, 64, 64), 10, ""));
}

TEST(Client, MalformedMagicGetsErrorFrameAndConnectionStaysUp) {
  lnrf::testing::StubServer stub;
  Connection conn = Connection::open(parse_endpoint(stub.endpoint()));
  auto bytes = encode_frame(Frame{kVersion, MsgType::handshake, 9, {}});
  bytes[1] = '?';
  conn.send_raw(bytes);
  const Frame err = conn.receive_frame();
  EXPECT_EQ(err.type, MsgType::error);
  EXPECT_NE(std::string(err.payload.begin(), err.payload.end()).find("magic"), std::string::npos);
  conn.send_frame(Frame{kVersion, MsgType::handshake, 10, {}});
  const Frame ok = conn.receive_frame();
  EXPECT_EQ(ok.type, MsgType::handshake);
  EXPECT_EQ(ok.request_id, 10u);
  EXPECT_EQ(parse_handshake(ok.payload).channels, 4);
}
