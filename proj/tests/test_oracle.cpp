#include <algorithm>
#include <cmath>
#include <random>
#include <thread>

#include "astfocus/oracle.hpp"
#include "doctest.h"
#include "httplib.h"
#include "support.hpp"

using namespace astfocus;
using astfocus::testing::error_code;
using astfocus::testing::OracleServer;

namespace {

// Templates 0.5 + 0.1 e_c on a 6-value video; the all-0.5 video is
// equidistant from every one of them.
TemplateOracle unit_templates(double beta) {
  const VideoShape shape{1, 1, 2};
  std::vector<Video> templates;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> data(shape.size(), 0.5);
    data[static_cast<std::size_t>(c)] += 0.1;
    templates.emplace_back(shape, std::move(data));
  }
  return TemplateOracle(std::move(templates), beta);
}

TemplateOracle toy_oracle(double beta = 0.05) {
  const VideoShape shape{4, 6, 6};
  std::vector<Video> templates;
  for (int c = 0; c < 5; ++c) templates.push_back(astfocus::testing::ramp_video(shape, 0.9 * c));
  return TemplateOracle(std::move(templates), beta);
}

Video random_video(VideoShape shape, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> data(shape.size());
  for (double& v : data) v = u(rng);
  return Video(shape, std::move(data));
}

double distance2(const Video& a, const Video& b) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  return d2;
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("template video scores follow the closed-form softmax") {
  TemplateOracle oracle = toy_oracle();
  const auto& t = oracle.templates();
  const int labels[] = {3};
  const QueryResult r = oracle.query(t[0], labels);
  CHECK(r.top1.label == 0);
  double z = 0.0;
  for (const auto& tc : t) z += std::exp(-oracle.beta() * distance2(t[0], tc));
  CHECK(r.top1.score == doctest::Approx(1.0 / z).epsilon(1e-12));
  REQUIRE(r.requested.size() == 1);
  CHECK(r.requested[0].label == 3);
  CHECK(r.requested[0].score == doctest::Approx(std::exp(-oracle.beta() * distance2(t[0], t[3])) / z).epsilon(1e-12));
  CHECK(r.top1.score >= r.top2.score);
  CHECK(r.score_of(3).value() == r.requested[0].score);
}

TEST_CASE("query index increases by one per query") {
  TemplateOracle oracle = toy_oracle();
  const QueryResult a = oracle.query(oracle.templates()[1], {});
  const QueryResult b = oracle.query(oracle.templates()[2], {});
  CHECK(b.query_index == a.query_index + 1);
  CHECK(oracle.queries() == 2);
}

TEST_CASE("wrong shape is rejected") {
  TemplateOracle oracle = toy_oracle();
  CHECK(error_code([&] { oracle.query(Video::filled({4, 6, 5}, 0.5), {}); }) ==
        ErrorCode::kShapeMismatch);
}

TEST_CASE("concurrent queries are all counted") {
  TemplateOracle oracle = toy_oracle();
  std::vector<std::thread> workers;
  for (int w = 0; w < 4; ++w) {
    workers.emplace_back([&] {
      for (int k = 0; k < 25; ++k) oracle.query(oracle.templates()[0], {});
    });
  }
  for (auto& w : workers) w.join();
  CHECK(oracle.queries() == 100);
}

TEST_CASE("ranking is invariant to the temperature") {
  Rng rng(3);
  for (int k = 0; k < 10; ++k) {
    const Video v = random_video({4, 6, 6}, rng);
    CHECK(toy_oracle(0.01).query(v, {}).top1.label == toy_oracle(1.0).query(v, {}).top1.label);
  }
}

TEST_CASE("analytic gradient at an equidistant point matches finite differences") {
  const TemplateOracle oracle = unit_templates(2.0);
  const Video v = Video::filled({1, 1, 2}, 0.5);
  for (double p : oracle.scores(v)) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const Volume g = analytic_gradient(oracle, v, 1);
  double err = 0.0, norm = 0.0;
  const double h = 1e-5;
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::vector<double> up(v.data().begin(), v.data().end());
    std::vector<double> down = up;
    up[i] += h;
    down[i] -= h;
    const double fd = (oracle.scores(Video(v.shape(), up))[1] - oracle.scores(Video(v.shape(), down))[1]) / (2 * h);
    err += (g[i] - fd) * (g[i] - fd);
    norm += g[i] * g[i];
  }
  CHECK(norm > 0.0);
  CHECK(std::sqrt(err / norm) < 1e-6);
}

TEST_CASE("zero temperature gives uniform scores and no gradient") {
  const TemplateOracle oracle = unit_templates(0.0);
  const Video v = Video::filled({1, 1, 2}, 0.2);
  for (double p : oracle.scores(v)) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(analytic_gradient(oracle, v, 0).count_nonzero() == 0);
}

TEST_CASE("ascending the gradient raises the score") {
  TemplateOracle oracle = toy_oracle();
  Rng rng(5);
  const Video v = random_video({4, 6, 6}, rng);
  const Volume g = analytic_gradient(oracle, v, 2);
  const double before = oracle.scores(v)[2];
  std::vector<double> moved(v.data().begin(), v.data().end());
  for (std::size_t i = 0; i < moved.size(); ++i) moved[i] = std::clamp(moved[i] + 1e-3 * g[i], 0.0, 1.0);
  CHECK(oracle.scores(Video(v.shape(), moved))[2] > before);
}

TEST_CASE("analytic gradient needs a template oracle") {
  ConstantOracle oracle({1, 1, 1}, {0.5, 0.5});
  CHECK(error_code([&] { analytic_gradient(oracle, Video::filled({1, 1, 1}, 0.5), 0); }) ==
        ErrorCode::kUnsupportedOracle);
}

TEST_CASE("budget cap stops forwarding queries") {
  TemplateOracle inner = toy_oracle();
  BudgetedOracle capped(inner, 3);
  for (int k = 0; k < 3; ++k) capped.query(inner.templates()[0], {});
  CHECK(error_code([&] { capped.query(inner.templates()[0], {}); }) == ErrorCode::kBudgetExhausted);
  CHECK(capped.queries() == 3);
  CHECK(inner.queries() == 3);
  CHECK(capped.remaining() == 0);
}

TEST_CASE("linear oracle scores") {
  const VideoShape shape{1, 1, 1};
  LinearOracle oracle(Volume(shape, std::vector<double>{0.5, -0.25, 0.0}), Video::filled(shape, 0.5));
  const auto s = oracle.scores(Video(shape, {0.6, 0.5, 0.9}));
  CHECK(s[0] == doctest::Approx(0.55).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(0.45).epsilon(1e-15));
}

TEST_CASE("base64 round trip and malformed input") {
  const std::vector<unsigned char> bytes = {0, 1, 2, 250, 251, 252, 253};
  CHECK(protocol::base64_decode(protocol::base64_encode(bytes)) == bytes);
  CHECK(protocol::base64_encode(std::vector<unsigned char>{'M', 'a'}) == "TWE=");
  CHECK(error_code([] { protocol::base64_decode("abc"); }) == ErrorCode::kProtocolError);
  CHECK(error_code([] { protocol::base64_decode("a*c="); }) == ErrorCode::kProtocolError);
}

TEST_CASE("video payload round trip through f32") {
  const Video v = astfocus::testing::ramp_video({2, 3, 4});
  const Video back = protocol::decode_video(v.shape(), protocol::encode_video(v));
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(back[i] == static_cast<double>(static_cast<float>(v[i])));
  CHECK(error_code([&] { protocol::decode_video({2, 3, 5}, protocol::encode_video(v)); }) ==
        ErrorCode::kShapeMismatch);
}

TEST_CASE("query response parsing requires top1") {
  QueryResult r;
  r.top1 = {2, 0.7};
  r.top2 = {0, 0.2};
  r.requested = {{1, 0.1}};
  r.query_index = 9;
  nlohmann::json body = protocol::query_response(r);
  const QueryResult back = protocol::parse_query_response(body);
  CHECK(back.top1.label == 2);
  CHECK(back.requested[0].score == 0.1);
  CHECK(back.query_index == 9);
  body.erase("top1");
  CHECK(error_code([&] { protocol::parse_query_response(body); }) == ErrorCode::kProtocolError);
}

TEST_CASE("remote scores match in-process scores") {
  TemplateOracle served = toy_oracle();
  TemplateOracle local = toy_oracle();
  OracleServer server(served);
  RemoteOracle remote(server.url());
  const OracleInfo info = remote.info();
  CHECK(info.num_classes == 5);
  CHECK(info.shape == VideoShape{4, 6, 6});

  Rng rng(21);
  double worst = 0.0;
  std::uint64_t last_index = 0;
  for (int k = 0; k < 100; ++k) {
    // Values on the f32 grid so both sides see the same input.
    const Video raw = random_video(info.shape, rng);
    const Video v = protocol::decode_video(raw.shape(), protocol::encode_video(raw));
    const int labels[] = {k % 5, (k + 2) % 5};
    const QueryResult a = remote.query(v, labels);
    const QueryResult b = local.query(v, labels);
    CHECK(a.top1.label == b.top1.label);
    CHECK(a.top2.label == b.top2.label);
    worst = std::max({worst, std::abs(a.top1.score - b.top1.score), std::abs(a.top2.score - b.top2.score),
                      std::abs(a.requested[0].score - b.requested[0].score),
                      std::abs(a.requested[1].score - b.requested[1].score)});
    CHECK(a.query_index > last_index);
    last_index = a.query_index;
  }
  CHECK(worst <= 1e-6);
  CHECK(remote.queries() == 100);
}

TEST_CASE("remote errors map to error codes") {
  TemplateOracle served = toy_oracle();
  OracleServer server(served);
  RemoteOracle remote(server.url());
  const Video good = served.templates()[0];

  CHECK(error_code([&] { remote.query(Video::filled({4, 6, 5}, 0.5), {}); }) ==
        ErrorCode::kShapeMismatch);

  server.drop_top1 = true;
  CHECK(error_code([&] { remote.query(good, {}); }) == ErrorCode::kProtocolError);
  server.drop_top1 = false;

  server.ready = false;
  CHECK(error_code([&] { remote.query(good, {}); }) == ErrorCode::kRemoteUnavailable);
  server.ready = true;
  CHECK_NOTHROW(remote.query(good, {}));
}

TEST_CASE("server answers malformed bodies with 400 and wrong shapes with 413") {
  TemplateOracle served = toy_oracle();
  OracleServer server(served);
  httplib::Client client(server.url());
  auto bad = client.Post("/v1/query", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);

  nlohmann::json body = protocol::query_request(Video::filled({4, 6, 5}, 0.5), {});
  auto mismatch = client.Post("/v1/query", body.dump(), "application/json");
  REQUIRE(mismatch);
  CHECK(mismatch->status == 413);
}

TEST_CASE("unreachable server") {
  RemoteOracle remote(astfocus::testing::closed_url(), 2.0);
  CHECK(error_code([&] { remote.info(); }) == ErrorCode::kRemoteUnavailable);
  CHECK(error_code([&] { remote.query(Video::filled({1, 1, 1}, 0.5), {}); }) ==
        ErrorCode::kRemoteUnavailable);
}

}  // TEST_SUITE
