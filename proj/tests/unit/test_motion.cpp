#include "test_util.hpp"

#include "devc/config.hpp"
#include "devc/error.hpp"
#include "devc/motion.hpp"
#include "devc/refine.hpp"

using namespace devc;

namespace {

torch::Tensor constant_flow(int h, int w, double dx, double dy) {
  auto f = torch::zeros({1, 2, h, w});
  f.select(1, 0).fill_(dx);
  f.select(1, 1).fill_(dy);
  return f;
}

}  // namespace

TEST_CASE("zero flow warp is the identity") {
  torch::manual_seed(0);
  const auto x = torch::rand({2, 3, 17, 23});
  CHECK(torch::equal(warp(x, torch::zeros({2, 2, 17, 23})), x));
}

TEST_CASE("integer flow matches a direct shift on the interior") {
  torch::manual_seed(1);
  const auto x = torch::rand({1, 1, 20, 24});
  for (auto [dx, dy] : {std::pair{1, 0}, {0, -1}, {2, 3}, {-3, 1}}) {
    const auto w = warp(x, constant_flow(20, 24, dx, dy));
    // Oracle: out(y, x) = in(y + dy, x + dx) wherever the source exists.
    for (int y = 1; y < 19; ++y) {
      for (int xx = 1; xx < 23; ++xx) {
        const int sy = y + dy, sx = xx + dx;
        if (sy < 0 || sy >= 20 || sx < 0 || sx >= 24) continue;
        CHECK(w[0][0][y][xx].item<float>() == x[0][0][sy][sx].item<float>());
      }
    }
  }
}

TEST_CASE("half-pixel flow averages neighbours") {
  auto x = torch::zeros({1, 1, 1, 4});
  x[0][0][0][1] = 1.0;
  const auto w = warp(x, constant_flow(1, 4, 0.5, 0.0));
  CHECK(w[0][0][0][0].item<float>() == doctest::Approx(0.5));
  CHECK(w[0][0][0][1].item<float>() == doctest::Approx(0.5));
  CHECK(w[0][0][0][3].item<float>() == 0.0f);
}

TEST_CASE("warp rejects mismatched flow") {
  CHECK_THROWS_AS(warp(torch::zeros({1, 1, 8, 8}), torch::zeros({1, 2, 4, 4})), devc::Error);
}

TEST_CASE("chroma flow halves size and magnitude") {
  const auto c = chroma_flow(constant_flow(16, 16, 4.0, -2.0));
  CHECK(c.sizes() == torch::IntArrayRef{1, 2, 8, 8});
  CHECK(c[0][0][3][3].item<float>() == doctest::Approx(2.0));
  CHECK(c[0][1][3][3].item<float>() == doctest::Approx(-1.0));
}

TEST_CASE("me_loss") {
  torch::manual_seed(2);
  SUBCASE("one level is the plain warped MSE") {
    const auto ref = torch::rand({1, 1, 8, 8});
    const auto tgt = torch::rand({1, 1, 8, 8});
    FlowPyramid p;
    p.levels = {torch::rand({1, 2, 8, 8})};
    const double expected = torch::mse_loss(warp(ref, p.levels[0]), tgt).item<double>();
    CHECK(me_loss(p, {ref}, {tgt}).item<double>() == doctest::Approx(expected));
  }
  SUBCASE("levels are averaged") {
    FlowPyramid p;
    p.levels = {torch::zeros({1, 2, 4, 4}), torch::zeros({1, 2, 8, 8})};
    const auto r0 = torch::zeros({1, 1, 4, 4});
    const auto r1 = torch::zeros({1, 1, 8, 8});
    const auto t0 = torch::full({1, 1, 4, 4}, std::sqrt(0.2));
    const auto t1 = torch::full({1, 1, 8, 8}, std::sqrt(0.4));
    CHECK(me_loss(p, {r0, r1}, {t0, t1}).item<double>() == doctest::Approx(0.3));
  }
  SUBCASE("perfect flow on a shifted image is zero inside the border") {
    const auto ref = torch::rand({1, 1, 16, 16});
    // target(y, x) = ref(y, x + 2)
    auto tgt = torch::zeros_like(ref);
    tgt.narrow(3, 0, 14).copy_(ref.narrow(3, 2, 14));
    const auto w = warp(ref, constant_flow(16, 16, 2.0, 0.0));
    const auto err = (w - tgt).narrow(2, 1, 14).narrow(3, 1, 12).pow(2).mean();
    CHECK(err.item<double>() <= 1e-6);
  }
  SUBCASE("mismatched pyramid depth is rejected") {
    FlowPyramid p;
    p.levels = {torch::zeros({1, 2, 4, 4})};
    CHECK_THROWS_AS(me_loss(p, {}, {}), devc::Error);
  }
}

TEST_CASE("me_loss gradient matches finite differences") {
  torch::manual_seed(3);
  const auto ref = torch::rand({1, 1, 8, 8}, torch::kFloat64);
  const auto tgt = torch::rand({1, 1, 8, 8}, torch::kFloat64);
  auto f = [&](const torch::Tensor& flow) {
    FlowPyramid p;
    p.levels = {flow};
    return me_loss(p, {ref}, {tgt});
  };
  const auto flow = (torch::rand({1, 2, 8, 8}, torch::kFloat64) - 0.5) * 3.0;
  CHECK(gradient_error(f, flow, 128) < 1e-3);
}

TEST_CASE("estimator output shapes and finiteness") {
  torch::manual_seed(4);
  torch::NoGradGuard guard;
  MotionEstimator me(ModelConfig::smoke().motion);
  me->eval();
  for (int size : {32, 64, 128, 256}) {
    const auto a = torch::rand({1, 1, size, size});
    const auto b = torch::rand({1, 1, size, size});
    const auto p = me->forward(a, b);
    REQUIRE(p.depth() == me->levels());
    CHECK(p.finest().sizes() == torch::IntArrayRef{1, 2, size, size});
    CHECK(p.levels.front().size(2) == size >> (me->levels() - 1));
    CHECK(torch::isfinite(p.finest()).all().item<bool>());
  }
  const auto odd = me->forward(torch::rand({1, 1, 36, 52}), torch::rand({1, 1, 36, 52}));
  CHECK(odd.finest().sizes() == torch::IntArrayRef{1, 2, 36, 52});
}

TEST_CASE("motion refinement is the identity at initialization") {
  torch::manual_seed(5);
  torch::NoGradGuard guard;
  MotionRefine r(ModelConfig::smoke().motion.larb);
  const auto flow = torch::randn({1, 2, 12, 20});
  CHECK(torch::equal(r->forward(flow), flow));

  RefineNet net(ModelConfig::smoke().mv_refine);
  const auto decoded = torch::randn({1, 2, 32, 48}) * 5;
  CHECK(torch::equal(refine_decoded_motion(net, decoded), decoded));
}
