#include <doctest.h>

#include <cmath>
#include <limits>

#include "lssvc/error.hpp"
#include "lssvc/losses.hpp"
#include "oracles.hpp"

using namespace lssvc;

namespace {

Tensor unit_rows(Tensor t) {
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const auto n = oracle::normalized(std::vector<double>(t.row(i).begin(), t.row(i).end()));
    std::copy(n.begin(), n.end(), t.row(i).begin());
  }
  return t;
}

}  // namespace

TEST_CASE("rec_loss matches a cell loop") {
  Rng rng(1);
  const Tensor a = oracle::random_tensor({6, 5}, rng), b = oracle::random_tensor({6, 5}, rng);
  double ref = 0.0;
  for (std::size_t i = 0; i < 30; ++i) ref += std::abs(a[i] - b[i]);
  CHECK(std::abs(rec_loss(a, b) - ref / 30.0) < 1e-12);
  CHECK(rec_loss(a, a) == 0.0);
  CHECK_THROWS_AS(rec_loss(a, Tensor({5, 6})), InvalidArgument);
}

TEST_CASE("rec_loss gradient is the scaled sign") {
  const Tensor a({1, 3}, {1.0, -1.0, 0.5}), b({1, 3}, {0.0, 0.0, 1.0});
  Tensor g({1, 3});
  rec_loss_grad(a, b, 3.0, g);
  CHECK(g[0] == doctest::Approx(1.0));
  CHECK(g[1] == doctest::Approx(-1.0));
  CHECK(g[2] == doctest::Approx(-1.0));
}

TEST_CASE("audio summary matches mean, affine, normalize") {
  Rng rng(2);
  ParamStore p;
  p.add("head.summary.W", oracle::random_tensor({4, 6}, rng));
  p.add("head.summary.b", oracle::random_tensor({4}, rng));
  const Tensor states = oracle::random_tensor({9, 6}, rng);
  std::vector<double> mean(6, 0.0);
  for (std::size_t t = 0; t < 9; ++t)
    for (std::size_t k = 0; k < 6; ++k) mean[k] += states(t, k) / 9.0;
  const auto ref = oracle::normalized(oracle::affine(p.value("head.summary.W"), mean, p.value("head.summary.b")));
  const auto got = audio_summary(states, p);
  for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(got[k] - ref[k]) < 1e-10);
}

TEST_CASE("style loss matches brute-force InfoNCE") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = unit_rows(oracle::random_tensor({3, 5}, rng));
    const Tensor t = unit_rows(oracle::random_tensor({3, 5}, rng));
    CHECK(std::abs(style_loss(a, t, 0.07) - oracle::info_nce(a, t, 0.07)) < 1e-10);
  }
}

TEST_CASE("style loss is low for aligned pairs and high for swapped ones") {
  const Tensor a({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const Tensor swapped({2, 2}, {0.0, 1.0, 1.0, 0.0});
  CHECK(style_loss(a, a) < 1e-5);
  CHECK(style_loss(a, swapped) > 10.0);
  CHECK_THROWS_AS(style_loss(a, Tensor({3, 2})), InvalidArgument);
  CHECK_THROWS_AS(style_loss(a, a, 0.0), InvalidArgument);
}

TEST_CASE("cross entropy matches a naive softmax") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor logits = oracle::random_tensor({3, 8}, rng, 4.0);
    const std::vector<int> targets{static_cast<int>(rng.below(8)), static_cast<int>(rng.below(8)),
                                   static_cast<int>(rng.below(8))};
    CHECK(std::abs(cross_entropy(logits, targets).value - oracle::cross_entropy(logits, targets)) < 1e-12);
  }
}

TEST_CASE("cross entropy of a confident correct logit") {
  Tensor logits({1, 8});
  logits[0] = 10.0;
  const std::vector<int> target{0};
  const double ce = cross_entropy(logits, target).value;
  CHECK(ce == doctest::Approx(std::log1p(7.0 * std::exp(-10.0))).epsilon(1e-12));
  CHECK(ce == doctest::Approx(3.3e-4).epsilon(0.05));
  logits[0] = 40.0;
  CHECK(cross_entropy(logits, target).value < 1e-15);
  const std::vector<int> bad{8};
  CHECK_THROWS_AS(cross_entropy(logits, bad), InvalidArgument);
}

TEST_CASE("total loss sums in order and names non-finite terms") {
  const LossBreakdown l = total_loss(1.0, 2.0, 3.0, LossWeights{});
  CHECK(l.total == 1.0 + 4.0 + 1.5);
  try {
    total_loss(1.0, std::numeric_limits<double>::quiet_NaN(), 0.0, LossWeights{});
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("style") != std::string::npos);
  }
}

TEST_CASE("speaker loss modes touch only the intended parameters") {
  Rng rng(5);
  ParamStore disc;
  init_disc_params(disc, 6, 5, 8, rng);
  const Tensor frames = oracle::random_tensor({7, 6}, rng);
  const SpeakerLossResult g = speaker_loss(frames, 3, disc, SpeakerMode::Generator);
  for (const auto& e : disc.entries()) CHECK(oracle::max_abs(e.grad) == 0.0);
  CHECK(g.d_frames.shape() == frames.shape());
  CHECK(oracle::max_abs(g.d_frames) > 0.0);
  const SpeakerLossResult d = speaker_loss(frames, 3, disc, SpeakerMode::Discriminator);
  CHECK(d.value == g.value);
  CHECK(oracle::max_abs(disc.grad("disc.W2")) > 0.0);
}

TEST_CASE("discriminator and normalization gradients pass finite differences") {
  Rng rng(6);
  ParamStore disc;
  init_disc_params(disc, 4, 6, 3, rng);
  const Tensor pooled = oracle::random_tensor({5, 4}, rng);
  const std::vector<int> targets{0, 2, 1, 1, 0};
  const LossFn fn = [&](ParamStore& p, bool with_grad) {
    const DiscTrace tr = disc_forward(p, pooled);
    const CrossEntropyResult ce = cross_entropy(tr.logits, targets);
    if (with_grad) disc_backward(p, &p, tr, ce.d_logits);
    return ce.value;
  };
  CHECK(grad_check(fn, disc) < 1e-5);

  ParamStore x;
  x.add("x", oracle::random_tensor({3, 4}, rng));
  const Tensor t = unit_rows(oracle::random_tensor({3, 4}, rng));
  const LossFn nfn = [&](ParamStore& p, bool with_grad) {
    const Tensor y = normalize_rows(p.value("x"));
    const StyleLossResult r = style_loss_grad(y, t, 0.07);
    if (with_grad) {
      const Tensor dx = normalize_rows_backward(p.value("x"), r.d_audio);
      for (std::size_t i = 0; i < dx.size(); ++i) p.grad("x")[i] += dx[i];
    }
    return r.value;
  };
  CHECK(grad_check(nfn, x) < 1e-5);
}

TEST_CASE("mean over time and its backward") {
  const SeqShape shape{3, 2};
  const Tensor seq({6, 1}, {1, 10, 2, 20, 3, 30});
  const Tensor m = mean_over_time(seq, shape);
  CHECK(m[0] == doctest::Approx(2.0));
  CHECK(m[1] == doctest::Approx(20.0));
  Tensor d(seq.shape());
  mean_over_time_backward(Tensor({2, 1}, {3.0, 6.0}), shape, d);
  CHECK(d == Tensor({6, 1}, {1, 2, 1, 2, 1, 2}));
}
