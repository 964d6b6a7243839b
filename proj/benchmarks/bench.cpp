#include <benchmark/benchmark.h>

#include <cmath>

#include "lssvc/audio.hpp"
#include "lssvc/codec.hpp"
#include "lssvc/model.hpp"
#include "lssvc/synth_data.hpp"

using namespace lssvc;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_GemmNT(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  Tensor c({n, n});
  for (auto _ : state) {
    kernel::gemm_nt(n, n, n, a.data(), n, b.data(), n, c.data(), n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_GemmNT)->Arg(32)->Arg(64)->Arg(192);

void BM_GruForward(benchmark::State& state) {
  Rng rng(2);
  const std::size_t h = 64, in = 80;
  const SeqShape shape{64, 8};
  const Tensor w = random_tensor({3 * h, in}, rng), u = random_tensor({3 * h, h}, rng);
  const Tensor b = random_tensor({3 * h}, rng), x = random_tensor({shape.rows(), in}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(gru_forward(w, u, b, x, shape));
}
BENCHMARK(BM_GruForward)->Unit(benchmark::kMillisecond);

void BM_GruBackward(benchmark::State& state) {
  Rng rng(3);
  const std::size_t h = 64, in = 80;
  const SeqShape shape{64, 8};
  const Tensor w = random_tensor({3 * h, in}, rng), u = random_tensor({3 * h, h}, rng);
  const Tensor b = random_tensor({3 * h}, rng), x = random_tensor({shape.rows(), in}, rng);
  const GruTrace tr = gru_forward(w, u, b, x, shape);
  const Tensor d = random_tensor({shape.rows(), h}, rng);
  Tensor dw(w.shape()), du(u.shape()), db(b.shape());
  for (auto _ : state) benchmark::DoNotOptimize(gru_backward(w, u, tr, d, dw, du, db, true));
}
BENCHMARK(BM_GruBackward)->Unit(benchmark::kMillisecond);

// One generator forward/backward plus a discriminator update on a default
// size batch (8 crops of 64 frames).
void BM_TrainingStep(benchmark::State& state) {
  const ModelDims dims;
  Model m = init_model(dims, Ablation::None, 1, std::log(1e-5));
  Rng rng(4);
  std::vector<Tensor> mels;
  std::vector<const Tensor*> ptrs;
  std::vector<std::string> prompts;
  std::vector<int> classes;
  for (int i = 0; i < 8; ++i) {
    mels.push_back(random_tensor({64, dims.n_mels}, rng));
    prompts.push_back(prompt_for(StyleAttrs::from_class(i), 0));
    classes.push_back(i);
  }
  for (const Tensor& t : mels) ptrs.push_back(&t);
  const Batch batch = make_batch(m, ptrs, prompts, classes);
  const LossConfig cfg;
  for (auto _ : state) {
    m.gen.zero_grad();
    m.disc.zero_grad();
    benchmark::DoNotOptimize(forward(m, batch, cfg, true));
    benchmark::DoNotOptimize(discriminator_loss(m, batch, true));
  }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

void BM_MelSpectrogram(benchmark::State& state) {
  const Waveform w = gen_utterance(StyleAttrs::from_class(3), 1);
  const FeatureConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(mel_spectrogram(w, cfg));
}
BENCHMARK(BM_MelSpectrogram)->Unit(benchmark::kMillisecond);

void BM_GriffinLim(benchmark::State& state) {
  const MelSpectrogram mel = mel_spectrogram(gen_utterance(StyleAttrs::from_class(3), 1), FeatureConfig{});
  const int iters = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(griffin_lim(mel, iters));
}
BENCHMARK(BM_GriffinLim)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
