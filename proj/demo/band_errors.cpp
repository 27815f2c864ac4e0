// Trains on one generated phrase and prints how far the coarse and refined
// spectrograms are from the target in each TextureNet band.
//
//   band_errors [steps=2000] [seed=0] [every=250] [texture_bias=1]

#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "perfnet/dataset.hpp"
#include "perfnet/evaluate.hpp"
#include "perfnet/synthetic.hpp"
#include "perfnet/trainer.hpp"

using namespace perfnet;

namespace {

void report(const char* tag, const Model<float>& m, const TrainingPair& p) {
  const auto out = model_forward(m, roll_to_input<float>(p.roll), p.label);
  std::printf("%-6s all c=%-9.4g r=%-9.4g", tag, log_spectral_l2(out.coarse, p.target),
              log_spectral_l2(out.refined, p.target));
  for (const auto& b : band_partition(m.config.geometry.num_bins(), m.config.texture.num_bands))
    std::printf(" | c=%-8.4g r=%-8.4g", log_spectral_l2(out.coarse, p.target, b), log_spectral_l2(out.refined, p.target, b));
  std::printf("\n");
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  const std::uint64_t steps = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 2000;
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 0;
  const std::uint64_t every = argc > 3 ? std::strtoull(argv[3], nullptr, 10) : 250;
  ModelConfig cfg;
  if (argc > 4) cfg.texture.bias = std::atoi(argv[4]) != 0;

  const auto dir = std::filesystem::temp_directory_path() / "perfnet_band_errors";
  const auto ds = build_dataset(read_manifest(write_synthetic_corpus(dir, 1, seed)), cfg);
  auto c = initial_checkpoint(cfg, ds.labels, seed);
  report("init", c.model, ds.pairs[0]);

  TrainConfig tc;
  tc.batch_size = 1;
  tc.seed = seed;
  for (std::uint64_t at = every; at <= steps; at += every) {
    tc.steps = at;
    const auto rows = train_loop(ds, c, tc);
    char tag[32];
    std::snprintf(tag, sizeof tag, "%llu", static_cast<unsigned long long>(at));
    std::printf("loss %.6g\n", rows.back().loss);
    report(tag, c.model, ds.pairs[0]);
  }
  std::filesystem::remove_all(dir);
}
