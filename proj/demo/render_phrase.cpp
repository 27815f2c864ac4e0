// Writes a generated phrase as MIDI, its additive-synth reference, and a
// rendering through a checkpoint (or a freshly initialized model).
//
//   render_phrase OUT_DIR [checkpoint.pnet]

#include <cstdio>
#include <filesystem>

#include "perfnet/checkpoint.hpp"
#include "perfnet/io.hpp"
#include "perfnet/pipeline.hpp"
#include "perfnet/synthetic.hpp"

using namespace perfnet;

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s OUT_DIR [checkpoint.pnet]\n", argv[0]);
    return 1;
  }
  const std::filesystem::path out = argv[1];
  std::filesystem::create_directories(out);

  const auto model = argc > 2 ? load_checkpoint(argv[2]).model : model_init<float>(ModelConfig{}, {"synth"}, 0);
  const auto score = synthetic_phrase(7);
  write_file(out / "phrase.mid", write_midi(score));
  write_file(out / "reference.wav", dsp::write_wav(render_additive(score, model.config.sample_rate)));

  const auto& cfg = model.config;
  const auto roll = score_to_pianoroll(score, cfg.frame_rate(), cfg.pitch_min, cfg.pitch_max).roll;
  const auto r = synthesize(model, roll, 0);
  write_file(out / "rendered.wav", dsp::write_wav(r.audio));
  std::printf("%zu notes, %zu frames, %.2f s of audio in %.0f ms (contour %.0f, texture %.0f, griffin-lim %.0f)\n",
              score.notes.size(), r.frames, r.duration_s(), r.timings.total_ms(), r.timings.contour_ms,
              r.timings.texture_ms, r.timings.griffin_lim_ms);
}
