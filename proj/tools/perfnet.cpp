#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "perfnet/checkpoint.hpp"
#include "perfnet/dataset.hpp"
#include "perfnet/evaluate.hpp"
#include "perfnet/io.hpp"
#include "perfnet/midi.hpp"
#include "perfnet/pianoroll.hpp"
#include "perfnet/pipeline.hpp"
#include "perfnet/selftest.hpp"
#include "perfnet/synthetic.hpp"
#include "perfnet/trainer.hpp"
#include "perfnet/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace perfnet;

namespace {

constexpr int kUserError = 1;
constexpr int kInternalError = 2;

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw IoError("no such file: " + p.string());
}

// ingest ----------------------------------------------------------------------

struct IngestArgs {
  std::string midi;
  bool print_roll = false;
  bool as_json = false;
  double frame_rate = 62.5;
  int pitch_min = 0;
  int pitch_max = 127;
};

int run_ingest(const IngestArgs& a) {
  require_file(a.midi);
  const auto score = parse_midi(read_file(a.midi));
  const auto conv = score_to_pianoroll(score, a.frame_rate, a.pitch_min, a.pitch_max);
  if (a.print_roll) {
    std::cout << pianoroll_to_json(conv.roll).dump() << "\n";
    return 0;
  }
  if (a.as_json) {
    std::cout << json{{"notes", score.notes.size()},
                      {"duration_s", score.duration_s},
                      {"ticks_per_quarter", score.ticks_per_quarter},
                      {"tempo_changes", score.tempo_map.size()},
                      {"frames", conv.roll.num_frames()},
                      {"dropped_notes", conv.dropped_notes},
                      {"warnings", score.warnings},
                      {"pianoroll", pianoroll_to_json(conv.roll)}}
                     .dump()
              << "\n";
    return 0;
  }
  std::printf("notes        %zu\nduration     %.3f s\nframes       %zu at %.4g fps\ntempo events %zu\n",
              score.notes.size(), score.duration_s, conv.roll.num_frames(), a.frame_rate, score.tempo_map.size());
  if (conv.dropped_notes) std::printf("dropped      %zu notes outside %d..%d\n", conv.dropped_notes, a.pitch_min, a.pitch_max);
  for (const auto& w : score.warnings) std::printf("warning      %s\n", w.c_str());
  return 0;
}

// init / train ------------------------------------------------------------------

struct ModelArgs {
  std::vector<std::size_t> widths{256, 384, 512, 512};
  int pitch_min = 0;
  int pitch_max = 127;
};

ModelConfig model_config(const ModelArgs& a) {
  ModelConfig c;
  c.encoder_widths = a.widths;
  c.pitch_min = a.pitch_min;
  c.pitch_max = a.pitch_max;
  return c;
}

struct InitArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::vector<std::string> labels{"default"};
  ModelArgs model;
};

int run_init(const InitArgs& a) {
  const auto c = initial_checkpoint(model_config(a.model), a.labels, a.seed);
  save_checkpoint(c, a.out);
  std::printf("wrote %s (%zu parameters, labels:", a.out.c_str(),
              c.model.contour.params.parameter_count() + c.model.texture.params.parameter_count());
  for (const auto& l : c.model.labels) std::printf(" %s", l.c_str());
  std::printf(")\n");
  return 0;
}

struct TrainArgs {
  std::string manifest;
  std::string synthetic;
  std::size_t synthetic_pairs = 1;
  std::string out;
  std::string metrics;
  std::string resume;
  TrainConfig train;
  ModelArgs model;
  std::uint64_t log_every = 100;
};

int run_train(TrainArgs a) {
  fs::path manifest_path = a.manifest;
  if (!a.synthetic.empty()) manifest_path = write_synthetic_corpus(a.synthetic, a.synthetic_pairs, a.train.seed);
  if (manifest_path.empty()) throw InvalidManifest("one of --manifest or --synthetic is required");
  require_file(manifest_path);
  const auto manifest = read_manifest(manifest_path);

  Checkpoint c;
  if (!a.resume.empty()) {
    require_file(a.resume);
    c = load_checkpoint(a.resume);
  }
  const ModelConfig config = a.resume.empty() ? model_config(a.model) : c.model.config;
  const auto ds = build_dataset(manifest, config, a.resume.empty() ? std::vector<std::string>{} : c.model.labels);
  if (a.resume.empty()) c = initial_checkpoint(config, ds.labels, a.train.seed);
  std::printf("dataset: %zu pairs, labels:", ds.pairs.size());
  for (const auto& l : ds.labels) std::printf(" %s", l.c_str());
  std::printf("\n");

  const fs::path metrics_path = a.metrics.empty() ? fs::path(a.out + ".metrics.csv") : fs::path(a.metrics);
  std::string csv = metrics_csv_header();
  if (!a.resume.empty() && fs::exists(metrics_path)) {
    // rows past the resumed step are dropped
    csv.clear();
    std::istringstream in(read_text(metrics_path));
    std::string line;
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (csv.empty() || (comma != std::string::npos && std::stoull(line.substr(0, comma)) <= c.step))
        csv += line + "\n";
    }
  }
  TrainHooks hooks;
  hooks.on_step = [&](const MetricsRow& r) {
    csv += metrics_csv_line(r);
    if (a.log_every && (r.step % a.log_every == 0 || r.step == 1))
      std::printf("step %llu loss %.6g (coarse %.6g, refined %.6g)\n", static_cast<unsigned long long>(r.step),
                  r.loss, r.loss_coarse, r.loss_refined);
  };
  hooks.on_checkpoint = [&](const Checkpoint& k) {
    save_checkpoint(k, a.out);
    write_text(metrics_path, csv);
  };
  const auto rows = train_loop(ds, c, a.train, hooks);
  save_checkpoint(c, a.out);
  write_text(metrics_path, csv);
  if (rows.empty())
    std::printf("no steps run; wrote %s at step %llu\n", a.out.c_str(), static_cast<unsigned long long>(c.step));
  else
    std::printf("final loss %.9g at step %llu\n", rows.back().loss, static_cast<unsigned long long>(c.step));
  return 0;
}

// synth / eval ------------------------------------------------------------------

struct SynthArgs {
  std::string midi;
  std::string checkpoint;
  std::string instrument;
  int gl_iters = 60;
  std::uint64_t seed = 0;
  std::string out;
};

int run_synth(const SynthArgs& a) {
  require_file(a.midi);
  require_file(a.checkpoint);
  const auto c = load_checkpoint(a.checkpoint);
  const auto label = resolve_instrument(c.model, a.instrument);
  const auto score = parse_midi(read_file(a.midi));
  const auto& cfg = c.model.config;
  const auto roll = score_to_pianoroll(score, cfg.frame_rate(), cfg.pitch_min, cfg.pitch_max).roll;
  const auto r = synthesize(c.model, roll, label, {a.gl_iters, a.seed});
  write_file(a.out, dsp::write_wav(r.audio));
  std::printf("wrote %s\ninstrument   %s\nframes       %zu\nduration     %.4f s\n", a.out.c_str(),
              c.model.labels.empty() ? "-" : c.model.labels[label].c_str(), r.frames, r.duration_s());
  std::printf("contournet   %.1f ms\ntexturenet   %.1f ms\ngriffin-lim  %.1f ms (%d iterations)\ntotal        %.1f ms\n",
              r.timings.contour_ms, r.timings.texture_ms, r.timings.griffin_lim_ms, a.gl_iters, r.timings.total_ms());
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string manifest;
  bool as_json = false;
};

int run_eval(const EvalArgs& a) {
  require_file(a.checkpoint);
  require_file(a.manifest);
  const auto c = load_checkpoint(a.checkpoint);
  const auto ds = build_dataset(read_manifest(a.manifest), c.model.config, c.model.labels);
  const auto report = evaluate(c.model, ds);
  if (a.as_json) {
    json rows = json::array();
    for (const auto& r : report.rows)
      rows.push_back({{"source", r.source}, {"label", r.label}, {"frames", r.frames}, {"lsd", r.lsd},
                      {"lsd_coarse", r.lsd_coarse}});
    std::cout << json{{"mean_lsd", report.mean_lsd}, {"mean_lsd_coarse", report.mean_lsd_coarse}, {"pairs", rows}}.dump()
              << "\n";
    return 0;
  }
  for (const auto& r : report.rows)
    std::printf("%-40s %-10s frames %6zu  lsd %.5f  (coarse %.5f)\n", r.source.c_str(), r.label.c_str(), r.frames,
                r.lsd, r.lsd_coarse);
  std::printf("mean lsd %.5f over %zu pairs (coarse %.5f)\n", report.mean_lsd, report.rows.size(),
              report.mean_lsd_coarse);
  return 0;
}

// serve / selftest --------------------------------------------------------------

struct ServeArgs {
  std::string config_file;
  std::optional<int> port;
  std::optional<std::string> host;
  std::vector<std::string> checkpoints;
  std::optional<std::string> persist_dir;
  std::optional<std::size_t> workers;
  std::optional<int> gl_iters;
};

service::Service* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) std::thread([] { g_service->stop(); }).detach();
}

int run_serve(const ServeArgs& a) {
  service::ServiceConfig cfg;
  if (!a.config_file.empty()) {
    require_file(a.config_file);
    cfg = service::parse_config(read_text(a.config_file), cfg, fs::path(a.config_file).parent_path());
  }
  if (a.port) cfg.port = *a.port;
  if (a.host) cfg.host = *a.host;
  for (const auto& c : a.checkpoints) cfg.checkpoints.emplace_back(c);
  if (a.persist_dir) cfg.persist_dir = *a.persist_dir;
  if (a.workers) cfg.workers = *a.workers;
  if (a.gl_iters) cfg.gl_iterations = *a.gl_iters;
  for (const auto& c : cfg.checkpoints) require_file(c);

  service::Service svc(cfg);
  const int port = svc.start();
  std::printf("listening on http://%s:%d (%zu instruments)\n", cfg.host.c_str(), port, svc.instruments().size());
  std::fflush(stdout);
  g_service = &svc;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  svc.wait();
  svc.stop();
  g_service = nullptr;
  return 0;
}

int run_selftest() {
  bool all = true;
  for (const auto& r : selftest::run_all()) {
    std::printf("%s  %-44s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    all &= r.passed;
  }
  return all ? 0 : kUserError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perfnet: score-to-audio rendering with a two-stage spectrogram model"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "perfnet 0.1.0");

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse a MIDI file and report its pianoroll");
  ingest_cmd->add_option("--midi", ingest.midi, "Standard MIDI file")->required();
  ingest_cmd->add_flag("--print-roll", ingest.print_roll, "Print the sparse pianoroll JSON");
  ingest_cmd->add_flag("--json", ingest.as_json, "Print a JSON summary");
  ingest_cmd->add_option("--frame-rate", ingest.frame_rate, "Pianoroll frames per second")->capture_default_str();
  ingest_cmd->add_option("--pitch-min", ingest.pitch_min)->capture_default_str();
  ingest_cmd->add_option("--pitch-max", ingest.pitch_max)->capture_default_str();

  auto add_model_options = [](CLI::App* cmd, ModelArgs& m) {
    cmd->add_option("--widths", m.widths, "ContourNet encoder widths")->delimiter(',')->capture_default_str();
    cmd->add_option("--pitch-min", m.pitch_min)->capture_default_str();
    cmd->add_option("--pitch-max", m.pitch_max)->capture_default_str();
  };

  InitArgs init;
  auto* init_cmd = app.add_subcommand("init", "Write an untrained, seeded checkpoint");
  init_cmd->add_option("--out", init.out, "Checkpoint path")->required();
  init_cmd->add_option("--seed", init.seed)->capture_default_str();
  init_cmd->add_option("--labels", init.labels, "Instrument labels")->delimiter(',')->capture_default_str();
  add_model_options(init_cmd, init.model);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train on a manifest of MIDI/WAV pairs");
  auto* manifest_opt = train_cmd->add_option("--manifest", train.manifest, "Tab-separated midi, wav, label lines");
  auto* synth_opt =
      train_cmd->add_option("--synthetic", train.synthetic, "Generate an additive-synth corpus into this directory");
  manifest_opt->excludes(synth_opt);
  train_cmd->add_option("--synthetic-pairs", train.synthetic_pairs)->capture_default_str();
  train_cmd->add_option("--out", train.out, "Checkpoint path")->required();
  train_cmd->add_option("--metrics", train.metrics, "Metrics CSV (default <out>.metrics.csv)");
  train_cmd->add_option("--resume", train.resume, "Continue from this checkpoint");
  train_cmd->add_option("--steps", train.train.steps, "Total optimizer steps")->required();
  train_cmd->add_option("--seed", train.train.seed)->capture_default_str();
  train_cmd->add_option("--batch-size", train.train.batch_size)->capture_default_str();
  train_cmd->add_option("--segment-frames", train.train.segment_frames)->capture_default_str();
  train_cmd->add_option("--lr", train.train.adam.learning_rate)->capture_default_str();
  train_cmd->add_option("--lambda-coarse", train.train.lambda.coarse)->capture_default_str();
  train_cmd->add_option("--lambda-refined", train.train.lambda.refined)->capture_default_str();
  train_cmd->add_option("--checkpoint-every", train.train.checkpoint_every, "0 disables")->capture_default_str();
  train_cmd->add_option("--log-every", train.log_every)->capture_default_str();
  add_model_options(train_cmd, train.model);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Render a MIDI file to WAV");
  synth_cmd->add_option("--midi", synth.midi)->required();
  synth_cmd->add_option("--checkpoint", synth.checkpoint)->required();
  synth_cmd->add_option("--instrument", synth.instrument, "Label (default: the checkpoint's first)");
  synth_cmd->add_option("--gl-iters", synth.gl_iters)->check(CLI::NonNegativeNumber)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Griffin-Lim phase seed")->capture_default_str();
  synth_cmd->add_option("-o,--out", synth.out)->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Log-spectral distance of a checkpoint on a manifest");
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--manifest", eval.manifest)->required();
  eval_cmd->add_flag("--json", eval.as_json);

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  serve_cmd->add_option("--config", serve.config_file, "key = value config file");
  serve_cmd->add_option("--port", serve.port);
  serve_cmd->add_option("--host", serve.host);
  serve_cmd->add_option("--checkpoint", serve.checkpoints, "Checkpoint to load (repeatable)");
  serve_cmd->add_option("--persist-dir", serve.persist_dir);
  serve_cmd->add_option("--workers", serve.workers);
  serve_cmd->add_option("--gl-iters", serve.gl_iters);

  auto* selftest_cmd = app.add_subcommand("selftest", "Run built-in property checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUserError;
  }

  try {
    if (*ingest_cmd) return run_ingest(ingest);
    if (*init_cmd) return run_init(init);
    if (*train_cmd) return run_train(train);
    if (*synth_cmd) return run_synth(synth);
    if (*eval_cmd) return run_eval(eval);
    if (*serve_cmd) return run_serve(serve);
    if (*selftest_cmd) return run_selftest();
  } catch (const NonFiniteLoss& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kInternalError;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUserError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kInternalError;
  }
  return kInternalError;
}
