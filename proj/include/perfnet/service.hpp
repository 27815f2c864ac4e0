#pragma once

#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "perfnet/checkpoint.hpp"
#include "perfnet/dsp/wav.hpp"
#include "perfnet/error.hpp"
#include "perfnet/io.hpp"
#include "perfnet/midi.hpp"
#include "perfnet/pianoroll.hpp"
#include "perfnet/pipeline.hpp"

// After the Eigen-based headers: <resolv.h> defines a `_res` macro.
#include <httplib.h>

namespace perfnet::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::vector<std::filesystem::path> checkpoints;
  std::optional<std::filesystem::path> persist_dir;
  std::size_t workers = 2;
  int gl_iterations = 32;
  std::string cors_origin = "*";
};

/// `key = value` lines; '#' starts a comment. `checkpoint` may repeat.
/// Relative paths resolve against `base_dir`. Keys override `base`.
inline ServiceConfig parse_config(const std::string& text, ServiceConfig base = {},
                                  const std::filesystem::path& base_dir = {}) {
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  auto number = [](const std::string& key, const std::string& v, long long lo, long long hi) {
    std::size_t used = 0;
    long long n = 0;
    try {
      n = std::stoll(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.empty() || n < lo || n > hi)
      throw InvalidConfig(key + ": expected an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return n;
  };
  ServiceConfig c = std::move(base);
  std::istringstream in(text);
  std::string line;
  for (int number_line = 1; std::getline(in, line); ++number_line) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidConfig("line " + std::to_string(number_line) + ": expected key = value");
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "host") c.host = value;
    else if (key == "port") c.port = static_cast<int>(number(key, value, 0, 65535));
    else if (key == "checkpoint") c.checkpoints.push_back(resolve(value));
    else if (key == "persist_dir") c.persist_dir = resolve(value);
    else if (key == "workers") c.workers = static_cast<std::size_t>(number(key, value, 1, 64));
    else if (key == "gl_iters") c.gl_iterations = static_cast<int>(number(key, value, 0, 10000));
    else if (key == "cors_origin") c.cors_origin = value;
    else throw InvalidConfig("line " + std::to_string(number_line) + ": unknown key '" + key + "'");
  }
  return c;
}

enum class JobState { queued, running, done, failed };

inline std::string to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "unknown";
}

inline std::optional<JobState> job_state_from(const std::string& s) {
  for (auto st : {JobState::queued, JobState::running, JobState::done, JobState::failed})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

/// queued -> running -> {done, failed}.
inline bool legal_transition(JobState from, JobState to) {
  return (from == JobState::queued && to == JobState::running) ||
         (from == JobState::running && (to == JobState::done || to == JobState::failed));
}

/// True iff `history` starts at queued and every step is a legal transition.
inline bool valid_history(const std::vector<JobState>& history) {
  if (history.empty() || history.front() != JobState::queued) return false;
  for (std::size_t i = 1; i < history.size(); ++i)
    if (!legal_transition(history[i - 1], history[i])) return false;
  return true;
}

struct Instrument {
  std::string label;
  std::string checkpoint_id;
};

namespace detail {

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  const auto n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + n, sizeof buf - n, ".%03lldZ", static_cast<long long>(ms));
  return buf;
}

inline nlohmann::json error_body(const std::string& name, const std::string& message) {
  return {{"error", name}, {"message", message}};
}

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& name, const std::string& message) {
  send_json(res, status, error_body(name, message));
}

}  // namespace detail

/// Score store, instrument registry, FIFO job queue with a fixed worker
/// pool, and the HTTP routes over them.
class Service {
 public:
  struct Score {
    std::string id;
    Pianoroll roll;
    std::string filename;
    std::string created_at;
  };

  struct Job {
    std::string id;
    std::string score_id;
    std::string instrument_label;
    std::string checkpoint_id;
    JobState state = JobState::queued;
    std::string error;
    std::vector<std::pair<JobState, std::string>> history;
    std::vector<std::uint8_t> audio;
    double duration_s = 0.0;
    std::size_t frames = 0;
    StageTimings timings;
  };

  /// Loads every checkpoint named in the config; ids are file stems.
  explicit Service(ServiceConfig config) : config_(std::move(config)) {
    for (const auto& path : config_.checkpoints) {
      auto id = path.stem().string();
      while (find_model(id)) id += "_";
      add_model(id, load_checkpoint(path).model);
    }
    if (config_.persist_dir) restore();
  }

  ~Service() { stop(); }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Registers a model under `checkpoint_id`. Call before start().
  void add_model(const std::string& checkpoint_id, Model<float> model) {
    models_.push_back({checkpoint_id, std::make_shared<const Model<float>>(std::move(model))});
  }

  /// Frame rate used for uploaded scores: the first model's, or 62.5 fps.
  double frame_rate() const { return models_.empty() ? 62.5 : models_.front().model->config.frame_rate(); }

  std::vector<Instrument> instruments() const {
    std::vector<Instrument> out;
    for (const auto& m : models_)
      for (const auto& l : m.model->labels) out.push_back({l, m.id});
    return out;
  }

  /// Binds the listening socket and starts workers and the HTTP loop in the
  /// background. Returns the bound port.
  int start() {
    routes();
    int port = config_.port;
    if (port == 0) {
      port = http_.bind_to_any_port(config_.host);
      if (port < 0) throw IoError("cannot bind " + config_.host);
    } else if (!http_.bind_to_port(config_.host, port)) {
      throw IoError("cannot bind " + config_.host + ":" + std::to_string(port));
    }
    {
      std::lock_guard lock(jobs_mutex_);
      stopping_ = false;
    }
    for (std::size_t i = 0; i < std::max<std::size_t>(1, config_.workers); ++i)
      workers_.emplace_back([this] { worker(); });
    listener_ = std::thread([this] { http_.listen_after_bind(); });
    http_.wait_until_ready();
    port_ = port;
    return port;
  }

  /// Blocks until stop() is called from another thread or a signal handler.
  void wait() {
    if (listener_.joinable()) listener_.join();
  }

  void stop() {
    http_.stop();
    if (listener_.joinable()) listener_.join();
    {
      std::lock_guard lock(jobs_mutex_);
      stopping_ = true;
    }
    jobs_cv_.notify_all();
    for (auto& w : workers_) w.join();
    workers_.clear();
  }

  int port() const { return port_; }

  /// While paused, workers leave queued jobs alone.
  void pause() {
    std::lock_guard lock(jobs_mutex_);
    paused_ = true;
  }
  void resume() {
    {
      std::lock_guard lock(jobs_mutex_);
      paused_ = false;
    }
    jobs_cv_.notify_all();
  }

  /// Blocks until the job reaches done or failed. Returns false on timeout.
  bool wait_for_job(const std::string& id, std::chrono::milliseconds timeout) {
    std::unique_lock lock(jobs_mutex_);
    return jobs_cv_.wait_for(lock, timeout, [&] {
      auto it = jobs_.find(id);
      return it == jobs_.end() || it->second.state == JobState::done || it->second.state == JobState::failed;
    });
  }

 private:
  struct LoadedModel {
    std::string id;
    std::shared_ptr<const Model<float>> model;
  };

  const LoadedModel* find_model(const std::string& id) const {
    for (const auto& m : models_)
      if (m.id == id) return &m;
    return nullptr;
  }

  std::pair<std::shared_ptr<const Model<float>>, std::string> find_instrument(const std::string& label) const {
    for (const auto& m : models_)
      if (m.model->label_index(label) < m.model->labels.size()) return {m.model, m.id};
    return {nullptr, {}};
  }

  std::string new_id() {
    std::lock_guard lock(id_mutex_);
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(id_rng_()),
                  static_cast<unsigned long long>(id_rng_()));
    return buf;
  }

  static nlohmann::json score_json(const Score& s) {
    return {{"id", s.id}, {"filename", s.filename}, {"created_at", s.created_at}, {"pianoroll", pianoroll_to_json(s.roll)}};
  }

  static nlohmann::json job_json(const Job& j) {
    nlohmann::json history = nlohmann::json::array();
    for (const auto& [state, at] : j.history) history.push_back({{"state", to_string(state)}, {"at", at}});
    nlohmann::json out{{"id", j.id},
                       {"score_id", j.score_id},
                       {"instrument_label", j.instrument_label},
                       {"checkpoint_id", j.checkpoint_id},
                       {"state", to_string(j.state)},
                       {"history", std::move(history)}};
    if (j.state == JobState::failed) out["error"] = j.error;
    if (j.state == JobState::done) {
      out["audio_url"] = "/api/jobs/" + j.id + "/audio";
      out["duration_s"] = j.duration_s;
      out["frames"] = j.frames;
      out["timings_ms"] = {{"contour", j.timings.contour_ms},
                           {"texture", j.timings.texture_ms},
                           {"griffin_lim", j.timings.griffin_lim_ms}};
    }
    return out;
  }

  // Persistence -------------------------------------------------------------

  void persist_score(const Score& s) const {
    if (!config_.persist_dir) return;
    const auto dir = *config_.persist_dir / "scores";
    std::filesystem::create_directories(dir);
    write_text(dir / (s.id + ".json"), score_json(s).dump());
  }

  void persist_job(const Job& j) const {
    if (!config_.persist_dir) return;
    const auto dir = *config_.persist_dir / "jobs";
    std::filesystem::create_directories(dir);
    if (j.state == JobState::done) {
      std::filesystem::create_directories(*config_.persist_dir / "audio");
      write_file(*config_.persist_dir / "audio" / (j.id + ".wav"), j.audio);
    }
    write_text(dir / (j.id + ".json"), job_json(j).dump());
  }

  /// Reloads stored scores and finished jobs; unfinished jobs are dropped.
  void restore() {
    namespace fs = std::filesystem;
    const auto& root = *config_.persist_dir;
    fs::create_directories(root);
    if (fs::is_directory(root / "scores")) {
      for (const auto& e : fs::directory_iterator(root / "scores")) {
        if (e.path().extension() != ".json") continue;
        const auto j = nlohmann::json::parse(read_text(e.path()));
        Score s{j.at("id"), pianoroll_from_json(j.at("pianoroll")), j.value("filename", ""), j.value("created_at", "")};
        scores_[s.id] = std::move(s);
      }
    }
    if (fs::is_directory(root / "jobs")) {
      for (const auto& e : fs::directory_iterator(root / "jobs")) {
        if (e.path().extension() != ".json") continue;
        const auto j = nlohmann::json::parse(read_text(e.path()));
        Job job;
        job.id = j.at("id");
        job.score_id = j.at("score_id");
        job.instrument_label = j.at("instrument_label");
        job.checkpoint_id = j.value("checkpoint_id", "");
        job.state = job_state_from(j.at("state")).value_or(JobState::queued);
        if (job.state != JobState::done && job.state != JobState::failed) continue;
        job.error = j.value("error", "");
        for (const auto& h : j.at("history")) job.history.emplace_back(*job_state_from(h.at("state")), h.at("at"));
        if (job.state == JobState::done) {
          const auto wav = root / "audio" / (job.id + ".wav");
          if (!fs::exists(wav)) continue;
          job.audio = read_file(wav);
          job.duration_s = j.value("duration_s", 0.0);
          job.frames = j.value("frames", std::size_t{0});
        }
        jobs_[job.id] = std::move(job);
      }
    }
  }

  // Workers -----------------------------------------------------------------

  void transition(Job& j, JobState to) {
    j.state = to;
    j.history.emplace_back(to, detail::utc_now());
  }

  void worker() {
    for (;;) {
      std::string id, label;
      Pianoroll roll;
      std::shared_ptr<const Model<float>> model;
      {
        std::unique_lock lock(jobs_mutex_);
        jobs_cv_.wait(lock, [&] { return stopping_ || (!paused_ && !queue_.empty()); });
        if (stopping_) return;
        id = queue_.front().job_id;
        roll = std::move(queue_.front().roll);
        queue_.pop_front();
        auto& j = jobs_.at(id);
        label = j.instrument_label;
        model = find_instrument(label).first;
        transition(j, JobState::running);
      }
      jobs_cv_.notify_all();

      Job result;
      try {
        const auto r = synthesize(*model, roll, resolve_instrument(*model, label), {config_.gl_iterations, 0});
        result.audio = dsp::write_wav(r.audio);
        result.duration_s = r.duration_s();
        result.frames = r.frames;
        result.timings = r.timings;
        result.state = JobState::done;
      } catch (const Error& e) {
        result.state = JobState::failed;
        result.error = e.name() + ": " + e.detail();
      } catch (const std::exception& e) {
        result.state = JobState::failed;
        result.error = std::string("InternalError: ") + e.what();
      }
      {
        std::lock_guard lock(jobs_mutex_);
        auto& j = jobs_.at(id);
        j.audio = std::move(result.audio);
        j.duration_s = result.duration_s;
        j.frames = result.frames;
        j.timings = result.timings;
        j.error = result.error;
        transition(j, result.state);
        persist_job(j);
      }
      jobs_cv_.notify_all();
    }
  }

  // HTTP --------------------------------------------------------------------

  void routes() {
    using httplib::Request;
    using httplib::Response;
    using detail::send_error;
    using detail::send_json;

    http_.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                               {"Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS"},
                               {"Access-Control-Allow-Headers", "Content-Type"}});
    http_.set_payload_max_length(64u << 20);
    http_.Options(R"(/api/.*)", [](const Request&, Response& res) { res.status = 204; });

    http_.Post("/api/scores", [this](const Request& req, Response& res) {
      std::string bytes = req.body, filename;
      if (req.is_multipart_form_data()) {
        if (req.has_file("file")) {
          const auto f = req.get_file_value("file");
          bytes = f.content;
          filename = f.filename;
        } else if (!req.files.empty()) {
          bytes = req.files.begin()->second.content;
          filename = req.files.begin()->second.filename;
        } else {
          bytes.clear();
        }
      }
      Score s;
      try {
        const auto score = parse_midi(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
        s.roll = score_to_pianoroll(score, frame_rate()).roll;
      } catch (const Error& e) {
        return send_error(res, 400, e.name(), e.detail());
      }
      s.id = new_id();
      s.filename = filename;
      s.created_at = detail::utc_now();
      {
        std::unique_lock lock(scores_mutex_);
        scores_[s.id] = s;
        persist_score(s);
      }
      send_json(res, 200, score_json(s));
    });

    http_.Get("/api/scores", [this](const Request&, Response& res) {
      nlohmann::json out = nlohmann::json::array();
      std::shared_lock lock(scores_mutex_);
      for (const auto& [id, s] : scores_)
        out.push_back({{"id", id}, {"filename", s.filename}, {"created_at", s.created_at}});
      send_json(res, 200, out);
    });

    http_.Get(R"(/api/scores/([^/]+)/pianoroll)", [this](const Request& req, Response& res) {
      std::shared_lock lock(scores_mutex_);
      const auto it = scores_.find(req.matches[1]);
      if (it == scores_.end()) return send_error(res, 404, "NotFound", "unknown score id");
      send_json(res, 200, pianoroll_to_json(it->second.roll));
    });

    http_.Put(R"(/api/scores/([^/]+)/pianoroll)", [this](const Request& req, Response& res) {
      const std::string id = req.matches[1];
      {
        std::shared_lock lock(scores_mutex_);
        if (!scores_.count(id)) return send_error(res, 404, "NotFound", "unknown score id");
      }
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception& e) {
        return send_error(res, 400, "InvalidJson", e.what());
      }
      Pianoroll roll;
      try {
        roll = pianoroll_from_json(body);
      } catch (const InvalidPianoroll& e) {
        return send_error(res, 422, e.name(), e.detail());
      }
      std::unique_lock lock(scores_mutex_);
      auto it = scores_.find(id);
      if (it == scores_.end()) return send_error(res, 404, "NotFound", "unknown score id");
      it->second.roll = std::move(roll);
      persist_score(it->second);
      res.status = 204;
    });

    http_.Get("/api/instruments", [this](const Request&, Response& res) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& i : instruments()) out.push_back({{"label", i.label}, {"checkpoint_id", i.checkpoint_id}});
      send_json(res, 200, out);
    });

    http_.Post("/api/synthesize", [this](const Request& req, Response& res) {
      std::string score_id, label;
      try {
        const auto body = nlohmann::json::parse(req.body);
        score_id = body.at("score_id").get<std::string>();
        label = body.at("instrument_label").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        return send_error(res, 400, "InvalidJson", e.what());
      }
      const auto [model, checkpoint_id] = find_instrument(label);
      if (!model) return send_error(res, 404, "NotFound", "unknown instrument '" + label + "'");
      Pianoroll roll;
      {
        std::shared_lock lock(scores_mutex_);
        const auto it = scores_.find(score_id);
        if (it == scores_.end()) return send_error(res, 404, "NotFound", "unknown score id");
        roll = it->second.roll;
      }
      Job j;
      j.id = new_id();
      j.score_id = score_id;
      j.instrument_label = label;
      j.checkpoint_id = checkpoint_id;
      transition(j, JobState::queued);
      {
        std::lock_guard lock(jobs_mutex_);
        jobs_[j.id] = j;
        queue_.push_back({j.id, std::move(roll)});
        persist_job(j);
      }
      jobs_cv_.notify_all();
      send_json(res, 202, {{"job_id", j.id}});
    });

    http_.Get(R"(/api/jobs/([^/]+))", [this](const Request& req, Response& res) {
      std::lock_guard lock(jobs_mutex_);
      const auto it = jobs_.find(req.matches[1]);
      if (it == jobs_.end()) return send_error(res, 404, "NotFound", "unknown job id");
      send_json(res, 200, job_json(it->second));
    });

    http_.Get(R"(/api/jobs/([^/]+)/audio)", [this](const Request& req, Response& res) {
      std::lock_guard lock(jobs_mutex_);
      const auto it = jobs_.find(req.matches[1]);
      if (it == jobs_.end()) return send_error(res, 404, "NotFound", "unknown job id");
      if (it->second.state != JobState::done)
        return send_error(res, 409, "NotReady", "job is " + to_string(it->second.state));
      res.status = 200;
      res.set_content(std::string(it->second.audio.begin(), it->second.audio.end()), "audio/wav");
    });
  }

  struct Pending {
    std::string job_id;
    Pianoroll roll;
  };

  ServiceConfig config_;
  std::vector<LoadedModel> models_;
  httplib::Server http_;
  std::thread listener_;
  std::vector<std::thread> workers_;
  int port_ = 0;

  mutable std::shared_mutex scores_mutex_;
  std::map<std::string, Score> scores_;

  std::mutex jobs_mutex_;
  std::condition_variable jobs_cv_;
  std::map<std::string, Job> jobs_;
  std::deque<Pending> queue_;
  bool stopping_ = false;
  bool paused_ = false;

  std::mutex id_mutex_;
  std::mt19937_64 id_rng_{std::random_device{}() ^ static_cast<std::uint64_t>(
                                                       std::chrono::steady_clock::now().time_since_epoch().count())};
};

}  // namespace perfnet::service
