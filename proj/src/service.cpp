#include "blocksr/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "blocksr/codec.hpp"
#include "blocksr/error.hpp"
#include "blocksr/pipeline.hpp"
#include "blocksr/png_io.hpp"
#include "blocksr/ranges.hpp"
#include "blocksr/search.hpp"

namespace blocksr {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Session {
  std::string id;
  BlockAverageImage source;
  std::optional<RasterImage> reference;
  PipelineSpec pipeline;
  std::string pipeline_text;
  std::uint64_t version = 0;
  std::chrono::system_clock::time_point created;
};

struct SessionEntry {
  std::shared_ptr<const Session> snapshot;
  Clock::time_point last_access;
};

struct Run {
  std::mutex mutex;
  std::string status = "running";
  std::vector<TraceRow> trace;
  std::string spec_text;
  std::string error;
  std::atomic<bool> cancel{false};
};

struct CachedBody {
  std::string body;
  std::string content_type;
};

/// Error carrying an HTTP status, raised by request validation.
class HttpError : public std::runtime_error {
 public:
  HttpError(int status, const std::string& message, std::string field = {})
      : std::runtime_error(message), status_(status), field_(std::move(field)) {}
  int status() const noexcept { return status_; }
  const std::string& field() const noexcept { return field_; }

 private:
  int status_;
  std::string field_;
};

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSyntax:
    case ErrorCode::kBadMagic:
    case ErrorCode::kTruncated:
    case ErrorCode::kInvalidHeader:
      return 400;
    case ErrorCode::kIo:
      return 500;
    default:
      return 422;
  }
}

void send_error(httplib::Response& res, int status, const std::string& message,
                const std::string& field = {}) {
  json body{{"error", message}};
  if (!field.empty()) body["field"] = field;
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

std::string random_id() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  std::ostringstream out;
  out << std::hex;
  for (int i = 0; i < 2; ++i) {
    out.width(16);
    out.fill('0');
    out << rng();
  }
  return out.str();
}

json pipeline_json(const Session& s) {
  json stages = json::array();
  for (const Stage& stage : s.pipeline.stages) stages.push_back(serialize_stage(stage));
  return {{"name", s.pipeline.name}, {"stages", stages}, {"gamma", s.pipeline.gamma()}};
}

json objective_json(const ObjectiveBreakdown& o) {
  return {{"fidelity", o.fidelity}, {"R", o.regularizer}, {"total", o.total}};
}

std::string param(const httplib::Request& req, const std::string& key, const std::string& fallback) {
  return req.has_param(key) ? req.get_param_value(key) : fallback;
}

template <typename T>
T json_field(const json& body, const char* key, T fallback) {
  if (!body.contains(key)) return fallback;
  try {
    return body.at(key).get<T>();
  } catch (const json::exception&) {
    throw HttpError(400, std::string(key) + " has the wrong type", key);
  }
}

SearchConfig search_config(const json& body) {
  SearchConfig cfg;
  cfg.lambda = json_field(body, "lambda", cfg.lambda);
  cfg.threshold = json_field(body, "threshold", cfg.threshold);
  cfg.max_occurrences = json_field(body, "max_occurrences", cfg.max_occurrences);
  cfg.min_relative_improvement =
      json_field(body, "min_relative_improvement", cfg.min_relative_improvement);
  cfg.p_values = json_field(body, "p_values", cfg.p_values);
  if (body.contains("p_step")) {
    const int step = json_field(body, "p_step", 5);
    if (step <= 0) throw HttpError(422, "p_step must be positive", "p_step");
    cfg.p_values = int_range(0, 255, step);
  }
  for (const auto& t : json_field(body, "triples", std::vector<std::array<int, 3>>{})) {
    cfg.triples.push_back({t[0], t[1], t[2]});
  }
  cfg.gammas = json_field(body, "gammas", cfg.gammas);
  cfg.lengths = json_field(body, "lengths", cfg.lengths);
  cfg.thetas = json_field(body, "thetas", cfg.thetas);
  cfg.amounts = json_field(body, "amounts", cfg.amounts);
  if (body.contains("sources")) {
    cfg.sources.clear();
    for (const auto& s : json_field(body, "sources", std::vector<std::string>{})) {
      const auto v = parse_source(s);
      if (!v) throw HttpError(422, "unknown source '" + s + "'", "sources");
      cfg.sources.push_back(*v);
    }
  }
  if (body.contains("noises")) {
    cfg.noises.clear();
    for (const auto& s : json_field(body, "noises", std::vector<std::string>{})) {
      const auto v = parse_noise(s);
      if (!v) throw HttpError(422, "unknown noise mode '" + s + "'", "noises");
      cfg.noises.push_back(*v);
    }
  }
  return cfg;
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  httplib::Server server;

  std::mutex sessions_mutex;
  std::map<std::string, SessionEntry> sessions;
  std::atomic<std::uint64_t> next_version{1};

  std::mutex runs_mutex;
  std::map<std::string, std::shared_ptr<Run>> runs;
  std::vector<std::thread> workers;

  std::mutex cache_mutex;
  std::map<std::string, CachedBody> cache;
  static constexpr std::size_t kCacheLimit = 128;

  explicit Impl(ServiceOptions opts) : options(std::move(opts)) {
    if (options.preset_dir.empty()) options.preset_dir = default_preset_dir();
    server.set_payload_max_length(options.max_upload);
    routes();
  }

  ~Impl() {
    server.stop();
    {
      std::lock_guard lock(runs_mutex);
      for (auto& [id, run] : runs) run->cancel = true;
    }
    for (std::thread& t : workers) t.join();
  }

  std::shared_ptr<const Session> lookup(const std::string& id) {
    std::lock_guard lock(sessions_mutex);
    const auto now = Clock::now();
    std::erase_if(sessions, [&](const auto& kv) {
      return now - kv.second.last_access > options.ttl;
    });
    const auto it = sessions.find(id);
    if (it == sessions.end()) throw HttpError(404, "unknown session '" + id + "'");
    it->second.last_access = now;
    return it->second.snapshot;
  }

  void store(std::shared_ptr<Session> s) {
    s->version = next_version++;
    const std::string id = s->id;
    std::lock_guard lock(sessions_mutex);
    sessions[id] = {std::move(s), Clock::now()};
  }

  template <typename F>
  void cached(const httplib::Request& req, httplib::Response& res, const Session& s, F&& compute) {
    std::string key = s.id + '#' + std::to_string(s.version) + '#' + req.path;
    for (const auto& [k, v] : req.params) key += '&' + k + '=' + v;
    {
      std::lock_guard lock(cache_mutex);
      if (const auto it = cache.find(key); it != cache.end()) {
        res.set_content(it->second.body, it->second.content_type);
        return;
      }
    }
    CachedBody body = compute();
    res.set_content(body.body, body.content_type);
    std::lock_guard lock(cache_mutex);
    if (cache.size() >= kCacheLimit) cache.clear();
    cache.emplace(std::move(key), std::move(body));
  }

  template <typename F>
  httplib::Server::Handler guarded(F&& handler) {
    return [handler = std::forward<F>(handler)](const httplib::Request& req,
                                                httplib::Response& res) {
      try {
        handler(req, res);
      } catch (const HttpError& e) {
        send_error(res, e.status(), e.what(), e.field());
      } catch (const ParseError& e) {
        send_error(res, status_for(e.code()), e.what(), e.field());
      } catch (const Error& e) {
        send_error(res, status_for(e.code()), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  }

  void routes() {
    server.Post("/sessions", guarded([this](const auto& req, auto& res) { create_session(req, res); }));
    server.Get("/sessions/:id/preview", guarded([this](const auto& req, auto& res) { preview(req, res); }));
    server.Get("/sessions/:id/sweep", guarded([this](const auto& req, auto& res) { sweep_grid(req, res); }));
    server.Get("/sessions/:id/pipeline", guarded([this](const auto& req, auto& res) {
      const auto s = lookup(req.path_params.at("id"));
      res.set_content(s->pipeline_text, "text/plain");
    }));
    server.Put("/sessions/:id/pipeline", guarded([this](const auto& req, auto& res) { put_pipeline(req, res); }));
    server.Post("/sessions/:id/pipeline/stages",
                guarded([this](const auto& req, auto& res) { append_stages(req, res); }));
    server.Post("/sessions/:id/search", guarded([this](const auto& req, auto& res) { start_search(req, res); }));
    server.Get("/runs/:id", guarded([this](const auto& req, auto& res) { run_status(req, res); }));
    server.Delete("/runs/:id", guarded([this](const auto& req, auto& res) {
      find_run(req.path_params.at("id"))->cancel = true;
      res.status = 202;
      res.set_content(json{{"status", "cancelling"}}.dump(), "application/json");
    }));
    server.Get("/presets", guarded([this](const auto&, auto& res) {
      res.set_content(json{{"presets", list_presets(options.preset_dir)}}.dump(), "application/json");
    }));
    server.Get("/presets/:name", guarded([this](const auto& req, auto& res) {
      const std::string name = req.path_params.at("name");
      std::filesystem::path path;
      try {
        path = preset_path(options.preset_dir, name);
      } catch (const Error&) {
        throw HttpError(404, "unknown preset '" + name + "'");
      }
      if (!std::filesystem::is_regular_file(path)) throw HttpError(404, "unknown preset '" + name + "'");
      res.set_content(read_text_file(path), "text/plain");
    }));
    if (!options.ui_dir.empty() && !server.set_mount_point("/", options.ui_dir.string())) {
      throw Error(ErrorCode::kIo, "cannot serve UI directory " + options.ui_dir.string());
    }
  }

  void create_session(const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) {
      throw HttpError(400, "expected multipart/form-data with an 'image' or 'lab' part");
    }
    auto session = std::make_shared<Session>();
    session->id = random_id();
    session->created = std::chrono::system_clock::now();
    // Each part is copied out of the request (get_file_value returns by value).
    const auto bytes = [&](const char* part) {
      const std::string c = req.get_file_value(part).content;
      return std::vector<std::uint8_t>(c.begin(), c.end());
    };
    const auto png = [&](const char* part) {
      try {
        return decode_png(bytes(part));
      } catch (const Error& e) {
        throw HttpError(400, std::string(part) + ": " + e.what(), part);
      }
    };
    if (req.has_file("lab")) {
      session->source = decode_lab(bytes("lab"));
    } else if (req.has_file("image")) {
      int step = 4;
      if (req.has_file("step")) {
        const std::string text = req.get_file_value("step").content;
        try {
          step = std::stoi(text);
        } catch (const std::exception&) {
          throw HttpError(400, "step must be an integer", "step");
        }
      }
      if (step < 2 || step > 4) throw HttpError(422, "step must be 2, 3 or 4", "step");
      session->source = BlockAverageImage::from_grid(png("image"), step);
    } else {
      throw HttpError(400, "missing 'image' or 'lab' part", "image");
    }
    if (req.has_file("reference")) {
      RasterImage ref = png("reference");
      if (ref.width() != session->source.orig_width || ref.height() != session->source.orig_height ||
          ref.channels() != session->source.channels) {
        throw HttpError(422, "reference must be " + std::to_string(session->source.orig_width) + "x" +
                                 std::to_string(session->source.orig_height) + " with " +
                                 std::to_string(session->source.channels) + " channel(s)",
                        "reference");
      }
      session->reference = std::move(ref);
    }
    session->pipeline.name = "session";
    session->pipeline_text = serialize(session->pipeline);
    const Session& s = *session;
    json body{{"id", s.id},
              {"width", s.source.orig_width},
              {"height", s.source.orig_height},
              {"channels", s.source.channels},
              {"step", s.source.step},
              {"has_reference", s.reference.has_value()}};
    store(std::move(session));
    res.status = 201;
    res.set_content(body.dump(), "application/json");
  }

  // Output of the first `upto` stages (all by default).
  static RasterImage render(const Session& s, std::size_t upto) {
    PipelineSpec prefix{s.pipeline.name, {}};
    prefix.stages.assign(s.pipeline.stages.begin(),
                         s.pipeline.stages.begin() + std::min(upto, s.pipeline.stages.size()));
    return run_stages(prefix, expand(s.source), s.source.step);
  }

  static std::size_t stage_count(const httplib::Request& req, const Session& s) {
    if (!req.has_param("stages")) return s.pipeline.stages.size();
    const auto v = parse_int_list(req.get_param_value("stages"), "stages");
    if (v.size() != 1 || v[0] < 0) throw HttpError(422, "stages must be a nonnegative count", "stages");
    return static_cast<std::size_t>(v[0]);
  }

  void preview(const httplib::Request& req, httplib::Response& res) {
    const auto s = lookup(req.path_params.at("id"));
    const std::size_t upto = stage_count(req, *s);
    cached(req, res, *s, [&] {
      const auto png = encode_png(render(*s, upto));
      return CachedBody{std::string(png.begin(), png.end()), "image/png"};
    });
  }

  void sweep_grid(const httplib::Request& req, httplib::Response& res) {
    const auto s = lookup(req.path_params.at("id"));
    const std::vector<int> lengths = parse_int_list(param(req, "L", "0..20"), "L");
    const std::vector<int> thetas = parse_int_list(param(req, "theta", "0..175"), "theta", 5);
    const std::vector<double> gamma = parse_real_list(param(req, "gamma", "1"), "gamma");
    if (gamma.size() != 1) throw HttpError(422, "gamma takes a single value", "gamma");
    DeconvSettings fixed;
    const std::string src = param(req, "source", "DVC");
    const std::string noise = param(req, "noise", "NO");
    if (!parse_source(src)) throw HttpError(422, "unknown source '" + src + "'", "source");
    if (!parse_noise(noise)) throw HttpError(422, "unknown noise mode '" + noise + "'", "noise");
    fixed.source = *parse_source(src);
    fixed.noise = *parse_noise(noise);
    const std::string quality = param(req, "quality", "fast");
    if (quality != "fast" && quality != "full") {
      throw HttpError(422, "quality must be fast or full", "quality");
    }
    const auto amount = parse_int_list(param(req, "amount", quality == "fast" ? "25" : "100"), "amount");
    if (amount.size() != 1) throw HttpError(422, "amount takes a single value", "amount");
    fixed.amount = amount[0];
    const auto lambda = parse_real_list(param(req, "lambda", "0.1"), "lambda");
    if (lambda.size() != 1 || !(lambda[0] >= 0)) throw HttpError(422, "lambda must be >= 0", "lambda");
    DeconvSettings probe = fixed;
    probe.gamma = gamma[0];
    probe.validate();
    for (int l : lengths) {
      probe.length = l;
      probe.validate();
    }
    probe.length = 0;
    for (int t : thetas) {
      probe.theta = t;
      probe.validate();
    }
    const std::size_t upto = stage_count(req, *s);

    cached(req, res, *s, [&] {
      CellScorer scorer;
      if (s->reference) {
        scorer = [&](const RasterImage& img) { return objective(img, *s->reference, lambda[0]).total; };
      }
      const SweepGrid grid = sweep(render(*s, upto), gamma[0], lengths, thetas, fixed, scorer);
      json cells = json::array();
      for (std::size_t r = 0; r < grid.lengths.size(); ++r) {
        for (std::size_t c = 0; c < grid.thetas.size(); ++c) {
          const SweepCell& cell = grid.cell(r, c);
          const auto png = encode_png(cell.preview);
          json j{{"row", r},
                 {"col", c},
                 {"L", cell.length},
                 {"theta", cell.theta},
                 {"label", "L=" + std::to_string(cell.length) + " theta=" + std::to_string(cell.theta)},
                 {"stage", serialize_stage(Deconvolve{[&] {
                    DeconvSettings d = fixed;
                    d.length = cell.length;
                    d.theta = cell.theta;
                    return d;
                  }()})},
                 {"png", httplib::detail::base64_encode(std::string(png.begin(), png.end()))}};
          if (cell.objective) j["objective"] = *cell.objective;
          cells.push_back(std::move(j));
        }
      }
      json body{{"gamma", gamma[0]},
                {"source", to_string(fixed.source)},
                {"amount", fixed.amount},
                {"noise", to_string(fixed.noise)},
                {"lengths", grid.lengths},
                {"thetas", grid.thetas},
                {"rows", grid.lengths.size()},
                {"cols", grid.thetas.size()},
                {"cells", std::move(cells)}};
      return CachedBody{body.dump(), "application/json"};
    });
  }

  void put_pipeline(const httplib::Request& req, httplib::Response& res) {
    const auto s = lookup(req.path_params.at("id"));
    PipelineSpec spec = parse_pipeline(req.body);
    if (spec.name.empty()) spec.name = s->pipeline.name;
    auto next = std::make_shared<Session>(*s);
    next->pipeline = std::move(spec);
    next->pipeline_text = req.body;
    const json body = pipeline_json(*next);
    store(std::move(next));
    res.set_content(body.dump(), "application/json");
  }

  void append_stages(const httplib::Request& req, httplib::Response& res) {
    const auto s = lookup(req.path_params.at("id"));
    PipelineSpec spec = s->pipeline;
    std::istringstream lines(req.body);
    std::string line;
    int number = 0;
    while (std::getline(lines, line)) {
      ++number;
      const std::string_view text = std::string_view(line).substr(0, line.find('#'));
      if (text.find_first_not_of(" \t\r") == std::string_view::npos) continue;
      spec.stages.push_back(parse_stage(text, number));
    }
    if (spec.stages.size() == s->pipeline.stages.size()) throw HttpError(400, "no stage given");
    spec.validate();
    auto next = std::make_shared<Session>(*s);
    next->pipeline = std::move(spec);
    next->pipeline_text = serialize(next->pipeline);
    const json body = pipeline_json(*next);
    store(std::move(next));
    res.set_content(body.dump(), "application/json");
  }

  std::shared_ptr<Run> find_run(const std::string& id) {
    std::lock_guard lock(runs_mutex);
    const auto it = runs.find(id);
    if (it == runs.end()) throw HttpError(404, "unknown run '" + id + "'");
    return it->second;
  }

  void start_search(const httplib::Request& req, httplib::Response& res) {
    const auto s = lookup(req.path_params.at("id"));
    if (!s->reference) throw HttpError(422, "session has no reference image", "reference");
    json body = json::object();
    if (!req.body.empty()) {
      body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object()) throw HttpError(400, "body must be a JSON object");
    }
    const SearchConfig cfg = search_config(body);
    cfg.validate();

    auto run = std::make_shared<Run>();
    const std::string id = random_id();
    std::lock_guard lock(runs_mutex);
    runs[id] = run;
    workers.emplace_back([run, s, cfg] {
      try {
        const SearchState final_state =
            optimize(s->source, *s->reference, cfg, [&run](const SearchState& state) {
              std::lock_guard l(run->mutex);
              run->trace = state.trace;
              run->spec_text = serialize(state.spec);
              return !run->cancel.load();
            });
        std::lock_guard l(run->mutex);
        run->trace = final_state.trace;
        run->spec_text = serialize(final_state.spec);
        run->status = final_state.cancelled ? "cancelled" : "done";
      } catch (const std::exception& e) {
        std::lock_guard l(run->mutex);
        run->status = "failed";
        run->error = e.what();
      }
    });
    res.status = 202;
    res.set_content(json{{"run_id", id}}.dump(), "application/json");
  }

  void run_status(const httplib::Request& req, httplib::Response& res) {
    const auto run = find_run(req.path_params.at("id"));
    std::lock_guard lock(run->mutex);
    json trace = json::array();
    for (const TraceRow& row : run->trace) {
      json j = objective_json(row.objective);
      j["iteration"] = row.iteration;
      trace.push_back(std::move(j));
    }
    json body{{"status", run->status}, {"trace", std::move(trace)}, {"spec", run->spec_text}};
    if (!run->error.empty()) body["error"] = run->error;
    res.set_content(body.dump(), "application/json");
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() = default;

int Service::bind() {
  const int port = impl_->options.port == 0
                       ? impl_->server.bind_to_any_port(impl_->options.host)
                       : (impl_->server.bind_to_port(impl_->options.host, impl_->options.port)
                              ? impl_->options.port
                              : -1);
  if (port < 0) {
    throw Error(ErrorCode::kIo, "cannot listen on " + impl_->options.host + ":" +
                                    std::to_string(impl_->options.port));
  }
  return port;
}

void Service::serve() { impl_->server.listen_after_bind(); }

void Service::stop() { impl_->server.stop(); }

}  // namespace blocksr
