#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "fairsample/annealer.hpp"
#include "fairsample/io.hpp"
#include "fairsample/perturbation.hpp"
#include "fairsample/quantum.hpp"

namespace fairsample {

namespace fs = std::filesystem;

/// Git blob id: SHA-1 over "blob <size>\0" followed by the content.
inline std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  require(ctx != nullptr, ErrorKind::io, "cannot allocate hash context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 && EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  require(ok, ErrorKind::io, "SHA-1 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[digest[k] >> 4];
    out += hex[digest[k] & 15];
  }
  return out;
}

enum class ExperimentKind { gen, mine, enumerate, trace, sensitivity, driver_study, mc_sampling, find_showcase };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::gen: return "gen";
    case ExperimentKind::mine: return "mine";
    case ExperimentKind::enumerate: return "enumerate";
    case ExperimentKind::trace: return "trace";
    case ExperimentKind::sensitivity: return "sensitivity";
    case ExperimentKind::driver_study: return "driver-study";
    case ExperimentKind::mc_sampling: return "mc-sampling";
    case ExperimentKind::find_showcase: return "find-showcase";
  }
  return "unknown";
}

/// Accepts both the CLI spelling (driver-study) and the config spelling (driver_study).
inline ExperimentKind experiment_kind_from_string(std::string s) {
  std::replace(s.begin(), s.end(), '_', '-');
  for (auto k : {ExperimentKind::gen, ExperimentKind::mine, ExperimentKind::enumerate, ExperimentKind::trace,
                 ExperimentKind::sensitivity, ExperimentKind::driver_study, ExperimentKind::mc_sampling,
                 ExperimentKind::find_showcase})
    if (to_string(k) == s) return k;
  throw Error(ErrorKind::config, "unknown experiment kind '" + s + "'");
}

/// One JSON document per experiment. `body` is the fully resolved document: seed and out
/// filled in, relative paths made absolute. It is what records echo, and it parses back to
/// an identical config.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::gen;
  std::uint64_t seed = 0;
  fs::path out;
  json body;
};

struct ConfigOverrides {
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
};

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("config field '") + key + "': " + e.what());
  }
}

template <class T>
T get_required(const json& j, const char* key) {
  require(j.contains(key) && !j[key].is_null(), ErrorKind::config, std::string("missing config field '") + key + "'");
  return get_or<T>(j, key, T{});
}

inline void resolve_path(json& j, const char* key, const fs::path& base) {
  if (j.contains(key) && j[key].is_string()) {
    fs::path p = j[key].get<std::string>();
    if (p.is_relative()) p = base / p;
    j[key] = fs::weakly_canonical(p).string();
  }
}

inline void resolve_paths(json& body, const fs::path& base) {
  for (const char* key : {"instance", "instance_dir"}) resolve_path(body, key, base);
  if (body.contains("instances") && body["instances"].is_array())
    for (auto& p : body["instances"])
      if (p.is_string() && fs::path(p.get<std::string>()).is_relative())
        p = fs::weakly_canonical(base / p.get<std::string>()).string();
}

inline void require_fields(const json& body, std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    require(body.contains(k) && !body[k].is_null(), ErrorKind::config, std::string("missing config field '") + k + "'");
}

}  // namespace detail

/// Validates kind-specific fields. Flag overrides win over file values; relative paths are
/// resolved against base_dir.
inline ExperimentConfig parse_config(json body, std::optional<ExperimentKind> cli_kind = std::nullopt,
                                     const ConfigOverrides& overrides = {}, const fs::path& base_dir = fs::current_path()) {
  require(body.is_object(), ErrorKind::config, "config must be a JSON object");
  ExperimentConfig cfg;
  if (cli_kind) {
    if (body.contains("kind"))
      require(experiment_kind_from_string(body["kind"].get<std::string>()) == *cli_kind, ErrorKind::config,
              "config kind does not match the subcommand");
    cfg.kind = *cli_kind;
  } else {
    cfg.kind = experiment_kind_from_string(detail::get_required<std::string>(body, "kind"));
  }
  body["kind"] = std::string(to_string(cfg.kind));
  if (overrides.seed) body["seed"] = *overrides.seed;
  require(body.contains("seed") && body["seed"].is_number_integer() &&
              (body["seed"].is_number_unsigned() || body["seed"].get<std::int64_t>() >= 0),
          ErrorKind::config,
          "a non-negative integer seed is mandatory (config 'seed' or --seed)");
  cfg.seed = body["seed"].get<std::uint64_t>();
  if (overrides.out) body["out"] = overrides.out->string();
  fs::path out = detail::get_or<std::string>(body, "out", "out");
  if (out.is_relative()) out = base_dir / out;
  cfg.out = fs::weakly_canonical(out);
  body["out"] = cfg.out.string();
  detail::resolve_paths(body, base_dir);

  const bool has_instance = body.contains("instance") || body.contains("generator");
  switch (cfg.kind) {
    case ExperimentKind::gen: detail::require_fields(body, {"L"}); break;
    case ExperimentKind::mine: detail::require_fields(body, {"L", "degeneracy", "count"}); break;
    case ExperimentKind::enumerate:
    case ExperimentKind::trace:
      require(has_instance, ErrorKind::config, "an 'instance' or 'generator' entry is required");
      break;
    case ExperimentKind::sensitivity:
      require(has_instance, ErrorKind::config, "an 'instance' or 'generator' entry is required");
      detail::require_fields(body, {"coupler", "values"});
      break;
    case ExperimentKind::driver_study: detail::require_fields(body, {"n_spins"}); break;
    case ExperimentKind::mc_sampling:
      require(body.contains("instances") || body.contains("instance_dir") || body.contains("mine"), ErrorKind::config,
              "mc-sampling needs 'instances', 'instance_dir' or 'mine'");
      break;
    case ExperimentKind::find_showcase: detail::require_fields(body, {"pattern"}); break;
  }
  cfg.body = std::move(body);
  return cfg;
}

inline ExperimentConfig load_config(const fs::path& path, std::optional<ExperimentKind> cli_kind = std::nullopt,
                                    const ConfigOverrides& overrides = {}) {
  json body;
  try {
    body = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::config, "cannot parse " + path.string() + ": " + e.what());
  }
  const auto base = path.has_parent_path() ? path.parent_path() : fs::current_path();
  return parse_config(std::move(body), cli_kind, overrides, fs::absolute(base));
}

struct OutputFile {
  std::string path;  // relative to the output directory
  std::string sha1;
  std::uintmax_t bytes = 0;
};

struct ResultRecord {
  std::string kind;
  json config;
  std::string input_hash;
  std::vector<OutputFile> outputs;
  double wall_time_s = 0.0;
  json summary;
};

inline json record_to_json(const ResultRecord& r) {
  json outs = json::array();
  for (const auto& o : r.outputs) outs.push_back({{"path", o.path}, {"sha1", o.sha1}, {"bytes", o.bytes}});
  return {{"kind", r.kind},       {"config", r.config},       {"input_hash", r.input_hash},
          {"outputs", outs},      {"wall_time_s", r.wall_time_s}, {"summary", r.summary}};
}

namespace detail {

// Collects outputs and the inputs that feed the record hash.
class Session {
 public:
  explicit Session(const ExperimentConfig& cfg) : cfg_(cfg), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(cfg.out);
    inputs_ = cfg.body.dump();
  }

  const ExperimentConfig& cfg() const { return cfg_; }
  const json& body() const { return cfg_.body; }

  void add_input(std::string_view content) {
    inputs_ += '\n';
    inputs_ += content;
  }

  void write(const std::string& rel, const std::string& content) {
    write_text_atomic(cfg_.out / rel, content);
    outputs_.push_back({rel, git_blob_sha1(content), content.size()});
  }
  void write(const std::string& rel, const json& j) { write(rel, j.dump(2) + "\n"); }

  ResultRecord finish(json summary) {
    ResultRecord r;
    r.kind = std::string(to_string(cfg_.kind));
    r.config = cfg_.body;
    r.input_hash = git_blob_sha1(inputs_);
    r.outputs = outputs_;
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    r.summary = std::move(summary);
    write_json(cfg_.out / "record.json", record_to_json(r));
    return r;
  }

 private:
  ExperimentConfig cfg_;
  std::chrono::steady_clock::time_point start_;
  std::string inputs_;
  std::vector<OutputFile> outputs_;
};

inline std::vector<double> coupler_values(const json& body) {
  if (!body.contains("values") || !body["values"].is_array()) return default_coupler_values();
  return body["values"].get<std::vector<double>>();
}

// "instance": path or inline object; "generator": {L, seed?, values?}.
inline ProblemInstance load_instance_entry(Session& s, const json& body) {
  if (body.contains("instance")) {
    const auto& e = body["instance"];
    if (e.is_string()) {
      const auto text = read_text(e.get<std::string>());
      s.add_input(text);
      try {
        return instance_from_json(json::parse(text));
      } catch (const json::parse_error& err) {
        throw Error(ErrorKind::io, "cannot parse " + e.get<std::string>() + ": " + err.what());
      }
    }
    s.add_input(e.dump());
    return instance_from_json(e);
  }
  const auto& g = body.at("generator");
  return generate_lattice_instance(get_required<int>(g, "L"), coupler_values(g),
                                   get_or<std::uint64_t>(g, "seed", s.cfg().seed));
}

// Config "label" wins over the instance file's metadata.label.
inline std::optional<std::string> instance_label(const json& body) {
  if (body.contains("label")) return get_required<std::string>(body, "label");
  if (body.contains("instance") && body["instance"].is_string()) {
    const auto j = read_json(body["instance"].get<std::string>());
    if (j.contains("metadata") && j["metadata"].is_object() && j["metadata"].contains("label"))
      return j["metadata"]["label"].get<std::string>();
  }
  return std::nullopt;
}

inline DriverSign sign_from(const json& d) {
  const auto s = get_or<std::string>(d, "sign", "stoquastic");
  if (s == "stoquastic") return DriverSign::stoquastic;
  if (s == "raw") return DriverSign::raw;
  throw Error(ErrorKind::config, "driver sign must be 'stoquastic' or 'raw'");
}

// Named driver variants from a "driver" entry: {"orders": [..], "gamma": g} or
// {"amplitudes": [..]} or {"terms": [[mask, amplitude], ...]}.
inline std::vector<std::pair<std::string, DriverSpec>> drivers_from(const json& body, std::vector<int> default_orders) {
  const json d = body.contains("driver") ? body["driver"] : json::object();
  const auto sign = sign_from(d);
  std::vector<std::pair<std::string, DriverSpec>> out;
  if (d.contains("terms")) {
    std::vector<DriverTerm> terms;
    for (const auto& t : d["terms"]) terms.push_back({t.at(0).get<Word>(), t.at(1).get<double>()});
    out.emplace_back("custom", DriverSpec::explicit_terms(terms, sign));
  } else if (d.contains("amplitudes")) {
    const auto amps = d["amplitudes"].get<std::vector<double>>();
    out.emplace_back("n" + std::to_string(amps.size()), DriverSpec::all_subsets(amps, sign));
  } else {
    const auto orders = get_or<std::vector<int>>(d, "orders", default_orders);
    const double gamma = get_or<double>(d, "gamma", 1.0);
    for (int n : orders) out.emplace_back("n" + std::to_string(n), DriverSpec::uniform(n, gamma, sign));
  }
  return out;
}

inline json probabilities_json(const std::vector<SpinConfig>& states, const std::vector<double>& p, int n) {
  json j = json::object();
  for (std::size_t i = 0; i < states.size() && i < p.size(); ++i) j[to_bitstring(states[i], n)] = p[i];
  return j;
}

// Prediction folded onto the trace's columns when the trace is gauge-reduced.
inline std::pair<std::vector<SpinConfig>, std::vector<double>> prediction_columns(const SamplingPrediction& pred, bool gauge) {
  if (gauge) return fold_gauge(pred);
  return {pred.basis, pred.probabilities};
}

inline json prediction_json(const SamplingPrediction& pred, bool gauge) {
  const auto [states, p] = prediction_columns(pred, gauge);
  return {{"order", std::string(to_string(pred.order))},
          {"category", std::string(to_string(pred.category))},
          {"multiplicity", pred.multiplicity},
          {"probabilities", probabilities_json(states, p, pred.n_spins)}};
}

inline std::string pad(std::size_t k, int width = 3) {
  auto s = std::to_string(k);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

}  // namespace detail

inline ResultRecord run_gen(const ExperimentConfig& cfg) {
  detail::Session s(cfg);
  const auto& b = cfg.body;
  const auto inst = generate_lattice_instance(detail::get_required<int>(b, "L"), detail::coupler_values(b), cfg.seed);
  s.write("instance.json", instance_to_json(inst));
  return s.finish({{"n_spins", inst.n_spins()}, {"couplers", inst.couplers().size()}});
}

inline ResultRecord run_mine(const ExperimentConfig& cfg) {
  detail::Session s(cfg);
  const auto& b = cfg.body;
  const int L = detail::get_required<int>(b, "L");
  const int degeneracy = detail::get_required<int>(b, "degeneracy");
  const int count = detail::get_required<int>(b, "count");
  const auto attempts = detail::get_or<std::uint64_t>(b, "max_attempts", 1000000);
  const auto values = detail::coupler_values(b);
  const auto r = mine_instances(L, degeneracy, count, attempts, cfg.seed, values);
  json files = json::array();
  for (std::size_t k = 0; k < r.instances.size(); ++k) {
    const auto rel = "instances/mined_" + detail::pad(k) + ".json";
    s.write(rel, instance_to_json(r.instances[k]));
    files.push_back({{"path", rel}, {"seed", r.seeds[k]}});
  }
  const json index = {{"L", L},           {"degeneracy", degeneracy}, {"requested", count},
                      {"found", r.instances.size()}, {"attempts", r.attempts}, {"exhausted", r.exhausted},
                      {"instances", files}};
  s.write("mined.json", index);
  return s.finish({{"found", r.instances.size()}, {"attempts", r.attempts}, {"exhausted", r.exhausted}});
}

inline ResultRecord run_enumerate(const ExperimentConfig& cfg) {
  detail::Session s(cfg);
  const auto inst = detail::load_instance_entry(s, cfg.body);
  const bool gauge = detail::get_or<bool>(cfg.body, "gauge", false);
  const auto gs = enumerate_ground_states(inst, gauge);
  s.write("ground_states.json", ground_states_to_json(gs));
  return s.finish({{"n_spins", inst.n_spins()}, {"energy", gs.energy}, {"count", gs.size()}, {"gauge", gauge}});
}

/// One trace per driver; columns are gauge-reduced iff the instance has no fields. The
/// summary carries the perturbative prediction for each driver next to the final state.
inline ResultRecord run_trace(const ExperimentConfig& cfg) {
  detail::Session s(cfg);
  const auto& b = cfg.body;
  const auto inst = detail::load_instance_entry(s, b);
  const double T = detail::get_or<double>(b, "T", 100.0);
  AnnealOptions opts;
  opts.record_points = detail::get_or<int>(b, "record_points", 101);
  opts.tolerance = detail::get_or<double>(b, "tolerance", 1e-6);
  const auto drivers = detail::drivers_from(b, {1, 2});
  const auto gs = enumerate_ground_states(inst);

  std::vector<AnnealTrace> traces(drivers.size());
  parallel_for(drivers.size(), [&](std::size_t k) { traces[k] = integrate_anneal(inst, drivers[k].second, T, opts); });

  json runs = json::array();
  for (std::size_t k = 0; k < drivers.size(); ++k) {
    const auto& [name, driver] = drivers[k];
    const auto& tr = traces[k];
    s.write("trace_" + name + ".csv", trace_to_csv(tr));
    s.write("trace_" + name + ".json", trace_sidecar(tr));
    const auto fd = final_distribution(tr);
    json run = {{"driver", name},
                {"T", T},
                {"gauge", tr.gauge},
                {"columns", tr.states.size()},
                {"p_total", fd.total_weight},
                {"max_norm_drift", tr.max_norm_drift},
                {"steps", tr.steps},
                {"final", detail::probabilities_json(fd.states, fd.probabilities, inst.n_spins())},
                {"final_category", std::string(to_string(classify_probabilities(fd.probabilities)))}};
    if (gs.size() >= 2) {
      const auto pred = predict_escalating(gs, driver, &inst);
      run["prediction"] = detail::prediction_json(pred, tr.gauge);
    }
    runs.push_back(run);
  }
  json summary = {{"n_spins", inst.n_spins()}, {"degeneracy", gs.size()}, {"runs", runs}};
  if (auto label = detail::instance_label(b)) summary["label"] = *label;
  return s.finish(summary);
}

/// Varies one coupler; the ground-state set must stay fixed and first order must vanish.
/// Writes the second-order prediction and the integrated final distribution per value.
inline ResultRecord run_sensitivity(const ExperimentConfig& cfg) {
  detail::Session s(cfg);
  const auto& b = cfg.body;
  const auto base = detail::load_instance_entry(s, b);
  const auto coupler = b.at("coupler").get<std::vector<int>>();
  require(coupler.size() == 2, ErrorKind::config, "'coupler' must be [i, j]");
  const auto values = b.at("values").get<std::vector<double>>();
  require(!values.empty(), ErrorKind::config, "'values' must be non-empty");
  const double T = detail::get_or<double>(b, "T", 250.0);
  AnnealOptions opts;
  opts.record_points = detail::get_or<int>(b, "record_points", 101);
  opts.tolerance = detail::get_or<double>(b, "tolerance", 1e-6);
  const auto drivers = detail::drivers_from(b, {1});
  require(drivers.size() == 1, ErrorKind::config, "sensitivity takes a single driver");
  const auto& driver = drivers.front().second;

  std::vector<ProblemInstance> instances;
  for (double v : values) instances.push_back(base.with_coupler(coupler[0], coupler[1], v));
  const auto reference = enumerate_ground_states(instances.front());
  require(reference.size() >= 2, ErrorKind::config, "instance must have a degenerate ground state");
  for (const auto& inst : instances)
    require(enumerate_ground_states(inst).states == reference.states, ErrorKind::config,
            "ground-state set changes across the coupler values");
  require(build_first_order_V(reference, driver).trivial(), ErrorKind::config,
          "first-order subspace matrix must be trivial for a sensitivity run");

  std::vector<AnnealTrace> traces(instances.size());
  parallel_for(instances.size(), [&](std::size_t k) { traces[k] = integrate_anneal(instances[k], driver, T, opts); });

  std::string csv = "value,state,p_predicted,p_integrated\n";
  json rows = json::array();
  for (std::size_t k = 0; k < instances.size(); ++k) {
    const auto& tr = traces[k];
    const auto pred = predict(build_second_order_V(reference, driver, instances[k]));
    const auto [states, predicted] = detail::prediction_columns(pred, tr.gauge);
    const auto fd = final_distribution(tr);
    double max_dp = 0.0;
    for (std::size_t c = 0; c < fd.states.size(); ++c) {
      const double p = predicted.empty() ? 0.0 : predicted[c];
      max_dp = std::max(max_dp, std::abs(p - fd.probabilities[c]));
      csv += format_double(values[k]) + ',' + to_bitstring(fd.states[c], base.n_spins()) + ',' + format_double(p) + ',' +
             format_double(fd.probabilities[c]) + '\n';
    }
    s.write("trace_value_" + detail::pad(k) + ".csv", trace_to_csv(tr));
    s.write("trace_value_" + detail::pad(k) + ".json", trace_sidecar(tr));
    rows.push_back({{"value", values[k]},
                    {"category", std::string(to_string(pred.category))},
                    {"max_abs_dp", max_dp},
                    {"p_total", fd.total_weight},
                    {"max_norm_drift", tr.max_norm_drift}});
  }
  s.write("sensitivity.csv", csv);
  json summary = {{"coupler", coupler}, {"T", T}, {"ground_states", reference.size()}, {"rows", rows}};
  if (auto label = detail::instance_label(b)) summary["label"] = *label;
  return s.finish(summary);
}

inline ResultRecord run_driver_study(const ExperimentConfig& cfg) {
  detail::Session s(cfg);
  const auto& b = cfg.body;
  std::vector<int> sizes;
  if (b["n_spins"].is_array())
    sizes = b["n_spins"].get<std::vector<int>>();
  else
    sizes = {b["n_spins"].get<int>()};
  const auto samples = detail::get_or<std::uint64_t>(b, "samples", 400);
  StudyOptions opts;
  opts.random_redraws = detail::get_or<int>(b, "random_redraws", 0);
  opts.amplitude_spread = detail::get_or<double>(b, "amplitude_spread", 0.5);

  std::string csv = study_csv_header();
  json cells = json::array();
  for (int n : sizes) {
    require(n >= 1 && n <= 62, ErrorKind::config, "n_spins must be in [1, 62]");
    const int max_k = n >= 5 ? 16 : (1 << n);
    std::vector<int> degeneracies(static_cast<std::size_t>(std::max(0, max_k - 1)));
    std::iota(degeneracies.begin(), degeneracies.end(), 2);
    degeneracies = detail::get_or<std::vector<int>>(b, "degeneracies", degeneracies);
    std::vector<int> orders(static_cast<std::size_t>(n));
    std::iota(orders.begin(), orders.end(), 1);
    if (b.contains("orders")) {
      orders.clear();
      for (int o : b["orders"].get<std::vector<int>>())
        if (o <= n) orders.push_back(o);
    }
    for (int k : degeneracies) {
      if (static_cast<double>(k) > std::ldexp(1.0, n)) continue;
      for (const auto& row : driver_study(n, k, orders, samples, cfg.seed, opts)) {
        csv += study_csv_row(row);
        cells.push_back({{"n_spins", n}, {"degeneracy", k}, {"driver_order", row.driver_order},
                         {"exhaustive", row.exhaustive}, {"hard_zero", row.hard_zero}, {"hard_ratio", row.hard_ratio}});
      }
    }
  }
  s.write("driver_study.csv", csv);
  s.write("driver_study_cells.json", cells);
  return s.finish({{"n_spins", sizes}, {"samples", samples}, {"cells", cells.size()}});
}

namespace detail {

struct NamedInstance {
  std::string id;
  ProblemInstance instance;
};

inline std::vector<NamedInstance> mc_instances(Session& s, const json& b) {
  std::vector<NamedInstance> out;
  auto add_file = [&](const fs::path& p) {
    const auto text = read_text(p);
    s.add_input(text);
    out.push_back({p.stem().string(), instance_from_json(json::parse(text))});
  };
  if (b.contains("instances")) {
    for (const auto& p : b["instances"]) add_file(p.get<std::string>());
  } else if (b.contains("instance_dir")) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(b["instance_dir"].get<std::string>()))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) add_file(p);
  } else {
    const auto& m = b["mine"];
    const auto r = mine_instances(get_required<int>(m, "L"), get_required<int>(m, "degeneracy"), get_required<int>(m, "count"),
                                  get_or<std::uint64_t>(m, "max_attempts", 1000000),
                                  get_or<std::uint64_t>(m, "seed", s.cfg().seed), coupler_values(m));
    require(!r.exhausted, ErrorKind::config, "mining budget exhausted before enough instances were found");
    for (std::size_t k = 0; k < r.instances.size(); ++k) out.push_back({"mined_" + pad(k), r.instances[k]});
  }
  return out;
}

inline EngineParams engine_params_from(const json& b) {
  EngineParams p;
  if (b.contains("sa")) {
    const auto& j = b["sa"];
    p.sa.start = get_or<double>(j, "beta_start", p.sa.start);
    p.sa.end = get_or<double>(j, "beta_end", p.sa.end);
    p.sa.steps = get_or<int>(j, "sweeps", p.sa.steps);
  }
  if (b.contains("sqa")) {
    const auto& j = b["sqa"];
    p.sqa.beta = get_or<double>(j, "beta", p.sqa.beta);
    p.sqa.slices = get_or<int>(j, "slices", p.sqa.slices);
    p.sqa.gamma = get_or<double>(j, "gamma", p.sqa.gamma);
    p.K = get_or<double>(j, "K", p.K);
    p.sqa.schedule.steps = get_or<int>(j, "sweeps", p.sqa.schedule.steps);
  }
  p.sa.validate();
  p.sqa.schedule.validate();
  return p;
}

inline json curve_json(const RankCurve& c) {
  return {{"k", c.k}, {"instances", c.instances}, {"ratio_mean", c.ratio_mean}, {"ratio_stderr", c.ratio_stderr}, {"p_mean", c.p_mean}};
}

}  // namespace detail

/// Per engine: histograms per instance, raw and orbit-merged rank curves, and the
/// disorder-averaged max/min ratio.
inline ResultRecord run_mc_sampling(const ExperimentConfig& cfg) {
  detail::Session s(cfg);
  const auto& b = cfg.body;
  const auto instances = detail::mc_instances(s, b);
  const auto runs = detail::get_or<std::uint64_t>(b, "runs", 500);
  const auto params = detail::engine_params_from(b);
  const auto engine_names = detail::get_or<std::vector<std::string>>(b, "engines", {"sa", "sqa-x", "sqa-xx"});

  std::vector<GroundStateSet> ground(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) ground[i] = enumerate_ground_states(instances[i].instance);

  json engines = json::object();
  for (std::size_t e = 0; e < engine_names.size(); ++e) {
    const auto engine = engine_from_string(engine_names[e]);
    std::vector<SampleHistogram> hs;
    std::uint64_t non_gs = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      hs.push_back(sample_distribution(engine, instances[i].instance, ground[i], params, runs, derive_seed(cfg.seed, e, i),
                                       instances[i].id));
      non_gs += hs.back().non_gs;
      s.write("histograms/" + engine_names[e] + "/" + instances[i].id + ".json", histogram_to_json(hs.back()));
    }
    std::vector<SampleHistogram> folded;
    for (const auto& h : hs) folded.push_back(fold_gauge(h));
    const auto curve = rank_order_average(hs);
    const auto fcurve = rank_order_average(folded);
    s.write("rank_" + engine_names[e] + ".csv", rank_curve_csv(curve));
    s.write("rank_" + engine_names[e] + "_folded.csv", rank_curve_csv(fcurve));
    engines[engine_names[e]] = {{"params", engine_params_json(engine, params)},
                                {"raw", detail::curve_json(curve)},
                                {"folded", detail::curve_json(fcurve)},
                                {"non_gs", non_gs}};
  }
  return s.finish({{"instances", instances.size()}, {"runs", runs}, {"engines", engines}});
}

/// Category requirement at one driver order.
struct PatternTerm {
  int order = 1;
  Category category = Category::fair;
};

struct ShowcasePattern {
  std::vector<PatternTerm> terms;
  std::optional<std::pair<int, int>> swap;  // two orders whose sampling preferences invert
};

inline ShowcasePattern pattern_from_json(const json& j) {
  ShowcasePattern p;
  for (const auto& t : j.at("terms")) p.terms.push_back({t.at("order").get<int>(), category_from_string(t.at("category").get<std::string>())});
  if (j.contains("swap")) {
    const auto v = j["swap"].get<std::vector<int>>();
    require(v.size() == 2, ErrorKind::config, "'swap' must list two driver orders");
    p.swap = std::pair(v[0], v[1]);
  }
  require(!p.terms.empty() || p.swap, ErrorKind::config, "empty showcase pattern");
  return p;
}

struct ShowcaseMatch {
  ProblemInstance instance;
  std::uint64_t seed = 0;
  std::map<int, SamplingPrediction> predictions;  // by driver order
};

namespace detail {

inline ProblemInstance random_graph_instance(int n, double edge_probability, std::span<const double> values,
                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<Coupler> cs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (u(rng) < edge_probability) cs.push_back({i, j, values[pick(rng)]});
  return ProblemInstance(n, std::move(cs));
}

// Largest and smallest gauge-folded probability swap places between two predictions.
inline bool preferences_swap(const SamplingPrediction& a, const SamplingPrediction& b) {
  if (a.probabilities.empty() || b.probabilities.empty()) return false;
  const auto pa = fold_gauge(a).second, pb = fold_gauge(b).second;
  const auto ia = static_cast<std::size_t>(std::max_element(pa.begin(), pa.end()) - pa.begin());
  const auto ja = static_cast<std::size_t>(std::min_element(pa.begin(), pa.end()) - pa.begin());
  return pa[ia] - pa[ja] > 0.05 && pb[ja] - pb[ia] > 0.05;
}

}  // namespace detail

/// Random small graphs (no fields) drawn with derived seeds; each is classified at the
/// orders the pattern mentions, escalating to second order when first order vanishes.
inline std::vector<ShowcaseMatch> find_showcase_instances(const ShowcasePattern& pattern, std::vector<int> sizes,
                                                          std::uint64_t budget, std::size_t count, std::uint64_t seed,
                                                          std::span<const double> values, double edge_probability = 0.6,
                                                          int min_degeneracy = 4) {
  for (int n : sizes) require(n >= 2 && n <= 6, ErrorKind::invalid_argument, "showcase search supports 2 <= N <= 6");
  require(!sizes.empty(), ErrorKind::invalid_argument, "no system sizes given");
  std::vector<int> orders;
  for (const auto& t : pattern.terms) orders.push_back(t.order);
  if (pattern.swap) {
    orders.push_back(pattern.swap->first);
    orders.push_back(pattern.swap->second);
  }
  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end()), orders.end());

  std::vector<ShowcaseMatch> found;
  const std::size_t batch = 64;
  for (std::uint64_t next = 0; next < budget && found.size() < count; next += batch) {
    const auto this_batch = static_cast<std::size_t>(std::min<std::uint64_t>(batch, budget - next));
    std::vector<std::optional<ShowcaseMatch>> hits(this_batch);
    parallel_for(this_batch, [&](std::size_t k) {
      const auto attempt_seed = derive_seed(seed, next + k);
      const int n = sizes[static_cast<std::size_t>(attempt_seed % sizes.size())];
      auto inst = detail::random_graph_instance(n, edge_probability, values, attempt_seed);
      const auto gs = enumerate_ground_states(inst);
      if (static_cast<int>(gs.size()) < min_degeneracy) return;
      ShowcaseMatch m{inst, attempt_seed, {}};
      for (int o : orders) {
        if (o > n) return;
        m.predictions.emplace(o, predict_escalating(gs, DriverSpec::uniform(o), &inst));
      }
      for (const auto& t : pattern.terms)
        if (m.predictions.at(t.order).category != t.category) return;
      if (pattern.swap && !detail::preferences_swap(m.predictions.at(pattern.swap->first), m.predictions.at(pattern.swap->second)))
        return;
      hits[k] = std::move(m);
    });
    for (auto& h : hits)
      if (h && found.size() < count) found.push_back(std::move(*h));
  }
  return found;
}

inline ResultRecord run_find_showcase(const ExperimentConfig& cfg) {
  detail::Session s(cfg);
  const auto& b = cfg.body;
  const auto pattern = pattern_from_json(b.at("pattern"));
  const auto sizes = detail::get_or<std::vector<int>>(b, "n_spins", {3, 4, 5, 6});
  const auto budget = detail::get_or<std::uint64_t>(b, "budget", 100000);
  const auto count = detail::get_or<std::size_t>(b, "count", 1);
  const auto values = b.contains("values") ? b["values"].get<std::vector<double>>() : std::vector<double>{-2, -1, 1, 2};
  const double edge_p = detail::get_or<double>(b, "edge_probability", 0.6);
  const int min_deg = detail::get_or<int>(b, "min_degeneracy", 4);
  const auto found = find_showcase_instances(pattern, sizes, budget, count, cfg.seed, values, edge_p, min_deg);

  json list = json::array();
  for (std::size_t k = 0; k < found.size(); ++k) {
    const auto rel = "showcase/instance_" + detail::pad(k) + ".json";
    s.write(rel, instance_to_json(found[k].instance));
    json preds = json::object();
    for (const auto& [o, p] : found[k].predictions) preds["n" + std::to_string(o)] = detail::prediction_json(p, true);
    list.push_back({{"path", rel}, {"seed", found[k].seed}, {"predictions", preds}});
  }
  s.write("showcase.json", list);
  return s.finish({{"found", found.size()}, {"requested", count}, {"budget", budget}, {"empty", found.empty()}});
}

inline ResultRecord run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case ExperimentKind::gen: return run_gen(cfg);
    case ExperimentKind::mine: return run_mine(cfg);
    case ExperimentKind::enumerate: return run_enumerate(cfg);
    case ExperimentKind::trace: return run_trace(cfg);
    case ExperimentKind::sensitivity: return run_sensitivity(cfg);
    case ExperimentKind::driver_study: return run_driver_study(cfg);
    case ExperimentKind::mc_sampling: return run_mc_sampling(cfg);
    case ExperimentKind::find_showcase: return run_find_showcase(cfg);
  }
  throw Error(ErrorKind::config, "unhandled experiment kind");
}

}  // namespace fairsample
