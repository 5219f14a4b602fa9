#include "layopt/search.hpp"

#include <unistd.h>
#include <sys/wait.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "layopt/rng.hpp"

namespace layopt {

namespace fs = std::filesystem;

void SearchConfig::check() const {
  if (base.size() == 0) throw ConfigError("search.base: empty template layout");
  if (n_shelves < 0 || n_shelves > base.storage().area())
    throw ConfigError("search.n_shelves must lie in [0, storage area]");
  if (n_evals < 1) throw ConfigError("search.n_evals must be >= 1");
  if (eval_budget < 0) throw ConfigError("search.eval_budget must be >= 0");
  if (batch < 1) throw ConfigError("search.batch must be >= 1");
  if (n_threads < 1) throw ConfigError("search.n_threads must be >= 1");
  if (!(repair_time_limit > 0)) throw ConfigError("search.repair_time_limit must be positive");
  if (n_rand < 0) throw ConfigError("search.n_rand must be >= 0");
  if (inner_iterations < 0) throw ConfigError("search.inner_iterations must be >= 0");
  if (max_failed_batches < 1) throw ConfigError("search.max_failed_batches must be >= 1");
  archive.check();
  SimConfig s = sim;
  s.check();
}

nlohmann::json to_json(const DatasetRecord& r) {
  return {{"unrepaired", serialize_layout(r.unrepaired)},
          {"repaired", serialize_layout(r.repaired)},
          {"tile_usage_normalized", r.tile_usage_normalized},
          {"objective", r.objective},
          {"measures", {r.measures.n_shelf_components, r.measures.mean_task_length}}};
}

DatasetRecord dataset_record_from_json(const nlohmann::json& j) {
  DatasetRecord r;
  r.unrepaired = parse_layout(j.at("unrepaired").get<std::string>());
  r.repaired = parse_layout(j.at("repaired").get<std::string>());
  r.tile_usage_normalized = j.at("tile_usage_normalized").get<std::vector<double>>();
  r.objective = j.at("objective").get<double>();
  r.measures = {j.at("measures").at(0).get<double>(), j.at("measures").at(1).get<double>()};
  return r;
}

std::string stats_csv_header(bool timing) {
  std::string h = "iteration,phase,evaluations,repair_failures,qd_score,coverage,num_elites,best_objective";
  return timing ? h + ",elapsed_seconds" : h;
}

std::string stats_csv_row(const IterationStats& s, bool timing) {
  char buf[256];
  int n = std::snprintf(buf, sizeof buf, "%d,%s,%d,%d,%.17g,%.17g,%d,%.17g", s.iteration, s.phase.c_str(),
                        s.evaluations, s.repair_failures, s.qd_score, s.coverage, s.num_elites, s.best_objective);
  if (timing) std::snprintf(buf + n, sizeof buf - n, ",%.3f", s.elapsed_seconds);
  return buf;
}

namespace {

Layout attach_template(const Layout& base, const Layout& genome) {
  Layout out = base;
  for (int v : out.storage_indices()) out.set(v, genome.at(v));
  return out;
}

// Drops per-timestep series that are not needed once aggregated.
std::shared_ptr<const EvalResult> compact(EvalResult e) {
  for (auto& r : e.runs) {
    r.finished_per_timestep.clear();
    r.finished_per_timestep.shrink_to_fit();
    r.tile_usage.clear();
    r.tile_usage.shrink_to_fit();
    r.trajectory.clear();
  }
  return std::make_shared<const EvalResult>(std::move(e));
}

template <typename Fn>
void parallel_for(int n, int n_threads, Fn fn) {
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    try {
      auto state = fn.make_state();
      for (int i = next++; i < n; i = next++) fn(state, i);
    } catch (...) {
      std::lock_guard lock(error_mu);
      if (!error) error = std::current_exception();
      next = n;
    }
  };
  const int k = std::max(1, std::min(n_threads, n));
  std::vector<std::thread> pool;
  for (int t = 1; t < k; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<Candidate> evaluate_genomes(const SearchConfig& config, const std::vector<Layout>& genomes,
                                        std::uint64_t tag) {
  std::vector<Candidate> out(genomes.size());
  struct Job {
    const SearchConfig& config;
    const std::vector<Layout>& genomes;
    std::vector<Candidate>& out;
    std::uint64_t tag;
    std::unique_ptr<SolverAdapter> make_state() const { return make_solver(config.solver); }
    void operator()(std::unique_ptr<SolverAdapter>& solver, int i) const {
      Candidate c;
      c.genome = attach_template(config.base, genomes[static_cast<std::size_t>(i)]);
      const auto rep = repair(c.genome, config.sim.scenario, config.n_shelves, *solver, config.repair_time_limit);
      c.repair_status = rep.status;
      if (rep.repaired) {
        SimConfig sim = config.sim;
        sim.seed = derive_seed(config.seed, {tag, static_cast<std::uint64_t>(i)});
        c.eval = compact(evaluate(*rep.repaired, sim, config.n_evals, 1, config.metric));
        c.repaired = rep.repaired;
      }
      out[static_cast<std::size_t>(i)] = std::move(c);
    }
  };
  parallel_for(static_cast<int>(genomes.size()), config.n_threads, Job{config, genomes, out, tag});
  return out;
}

// ---------------------------------------------------------------------------
// Search state shared by both loops, with checkpointing.

namespace {

constexpr std::uint64_t kTagMapElites = 0x4d41500000000000ULL;
constexpr std::uint64_t kTagSeed = 0x5345454400000000ULL;
constexpr std::uint64_t kTagDsage = 0x4453414700000000ULL;
constexpr std::uint64_t kTagOracle = 0x4f52434c00000000ULL;

struct State {
  explicit State(const SearchConfig& c) : archive(c.archive, ArchiveKind::GroundTruth), rng(c.seed) {}
  Archive archive;
  std::vector<IterationStats> log;
  std::vector<DatasetRecord> dataset;
  int evaluations = 0;
  int repair_failures = 0;
  int failed_batches = 0;
  int iteration = 0;
  std::string stage = "mapelites";  // "mapelites", "seed", "dsage"
  std::mt19937_64 rng;
  double elapsed_offset = 0.0;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::size_t dataset_saved = 0;

  double elapsed() const {
    return elapsed_offset + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

nlohmann::json stats_json(const IterationStats& s) {
  return {{"iteration", s.iteration},         {"phase", s.phase},         {"evaluations", s.evaluations},
          {"repair_failures", s.repair_failures}, {"qd_score", s.qd_score}, {"coverage", s.coverage},
          {"num_elites", s.num_elites},       {"best_objective", s.best_objective},
          {"elapsed_seconds", s.elapsed_seconds}};
}

IterationStats stats_from_json(const nlohmann::json& j) {
  IterationStats s;
  s.iteration = j.at("iteration");
  s.phase = j.at("phase");
  s.evaluations = j.at("evaluations");
  s.repair_failures = j.at("repair_failures");
  s.qd_score = j.at("qd_score");
  s.coverage = j.at("coverage");
  s.num_elites = j.at("num_elites");
  s.best_objective = j.at("best_objective");
  s.elapsed_seconds = j.at("elapsed_seconds");
  return s;
}

void save_checkpoint(const SearchConfig& config, State& st) {
  if (config.checkpoint_dir.empty()) return;
  const fs::path dir(config.checkpoint_dir);
  fs::create_directories(dir);
  {
    std::ofstream ds(dir / "dataset.jsonl", st.dataset_saved == 0 ? std::ios::trunc : std::ios::app);
    for (std::size_t i = st.dataset_saved; i < st.dataset.size(); ++i) ds << to_json(st.dataset[i]).dump() << '\n';
    st.dataset_saved = st.dataset.size();
  }
  const fs::path tmp_archive = dir / "archive.tmp";
  fs::remove_all(tmp_archive);
  st.archive.save(tmp_archive.string());
  fs::remove_all(dir / "archive");
  fs::rename(tmp_archive, dir / "archive");
  std::ostringstream rng;
  rng << st.rng;
  nlohmann::json log = nlohmann::json::array();
  for (const auto& s : st.log) log.push_back(stats_json(s));
  const nlohmann::json j = {{"format", "layopt-checkpoint"},
                            {"version", 1},
                            {"stage", st.stage},
                            {"seed", config.seed},
                            {"iteration", st.iteration},
                            {"evaluations", st.evaluations},
                            {"repair_failures", st.repair_failures},
                            {"failed_batches", st.failed_batches},
                            {"dataset_size", st.dataset.size()},
                            {"elapsed_seconds", st.elapsed()},
                            {"rng", rng.str()},
                            {"log", log}};
  std::ofstream(dir / "checkpoint.json.tmp") << j.dump(1) << '\n';
  fs::rename(dir / "checkpoint.json.tmp", dir / "checkpoint.json");
}

// Restores a checkpoint if one exists; returns false for a fresh start.
bool load_checkpoint(const SearchConfig& config, State& st) {
  if (config.checkpoint_dir.empty()) return false;
  const fs::path dir(config.checkpoint_dir);
  std::ifstream in(dir / "checkpoint.json");
  if (!in) return false;
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "layopt-checkpoint") throw ConfigError("checkpoint.json: not a checkpoint");
  if (j.at("seed").get<std::uint64_t>() != config.seed)
    throw ConfigError("checkpoint was written with a different master seed");
  st.archive = Archive::load((dir / "archive").string());
  if (!(st.archive.config() == config.archive)) throw ConfigError("checkpoint archive config differs from config");
  st.stage = j.at("stage");
  st.iteration = j.at("iteration");
  st.evaluations = j.at("evaluations");
  st.repair_failures = j.at("repair_failures");
  st.failed_batches = j.at("failed_batches");
  st.elapsed_offset = j.at("elapsed_seconds");
  std::istringstream rng(j.at("rng").get<std::string>());
  rng >> st.rng;
  for (const auto& s : j.at("log")) st.log.push_back(stats_from_json(s));
  const auto n = j.at("dataset_size").get<std::size_t>();
  std::ifstream ds(dir / "dataset.jsonl");
  std::string line;
  while (st.dataset.size() < n && std::getline(ds, line)) st.dataset.push_back(dataset_record_from_json(nlohmann::json::parse(line)));
  if (st.dataset.size() != n) throw ConfigError("checkpoint dataset.jsonl is truncated");
  // Rewrite the dataset file at the next save so lines beyond the checkpoint are dropped.
  st.dataset_saved = 0;
  return true;
}

// Adds evaluated candidates in order; returns the number of evaluations consumed.
int absorb(State& st, const std::vector<Candidate>& cands) {
  int used = 0;
  for (const auto& c : cands) {
    if (!c.repaired) {
      ++st.repair_failures;
      continue;
    }
    ++used;
    Elite e;
    e.genome = c.genome;
    e.repaired = *c.repaired;
    e.objective = c.eval->mean_throughput;
    e.measures = c.eval->measures;
    e.eval = c.eval;
    st.archive.add(e);
    st.dataset.push_back({c.genome, *c.repaired, c.eval->tile_usage_normalized, e.objective, e.measures});
  }
  st.evaluations += used;
  st.failed_batches = used == 0 ? st.failed_batches + 1 : 0;
  return used;
}

void record(const SearchConfig& config, State& st, const std::string& phase, const ProgressFn& progress) {
  const auto s = st.archive.stats();
  IterationStats it;
  it.iteration = st.iteration;
  it.phase = phase;
  it.evaluations = st.evaluations;
  it.repair_failures = st.repair_failures;
  it.qd_score = s.qd_score;
  it.coverage = s.coverage;
  it.num_elites = s.num_elites;
  it.best_objective = s.best_objective;
  it.elapsed_seconds = st.elapsed();
  st.log.push_back(it);
  save_checkpoint(config, st);
  if (progress) progress(it);
}

void check_progress(const SearchConfig& config, const State& st) {
  if (st.failed_batches >= config.max_failed_batches) {
    throw SolverError("no candidate could be repaired in " + std::to_string(st.failed_batches) +
                      " consecutive batches (is N_s feasible for this template?)");
  }
}

void mapelites_loop(const SearchConfig& config, State& st, const ProgressFn& progress) {
  st.stage = "mapelites";
  while (st.evaluations < config.eval_budget) {
    const int b = std::min(config.batch, config.eval_budget - st.evaluations);
    auto genomes = select_batch(st.archive, b, config.base, st.rng);
    if (!st.archive.empty()) {
      for (auto& g : genomes) g = mutate(g, st.rng);
    }
    ++st.iteration;
    absorb(st, evaluate_genomes(config, genomes, kTagMapElites | static_cast<std::uint64_t>(st.iteration)));
    record(config, st, "mapelites", progress);
    check_progress(config, st);
  }
}

SearchResult finish(State& st) {
  SearchResult r{std::move(st.archive), std::move(st.log), std::move(st.dataset), st.evaluations,
                 st.repair_failures,    false,             ""};
  return r;
}

}  // namespace

SearchResult run_mapelites(const SearchConfig& config, ProgressFn progress) {
  config.check();
  State st(config);
  if (load_checkpoint(config, st) && st.stage != "mapelites")
    throw ConfigError("checkpoint belongs to a DSAGE run");
  mapelites_loop(config, st, progress);
  return finish(st);
}

// ---------------------------------------------------------------------------
// DSAGE

SearchResult run_dsage(const SearchConfig& config, Surrogate* surrogate, ProgressFn progress) {
  config.check();
  auto degrade = [&](State& st, const std::string& why) {
    std::cerr << "warning: surrogate unavailable (" << why << "); continuing with MAP-Elites\n";
    mapelites_loop(config, st, progress);
    auto r = finish(st);
    r.degraded = true;
    return r;
  };
  State st(config);
  const bool resumed = load_checkpoint(config, st);
  if (!surrogate) return degrade(st, "none configured");
  if (resumed && st.stage == "mapelites" && st.iteration > 0) return degrade(st, "checkpoint is a MAP-Elites run");

  if (!resumed || st.stage == "seed") {
    // Phase 0: random seed layouts, evaluated for real.
    st.stage = "seed";
    const int target = std::min(config.n_rand, config.eval_budget);
    while (st.evaluations < target) {
      const int b = std::min(config.batch, target - st.evaluations);
      std::vector<Layout> genomes;
      for (int i = 0; i < b; ++i) genomes.push_back(random_genome(config.base, st.rng));
      ++st.iteration;
      absorb(st, evaluate_genomes(config, genomes, kTagSeed | static_cast<std::uint64_t>(st.iteration)));
      record(config, st, "seed", progress);
      check_progress(config, st);
    }
    st.stage = "dsage";
  }
  try {
    surrogate->train(st.dataset);
  } catch (const SurrogateError& e) {
    return degrade(st, e.what());
  }

  Archive sarchive(config.archive, ArchiveKind::Surrogate);
  auto add_predicted = [&](const std::vector<Layout>& genomes) {
    const auto preds = surrogate->predict(genomes);
    if (preds.size() != genomes.size()) throw SurrogateError("surrogate returned the wrong number of predictions");
    for (std::size_t i = 0; i < genomes.size(); ++i) {
      Elite e;
      e.genome = genomes[i];
      e.repaired = preds[i].repaired.value_or(genomes[i]);
      e.objective = preds[i].objective;
      e.measures = preds[i].measures;
      sarchive.add(std::move(e));
    }
  };
  while (st.evaluations < config.eval_budget) {
    // Model exploitation on a fresh surrogate archive seeded with the ground-truth elites.
    sarchive.clear();
    std::vector<Layout> known;
    for (const auto& [cell, e] : st.archive.cells()) known.push_back(e.genome);
    if (!known.empty()) add_predicted(known);
    for (int it = 0; it < config.inner_iterations; ++it) {
      auto genomes = select_batch(sarchive, config.batch, config.base, st.rng);
      if (!sarchive.empty()) {
        for (auto& g : genomes) g = mutate(g, st.rng);
      }
      add_predicted(genomes);
    }
    // Agent simulation on downsampled surrogate elites.
    auto picks = downsample(sarchive, config.archive.downsample_dims, st.rng);
    std::vector<Layout> genomes;
    for (const Elite* e : picks) genomes.push_back(e->genome);
    std::shuffle(genomes.begin(), genomes.end(), st.rng);
    const auto remaining = static_cast<std::size_t>(config.eval_budget - st.evaluations);
    if (genomes.size() > remaining) genomes.resize(remaining);
    if (genomes.empty()) genomes.push_back(random_genome(config.base, st.rng));
    ++st.iteration;
    absorb(st, evaluate_genomes(config, genomes, kTagDsage | static_cast<std::uint64_t>(st.iteration)));
    // Model improvement.
    surrogate->train(st.dataset);
    record(config, st, "dsage", progress);
    check_progress(config, st);
  }
  auto r = finish(st);
  r.surrogate = surrogate->name();
  return r;
}

// ---------------------------------------------------------------------------
// Surrogates

OracleSurrogate::OracleSurrogate(SearchConfig config) : config_(std::move(config)) {}

std::vector<Prediction> OracleSurrogate::predict(const std::vector<Layout>& genomes) {
  const auto cands = evaluate_genomes(config_, genomes, kTagOracle | ++calls_);
  std::vector<Prediction> out;
  for (const auto& c : cands) {
    Prediction p;
    if (c.repaired) {
      p.objective = c.eval->mean_throughput;
      p.measures = c.eval->measures;
      p.tile_usage = c.eval->tile_usage_normalized;
      p.repaired = c.repaired;
    } else {
      // Unrepairable genomes are pushed outside every measure range.
      p.objective = 0.0;
      p.measures = {-1.0, -1.0};
    }
    out.push_back(std::move(p));
  }
  return out;
}

nlohmann::json one_hot(const Layout& l) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < l.height(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < l.width(); ++c) {
      Tile t = l.at(Cell{r, c});
      if (t == Tile::DummySource) throw std::invalid_argument("one_hot: dummy source tiles cannot be encoded");
      nlohmann::json v = nlohmann::json::array();
      for (Tile ch : kOneHotChannels) v.push_back(t == ch ? 1 : 0);
      row.push_back(std::move(v));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Layout from_one_hot(const nlohmann::json& tensor, const Layout& like) {
  Layout out = like;
  if (static_cast<int>(tensor.size()) != like.height()) throw SurrogateError("one-hot tensor has the wrong height");
  for (int r = 0; r < like.height(); ++r) {
    const auto& row = tensor.at(static_cast<std::size_t>(r));
    if (static_cast<int>(row.size()) != like.width()) throw SurrogateError("one-hot tensor has the wrong width");
    for (int c = 0; c < like.width(); ++c) {
      const auto& v = row.at(static_cast<std::size_t>(c));
      std::size_t best = 0;
      for (std::size_t k = 1; k < v.size() && k < std::size(kOneHotChannels); ++k)
        if (v.at(k).get<double>() > v.at(best).get<double>()) best = k;
      out.set(Cell{r, c}, kOneHotChannels[best]);
    }
  }
  return out;
}

ProcessSurrogate::ProcessSurrogate(std::string command, std::string work_dir)
    : command_(std::move(command)), work_dir_(std::move(work_dir)) {
  if (work_dir_.empty()) work_dir_ = fs::temp_directory_path().string();
}

nlohmann::json ProcessSurrogate::exchange(const nlohmann::json& request) {
  static std::atomic<int> counter{0};
  const std::string stem = "layopt-surrogate-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
  const fs::path req = fs::path(work_dir_) / (stem + "-request.json");
  const fs::path resp = fs::path(work_dir_) / (stem + "-response.json");
  std::ofstream(req) << request.dump();
  const std::string cmd = command_ + " '" + req.string() + "' '" + resp.string() + "'";
  const int raw = std::system(cmd.c_str());
  fs::remove(req);
  const int code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  if (code != 0) {
    fs::remove(resp);
    throw SurrogateError("surrogate command failed with status " + std::to_string(code));
  }
  std::ifstream in(resp);
  if (!in) throw SurrogateError("surrogate wrote no response");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fs::remove(resp);
    throw SurrogateError(std::string("surrogate response: ") + e.what());
  }
  fs::remove(resp);
  if (j.value("version", 0) != kSurrogateProtocolVersion) throw SurrogateError("surrogate protocol version mismatch");
  return j;
}

namespace {

nlohmann::json request_header(const char* mode, const Layout& like) {
  nlohmann::json channels = nlohmann::json::array();
  for (Tile t : kOneHotChannels) channels.push_back(std::string(1, tile_char(t)));
  return {{"protocol", "layopt-surrogate"}, {"version", kSurrogateProtocolVersion}, {"mode", mode},
          {"height", like.height()},        {"width", like.width()},                 {"channels", channels}};
}

}  // namespace

std::vector<Prediction> ProcessSurrogate::predict(const std::vector<Layout>& genomes) {
  if (genomes.empty()) return {};
  auto req = request_header("predict", genomes.front());
  req["layouts"] = nlohmann::json::array();
  for (const auto& g : genomes) req["layouts"].push_back(one_hot(g));
  const auto resp = exchange(req);
  std::vector<Prediction> out;
  try {
    const auto& preds = resp.at("predictions");
    if (preds.size() != genomes.size()) throw SurrogateError("surrogate returned the wrong number of predictions");
    for (std::size_t i = 0; i < genomes.size(); ++i) {
      const auto& p = preds[i];
      Prediction q;
      q.objective = p.at("objective").get<double>();
      q.measures = {p.at("measures").at(0).get<double>(), p.at("measures").at(1).get<double>()};
      if (p.contains("tile_usage")) q.tile_usage = p.at("tile_usage").get<std::vector<double>>();
      if (p.contains("repaired")) q.repaired = from_one_hot(p.at("repaired"), genomes[i]);
      out.push_back(std::move(q));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SurrogateError(std::string("surrogate response: ") + e.what());
  }
  return out;
}

void ProcessSurrogate::train(const std::vector<DatasetRecord>& dataset) {
  if (dataset.empty()) return;
  auto req = request_header("train", dataset.front().unrepaired);
  req["records"] = nlohmann::json::array();
  for (const auto& r : dataset) {
    req["records"].push_back({{"unrepaired", one_hot(r.unrepaired)},
                              {"repaired", one_hot(r.repaired)},
                              {"tile_usage", r.tile_usage_normalized},
                              {"objective", r.objective},
                              {"measures", {r.measures.n_shelf_components, r.measures.mean_task_length}}});
  }
  last_train_ = exchange(req);
}

std::unique_ptr<Surrogate> make_surrogate(const std::string& spec, const SearchConfig& config) {
  if (spec.empty() || spec == "none") return nullptr;
  if (spec == "oracle") return std::make_unique<OracleSurrogate>(config);
  if (spec.rfind("command:", 0) == 0) return std::make_unique<ProcessSurrogate>(spec.substr(8));
  throw ConfigError("unknown surrogate '" + spec + "' (expected none, oracle or command:<exe>)");
}

}  // namespace layopt
