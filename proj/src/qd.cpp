#include "layopt/qd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace layopt {

namespace fs = std::filesystem;

void ArchiveConfig::check() const {
  for (int a = 0; a < 2; ++a) {
    if (dims[a] <= 0) throw ConfigError("archive.dims must be positive");
    if (downsample_dims[a] <= 0) throw ConfigError("archive.downsample_dims must be positive");
    if (downsample_dims[a] > dims[a]) throw ConfigError("archive.downsample_dims must not exceed archive.dims");
  }
  if (!(component_range[0] < component_range[1])) throw ConfigError("archive.component_range must satisfy lo < hi");
  if (!(task_length_range[0] < task_length_range[1]))
    throw ConfigError("archive.task_length_range must satisfy lo < hi");
}

nlohmann::json to_json(const ArchiveConfig& c) {
  return {{"dims", c.dims},
          {"component_range", c.component_range},
          {"task_length_range", c.task_length_range},
          {"downsample_dims", c.downsample_dims}};
}

ArchiveConfig archive_config_from_json(const nlohmann::json& j) {
  ArchiveConfig c;
  try {
    if (j.contains("dims")) c.dims = j.at("dims").get<std::array<int, 2>>();
    if (j.contains("component_range")) c.component_range = j.at("component_range").get<std::array<double, 2>>();
    if (j.contains("task_length_range"))
      c.task_length_range = j.at("task_length_range").get<std::array<double, 2>>();
    if (j.contains("downsample_dims")) c.downsample_dims = j.at("downsample_dims").get<std::array<int, 2>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("archive: ") + e.what());
  }
  c.check();
  return c;
}

std::string_view add_status_name(AddStatus s) {
  switch (s) {
    case AddStatus::Inserted: return "inserted";
    case AddStatus::Replaced: return "replaced";
    case AddStatus::Rejected: return "rejected";
    case AddStatus::OutOfRange: return "out_of_range";
  }
  return "?";
}

namespace {

std::optional<int> bin(double v, std::array<double, 2> range, int dim) {
  const auto [lo, hi] = range;
  if (!(v >= lo && v <= hi)) return std::nullopt;
  if (v == hi) return dim - 1;
  const int i = static_cast<int>(std::floor((v - lo) * dim / (hi - lo)));
  return std::clamp(i, 0, dim - 1);
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::optional<int> cell_index(const MeasureVector& m, const ArchiveConfig& c) {
  const auto i = bin(m.n_shelf_components, c.component_range, c.dims[0]);
  const auto j = bin(m.mean_task_length, c.task_length_range, c.dims[1]);
  if (!i || !j) return std::nullopt;
  return *i * c.dims[1] + *j;
}

std::array<int, 2> cell_coords(int cell, const ArchiveConfig& c) { return {cell / c.dims[1], cell % c.dims[1]}; }

Archive::Archive(ArchiveConfig config, ArchiveKind kind) : config_(config), kind_(kind) { config_.check(); }

AddStatus Archive::add(Elite candidate) {
  const auto cell = cell_index(candidate.measures, config_);
  if (!cell) {
    ++out_of_range_;
    return AddStatus::OutOfRange;
  }
  auto it = cells_.find(*cell);
  if (it == cells_.end()) {
    cells_.emplace(*cell, std::move(candidate));
    return AddStatus::Inserted;
  }
  if (candidate.objective > it->second.objective) {
    it->second = std::move(candidate);
    return AddStatus::Replaced;
  }
  return AddStatus::Rejected;
}

void Archive::clear() {
  cells_.clear();
  out_of_range_ = 0;
}

const Elite* Archive::find(int cell) const {
  auto it = cells_.find(cell);
  return it == cells_.end() ? nullptr : &it->second;
}

ArchiveStats Archive::stats() const {
  ArchiveStats s;
  s.num_elites = size();
  s.coverage = static_cast<double>(s.num_elites) / config_.num_cells();
  s.out_of_range = out_of_range_;
  bool first = true;
  for (const auto& [cell, e] : cells_) {
    s.qd_score += e.objective;
    if (first || e.objective > s.best_objective) s.best_objective = e.objective;
    first = false;
  }
  return s;
}

ArchiveStats stats(const Archive& archive) { return archive.stats(); }

void Archive::save(const std::string& dir) const {
  fs::create_directories(fs::path(dir) / "layouts");
  nlohmann::json elites = nlohmann::json::array();
  std::ostringstream csv;
  csv << "cell,component_bin,task_length_bin,n_shelf_components,mean_task_length,objective,success_rate,"
         "throughput_sd,genome_file,repaired_file\n";
  for (const auto& [cell, e] : cells_) {
    char name[64];
    std::snprintf(name, sizeof name, "cell_%06d", cell);
    const std::string genome_file = std::string("layouts/") + name + "_genome.txt";
    const std::string repaired_file = std::string("layouts/") + name + "_repaired.txt";
    write_layout_file((fs::path(dir) / genome_file).string(), e.genome);
    write_layout_file((fs::path(dir) / repaired_file).string(), e.repaired);
    const double sr = e.eval ? e.eval->success_rate : 0.0;
    const double sd = e.eval ? e.eval->throughput_sd : 0.0;
    const auto [ci, cj] = cell_coords(cell, config_);
    elites.push_back({{"cell", cell},
                      {"n_shelf_components", e.measures.n_shelf_components},
                      {"mean_task_length", e.measures.mean_task_length},
                      {"objective", e.objective},
                      {"success_rate", sr},
                      {"throughput_sd", sd},
                      {"has_eval", static_cast<bool>(e.eval)},
                      {"genome_file", genome_file},
                      {"repaired_file", repaired_file}});
    csv << cell << ',' << ci << ',' << cj << ',' << fmt(e.measures.n_shelf_components) << ','
        << fmt(e.measures.mean_task_length) << ',' << fmt(e.objective) << ',' << fmt(sr) << ',' << fmt(sd) << ','
        << genome_file << ',' << repaired_file << '\n';
  }
  const nlohmann::json j = {{"format", "layopt-archive"},
                            {"version", 1},
                            {"kind", kind_ == ArchiveKind::GroundTruth ? "ground_truth" : "surrogate"},
                            {"config", to_json(config_)},
                            {"out_of_range", out_of_range_},
                            {"elites", elites}};
  std::ofstream(fs::path(dir) / "archive.json") << j.dump(1) << '\n';
  std::ofstream(fs::path(dir) / "archive.csv") << csv.str();
}

Archive Archive::load(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "archive.json");
  if (!in) throw ConfigError("cannot read " + (fs::path(dir) / "archive.json").string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("archive.json: " + std::string(e.what()));
  }
  if (j.value("format", "") != "layopt-archive") throw ConfigError("archive.json: not an archive file");
  Archive a(archive_config_from_json(j.at("config")),
            j.at("kind") == "surrogate" ? ArchiveKind::Surrogate : ArchiveKind::GroundTruth);
  a.out_of_range_ = j.at("out_of_range").get<long long>();
  for (const auto& e : j.at("elites")) {
    Elite elite;
    elite.genome = read_layout_file((fs::path(dir) / e.at("genome_file").get<std::string>()).string());
    elite.repaired = read_layout_file((fs::path(dir) / e.at("repaired_file").get<std::string>()).string());
    elite.objective = e.at("objective").get<double>();
    elite.measures = {e.at("n_shelf_components").get<double>(), e.at("mean_task_length").get<double>()};
    if (e.value("has_eval", false)) {
      auto ev = std::make_shared<EvalResult>();
      ev->mean_throughput = elite.objective;
      ev->success_rate = e.at("success_rate").get<double>();
      ev->throughput_sd = e.at("throughput_sd").get<double>();
      ev->measures = elite.measures;
      elite.eval = std::move(ev);
    }
    a.cells_.emplace(e.at("cell").get<int>(), std::move(elite));
  }
  return a;
}

namespace {

constexpr Tile kGenomeTiles[3] = {Tile::Shelf, Tile::Endpoint, Tile::Empty};

Tile random_tile(std::mt19937_64& rng) { return kGenomeTiles[std::uniform_int_distribution<int>(0, 2)(rng)]; }

}  // namespace

Layout random_genome(const Layout& base, std::mt19937_64& rng) {
  Layout out = base;
  for (int v : out.storage_indices()) out.set(v, random_tile(rng));
  return out;
}

std::vector<Layout> select_batch(const Archive& archive, int b, const Layout& base, std::mt19937_64& rng) {
  std::vector<Layout> out;
  out.reserve(static_cast<std::size_t>(std::max(b, 0)));
  if (archive.empty()) {
    for (int i = 0; i < b; ++i) out.push_back(random_genome(base, rng));
    return out;
  }
  std::vector<const Elite*> elites;
  for (const auto& [cell, e] : archive.cells()) elites.push_back(&e);
  std::uniform_int_distribution<std::size_t> pick(0, elites.size() - 1);
  for (int i = 0; i < b; ++i) out.push_back(elites[pick(rng)]->genome);
  return out;
}

int sample_mutation_count(std::mt19937_64& rng, int max_k) {
  // std::geometric_distribution counts failures before the first success.
  std::geometric_distribution<int> g(0.5);
  return std::min(1 + g(rng), std::max(max_k, 0));
}

Layout mutate(const Layout& genome, std::mt19937_64& rng) {
  Layout out = genome;
  auto idx = out.storage_indices();
  const int k = sample_mutation_count(rng, static_cast<int>(idx.size()));
  // Partial Fisher–Yates: the first k entries are a uniform k-subset.
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), idx.size() - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[pick(rng)]);
    out.set(idx[static_cast<std::size_t>(i)], random_tile(rng));
  }
  return out;
}

std::vector<const Elite*> downsample(const Archive& archive, std::array<int, 2> dims, std::mt19937_64& rng) {
  const auto& c = archive.config();
  if (dims[0] <= 0 || dims[1] <= 0 || dims[0] > c.dims[0] || dims[1] > c.dims[1]) {
    throw ConfigError("downsample dims must be positive and no larger than the archive dims");
  }
  std::vector<std::vector<const Elite*>> groups(static_cast<std::size_t>(dims[0] * dims[1]));
  for (const auto& [cell, e] : archive.cells()) {
    const auto [i, j] = cell_coords(cell, c);
    const int si = static_cast<int>(static_cast<long long>(i) * dims[0] / c.dims[0]);
    const int sj = static_cast<int>(static_cast<long long>(j) * dims[1] / c.dims[1]);
    groups[static_cast<std::size_t>(si * dims[1] + sj)].push_back(&e);
  }
  std::vector<const Elite*> out;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    out.push_back(g[std::uniform_int_distribution<std::size_t>(0, g.size() - 1)(rng)]);
  }
  return out;
}

std::string heatmap_csv(const Archive& archive) {
  const auto& c = archive.config();
  std::ostringstream os;
  for (int i = 0; i < c.dims[0]; ++i) {
    for (int j = 0; j < c.dims[1]; ++j) {
      if (j) os << ',';
      if (const Elite* e = archive.find(i * c.dims[1] + j)) os << fmt(e->objective);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace layopt
