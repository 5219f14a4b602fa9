#include <dlfcn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include "layopt/repair.hpp"

#ifndef LAYOPT_HIGHS_DEFAULT_LIBRARY
#define LAYOPT_HIGHS_DEFAULT_LIBRARY ""
#endif

namespace layopt {

namespace {

// Subset of the HiGHS C API (HighsInt is 32-bit in standard builds; checked at load).
using HighsInt = std::int32_t;
struct HighsApi {
  void* (*create)();
  void (*destroy)(void*);
  HighsInt (*pass_mip)(void*, HighsInt, HighsInt, HighsInt, HighsInt, HighsInt, double, const double*,
                       const double*, const double*, const double*, const double*, const HighsInt*,
                       const HighsInt*, const double*, const HighsInt*);
  HighsInt (*run)(void*);
  HighsInt (*get_model_status)(const void*);
  HighsInt (*get_solution)(const void*, double*, double*, double*, double*);
  HighsInt (*set_bool)(void*, const char*, HighsInt);
  HighsInt (*set_int)(void*, const char*, HighsInt);
  HighsInt (*set_double)(void*, const char*, double);
  HighsInt (*get_int_info)(const void*, const char*, HighsInt*);
  double (*get_infinity)(const void*);
  HighsInt (*sizeof_highs_int)();
};

constexpr HighsInt kMatrixRowwise = 2;
constexpr HighsInt kMinimize = 1;
constexpr HighsInt kStatusError = -1;
constexpr HighsInt kModelOptimal = 7;
constexpr HighsInt kModelInfeasible = 8;
constexpr HighsInt kModelUnboundedOrInfeasible = 9;
constexpr HighsInt kSolutionFeasible = 2;

std::vector<std::string> candidate_libraries(const std::string& explicit_path) {
  std::vector<std::string> c;
  if (!explicit_path.empty()) return {explicit_path};
  if (const char* env = std::getenv("LAYOPT_HIGHS_LIBRARY"); env && *env) c.emplace_back(env);
  if (std::string(LAYOPT_HIGHS_DEFAULT_LIBRARY).size()) c.emplace_back(LAYOPT_HIGHS_DEFAULT_LIBRARY);
  c.emplace_back("libhighs.so.1");
  c.emplace_back("libhighs.so");
  return c;
}

struct LoadedApi {
  HighsApi api{};
  std::string path;
  std::string error;
};

const LoadedApi& load_api(const std::string& explicit_path) {
  static std::mutex mu;
  static std::unordered_map<std::string, LoadedApi> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(explicit_path);
  if (it != cache.end()) return it->second;
  LoadedApi out;
  std::string errors;
  for (const auto& path : candidate_libraries(explicit_path)) {
    void* h = dlopen(path.c_str(), RTLD_NOW | RTLD_LOCAL);
    if (!h) {
      errors += "\n  " + path + ": " + dlerror();
      continue;
    }
    auto sym = [&](const char* name) {
      void* p = dlsym(h, name);
      if (!p) throw SolverError(std::string("HiGHS library ") + path + " lacks symbol " + name);
      return p;
    };
    try {
      HighsApi a{};
      a.create = reinterpret_cast<decltype(a.create)>(sym("Highs_create"));
      a.destroy = reinterpret_cast<decltype(a.destroy)>(sym("Highs_destroy"));
      a.pass_mip = reinterpret_cast<decltype(a.pass_mip)>(sym("Highs_passMip"));
      a.run = reinterpret_cast<decltype(a.run)>(sym("Highs_run"));
      a.get_model_status = reinterpret_cast<decltype(a.get_model_status)>(sym("Highs_getModelStatus"));
      a.get_solution = reinterpret_cast<decltype(a.get_solution)>(sym("Highs_getSolution"));
      a.set_bool = reinterpret_cast<decltype(a.set_bool)>(sym("Highs_setBoolOptionValue"));
      a.set_int = reinterpret_cast<decltype(a.set_int)>(sym("Highs_setIntOptionValue"));
      a.set_double = reinterpret_cast<decltype(a.set_double)>(sym("Highs_setDoubleOptionValue"));
      a.get_int_info = reinterpret_cast<decltype(a.get_int_info)>(sym("Highs_getIntInfoValue"));
      a.get_infinity = reinterpret_cast<decltype(a.get_infinity)>(sym("Highs_getInfinity"));
      a.sizeof_highs_int = reinterpret_cast<decltype(a.sizeof_highs_int)>(sym("Highs_getSizeofHighsInt"));
      if (a.sizeof_highs_int() != sizeof(HighsInt)) {
        errors += "\n  " + path + ": unsupported HighsInt width";
        continue;
      }
      out.api = a;
      out.path = path;
      break;
    } catch (const SolverError& e) {
      errors += "\n  " + std::string(e.what());
    }
  }
  if (out.path.empty()) out.error = "cannot load the HiGHS shared library (set LAYOPT_HIGHS_LIBRARY):" + errors;
  return cache.emplace(explicit_path, std::move(out)).first->second;
}

}  // namespace

HighsAdapter::HighsAdapter(std::string library_path) {
  const auto& loaded = load_api(library_path);
  if (loaded.path.empty()) throw SolverError(loaded.error);
  library_ = loaded.path;
}

bool HighsAdapter::available(const std::string& library_path) { return !load_api(library_path).path.empty(); }

SolveResult HighsAdapter::solve(const RepairModel& m, double time_limit) {
  const HighsApi& api = load_api(library_).api;
  void* h = api.create();
  struct Guard {
    const HighsApi& api;
    void* h;
    ~Guard() { api.destroy(h); }
  } guard{api, h};
  const double inf = api.get_infinity(h);
  const auto nc = static_cast<HighsInt>(m.variables.size());
  const auto nr = static_cast<HighsInt>(m.constraints.size());
  std::vector<double> cost, col_lo, col_hi, row_lo, row_hi, values;
  std::vector<HighsInt> integrality, start, index;
  for (const auto& v : m.variables) {
    cost.push_back(v.objective);
    col_lo.push_back(v.lower);
    col_hi.push_back(v.upper >= kInfinity ? inf : v.upper);
    integrality.push_back(v.binary ? 1 : 0);
  }
  for (const auto& c : m.constraints) {
    start.push_back(static_cast<HighsInt>(index.size()));
    for (const auto& t : c.terms) {
      index.push_back(t.var);
      values.push_back(t.coef);
    }
    row_lo.push_back(c.sense == Sense::LessEqual ? -inf : c.rhs);
    row_hi.push_back(c.sense == Sense::GreaterEqual ? inf : c.rhs);
  }
  api.set_bool(h, "output_flag", 0);
  api.set_double(h, "time_limit", time_limit);
  api.set_double(h, "mip_rel_gap", 0.0);
  // The objective is integral, so a gap below one already proves optimality.
  api.set_double(h, "mip_abs_gap", 1.0 - 1e-6);
  api.set_int(h, "random_seed", 0);
  if (api.pass_mip(h, nc, nr, static_cast<HighsInt>(index.size()), kMatrixRowwise, kMinimize, 0.0, cost.data(),
                   col_lo.data(), col_hi.data(), row_lo.data(), row_hi.data(), start.data(), index.data(),
                   values.data(), integrality.data()) == kStatusError) {
    return {SolveStatus::Error, {}, "HiGHS rejected the model"};
  }
  if (api.run(h) == kStatusError) return {SolveStatus::Error, {}, "HiGHS run failed"};
  const HighsInt status = api.get_model_status(h);
  if (status == kModelInfeasible || status == kModelUnboundedOrInfeasible) return {SolveStatus::Infeasible, {}, ""};
  HighsInt primal = 0;
  api.get_int_info(h, "primal_solution_status", &primal);
  SolveResult r;
  if (primal == kSolutionFeasible) {
    r.values.assign(m.variables.size(), 0.0);
    std::vector<double> col_dual(m.variables.size()), row_value(m.constraints.size()), row_dual(m.constraints.size());
    api.get_solution(h, r.values.data(), col_dual.data(), row_value.data(), row_dual.data());
  }
  if (status == kModelOptimal) {
    r.status = SolveStatus::Optimal;
  } else {
    r.status = r.values.empty() ? SolveStatus::Timeout : SolveStatus::Feasible;
    r.message = "HiGHS model status " + std::to_string(status);
  }
  return r;
}

CommandAdapter::CommandAdapter(std::string command, std::string work_dir)
    : command_(std::move(command)), work_dir_(std::move(work_dir)) {
  if (work_dir_.empty()) work_dir_ = std::filesystem::temp_directory_path().string();
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

}  // namespace

SolveResult CommandAdapter::solve(const RepairModel& m, double time_limit) {
  static std::atomic<int> counter{0};
  const auto path = std::filesystem::path(work_dir_) /
                    ("layopt-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".lp");
  {
    std::ofstream out(path);
    if (!out) throw SolverError("cannot write " + path.string());
    out << export_lp(m);
  }
  std::ostringstream cmd;
  cmd << command_ << ' ' << shell_quote(path.string()) << ' ' << time_limit;
  FILE* pipe = ::popen(cmd.str().c_str(), "r");
  if (!pipe) {
    std::filesystem::remove(path);
    throw SolverError("cannot start solver command: " + command_);
  }
  std::string text;
  char buf[4096];
  while (std::size_t k = std::fread(buf, 1, sizeof buf, pipe)) text.append(buf, k);
  const int raw = ::pclose(pipe);
  std::filesystem::remove(path);
  const int code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;

  SolveResult r;
  switch (code) {
    case 0: r.status = SolveStatus::Optimal; break;
    case 1: r.status = SolveStatus::Feasible; break;
    case 2: return {SolveStatus::Infeasible, {}, ""};
    case 3: return {SolveStatus::Timeout, {}, ""};
    default: return {SolveStatus::Error, {}, "solver command exited with status " + std::to_string(code)};
  }
  std::unordered_map<std::string, int> by_name;
  for (std::size_t i = 0; i < m.variables.size(); ++i) by_name.emplace(m.variables[i].name, static_cast<int>(i));
  r.values.assign(m.variables.size(), 0.0);
  std::istringstream in(text);
  std::string name;
  double value = 0.0;
  while (in >> name >> value) {
    auto it = by_name.find(name);
    if (it != by_name.end()) r.values[it->second] = value;
  }
  return r;
}

std::unique_ptr<SolverAdapter> make_solver(const std::string& spec_in) {
  std::string spec = spec_in;
  if (spec.empty()) {
    const char* env = std::getenv("LAYOPT_SOLVER");
    spec = env && *env ? env : "highs";
  }
  if (spec == "highs") return std::make_unique<HighsAdapter>();
  if (spec.rfind("highs:", 0) == 0) return std::make_unique<HighsAdapter>(spec.substr(6));
  if (spec.rfind("command:", 0) == 0) return std::make_unique<CommandAdapter>(spec.substr(8));
  throw SolverError("unknown solver spec '" + spec + "' (expected highs, highs:<lib> or command:<exe>)");
}

}  // namespace layopt
