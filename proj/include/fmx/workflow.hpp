#pragma once

// Deterministic discrete-event simulator of the loosely-coupled distributed
// execution: FMO-shaped task DAG construction, a one-sided get/put/accumulate
// data store, a simple cost model, and performance prediction outputs.
//
// The simulator is single-threaded; it MODELS concurrency. Scheduling is
// event-driven list scheduling: when a worker frees, it takes the ready task
// with the largest cost, ties broken by smallest task id. Communication is
// modeled as arrival latency (alpha + beta_byte * values per cross-worker
// dependency edge), so per-worker busy time stays equal to task cost.

#include <algorithm>
#include <cstdio>
#include <map>
#include <mutex>
#include <queue>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "fmx/core.hpp"
#include "fmx/errors.hpp"

namespace fmx::workflow {

enum class TaskKind { Monomer, Dimer, EsFar, Reduce, RismSolve, Mediate };

inline std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::Monomer: return "monomer";
    case TaskKind::Dimer: return "dimer";
    case TaskKind::EsFar: return "esfar";
    case TaskKind::Reduce: return "reduce";
    case TaskKind::RismSolve: return "rism";
    case TaskKind::Mediate: return "mediate";
  }
  return "?";
}

struct Task {
  int id = 0;
  TaskKind kind = TaskKind::Monomer;
  int frag_i = -1;       // fragment (monomer) or first fragment (pair kinds)
  int frag_j = -1;       // second fragment for pair kinds
  int sweep = 0;         // monomer sweep number, 1-based
  std::vector<int> deps;
  double cost = 0.0;     // simulated time units
  double values = 0.0;   // output size, in values, for transfer cost
};

struct TaskGraph {
  std::vector<Task> tasks;
  // communication model, charged when a dependency crosses workers
  double comm_alpha = 0.0;      // per-message latency
  double comm_per_value = 0.0;  // per-value transfer time
};

struct CostModel {
  double a = 1.0;          // time per atom^3
  double b = 1.0;          // fixed task overhead
  double alpha = 0.0;      // per-message latency
  double beta_byte = 0.0;  // per-value transfer time
};

struct TraceEntry {
  int task_id;
  TaskKind kind;
  int worker;
  double start;
  double end;
};

struct Trace {
  std::vector<TraceEntry> assignments;  // ordered by (start, task id)
  double makespan = 0.0;
  std::vector<double> busy;  // per-worker busy time
};

// Builds the FMO-shaped DAG: `scc_sweeps` rounds of monomer tasks with a
// Jacobi barrier between rounds (sweep s depends on ALL sweep s-1 monomers),
// dimer tasks for near pairs and EsFar tasks for far pairs hanging off the
// final sweep, and one Reduce task at the bottom. Costs follow a cubic
// solve model: monomer a n^3 + b, dimer a (n_I+n_J)^3 + b, EsFar b,
// Reduce b.
inline TaskGraph build_fmo_dag(const MolecularSystem& sys,
                               const FragmentationScheme& scheme, int scc_sweeps,
                               const CostModel& cost) {
  if (scc_sweeps < 1) throw ParameterError("build_fmo_dag: scc_sweeps must be >= 1");
  if (cost.a < 0 || cost.b < 0 || cost.alpha < 0 || cost.beta_byte < 0)
    throw ParameterError("build_fmo_dag: cost model entries must be >= 0");
  validate(scheme, sys);

  TaskGraph dag;
  dag.comm_alpha = cost.alpha;
  dag.comm_per_value = cost.beta_byte;
  const int nf = scheme.count();
  auto cube = [](double x) { return x * x * x; };

  std::vector<int> prev_sweep, this_sweep;
  for (int s = 1; s <= scc_sweeps; ++s) {
    this_sweep.clear();
    for (int f = 0; f < nf; ++f) {
      Task t;
      t.id = static_cast<int>(dag.tasks.size());
      t.kind = TaskKind::Monomer;
      t.frag_i = f;
      t.sweep = s;
      t.deps = prev_sweep;
      const double n = static_cast<double>(scheme.fragments[f].atom_indices.size());
      t.cost = cost.a * cube(n) + cost.b;
      t.values = n;  // publishes one charge per atom
      this_sweep.push_back(t.id);
      dag.tasks.push_back(std::move(t));
    }
    prev_sweep = this_sweep;
  }

  std::vector<int> pair_tasks;
  for (int i = 0; i < nf; ++i) {
    for (int j = i + 1; j < nf; ++j) {
      const double dmin =
          min_fragment_distance(sys, scheme.fragments[i], scheme.fragments[j]);
      Task t;
      t.id = static_cast<int>(dag.tasks.size());
      t.frag_i = i;
      t.frag_j = j;
      t.deps = prev_sweep;
      if (dmin <= scheme.near_pair_cutoff) {
        t.kind = TaskKind::Dimer;
        const double n = static_cast<double>(scheme.fragments[i].atom_indices.size() +
                                             scheme.fragments[j].atom_indices.size());
        t.cost = cost.a * cube(n) + cost.b;
        t.values = n;
      } else {
        t.kind = TaskKind::EsFar;
        t.cost = cost.b;
        t.values = 1;
      }
      pair_tasks.push_back(t.id);
      dag.tasks.push_back(std::move(t));
    }
  }

  Task reduce;
  reduce.id = static_cast<int>(dag.tasks.size());
  reduce.kind = TaskKind::Reduce;
  reduce.deps = pair_tasks.empty() ? prev_sweep : pair_tasks;
  reduce.cost = cost.b;
  reduce.values = 1;
  dag.tasks.push_back(std::move(reduce));
  return dag;
}

// Event-driven list scheduling. Deterministic for identical inputs; `seed`
// is reserved for stochastic cost models and does not affect scheduling.
inline Trace simulate(const TaskGraph& dag, int workers, unsigned seed = 0) {
  (void)seed;
  if (workers < 1) throw ParameterError("simulate: workers must be >= 1");
  const int nt = static_cast<int>(dag.tasks.size());
  for (int i = 0; i < nt; ++i) {
    if (dag.tasks[i].id != i)
      throw ParameterError("simulate: task ids must be dense 0..n-1 in order");
    if (dag.tasks[i].cost < 0) throw ParameterError("simulate: negative task cost");
    for (int d : dag.tasks[i].deps)
      if (d < 0 || d >= nt)
        throw ParameterError("simulate: dependency on unknown task " + std::to_string(d));
  }

  std::vector<int> pending(nt);
  std::vector<std::vector<int>> dependents(nt);
  for (const Task& t : dag.tasks) {
    pending[t.id] = static_cast<int>(t.deps.size());
    for (int d : t.deps) dependents[d].push_back(t.id);
  }

  // ready tasks ordered by (cost desc, id asc)
  auto ready_less = [&](int a, int b) {
    if (dag.tasks[a].cost != dag.tasks[b].cost) return dag.tasks[a].cost < dag.tasks[b].cost;
    return a > b;
  };
  std::priority_queue<int, std::vector<int>, decltype(ready_less)> ready(ready_less);
  for (int i = 0; i < nt; ++i)
    if (pending[i] == 0) ready.push(i);

  // completion events ordered by (time asc, task id asc)
  using Event = std::pair<double, int>;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events;

  std::vector<int> idle;  // worker ids, kept sorted ascending
  for (int w = workers - 1; w >= 0; --w) idle.push_back(w);

  std::vector<double> end_time(nt, 0.0);
  std::vector<int> assigned_worker(nt, -1);
  Trace trace;
  trace.busy.assign(workers, 0.0);
  double now = 0.0;
  int done = 0;

  while (done < nt) {
    // hand ready tasks to idle workers, biggest cost first, smallest ids on ties
    while (!idle.empty() && !ready.empty()) {
      const int tid = ready.top();
      ready.pop();
      const int w = idle.back();
      idle.pop_back();
      const Task& t = dag.tasks[tid];
      double arrival = now;
      for (int d : t.deps) {
        double ready_at = end_time[d];
        if (assigned_worker[d] != w)
          ready_at += dag.comm_alpha + dag.comm_per_value * dag.tasks[d].values;
        arrival = std::max(arrival, ready_at);
      }
      const double start = arrival;
      const double end = start + t.cost;
      assigned_worker[tid] = w;
      end_time[tid] = end;
      trace.assignments.push_back({tid, t.kind, w, start, end});
      trace.busy[w] += t.cost;
      events.push({end, tid});
    }

    if (events.empty()) {
      if (done < nt)
        throw CycleError("task graph has a cycle: " + std::to_string(nt - done) +
                         " tasks can never become ready");
      break;
    }

    // advance to the next completion; drain every event at that instant
    now = events.top().first;
    while (!events.empty() && events.top().first == now) {
      const int tid = events.top().second;
      events.pop();
      ++done;
      const int w = assigned_worker[tid];
      idle.insert(std::lower_bound(idle.begin(), idle.end(), w, std::greater<int>()), w);
      for (int dep : dependents[tid])
        if (--pending[dep] == 0) ready.push(dep);
    }
  }

  std::sort(trace.assignments.begin(), trace.assignments.end(),
            [](const TraceEntry& a, const TraceEntry& b) {
              if (a.start != b.start) return a.start < b.start;
              return a.task_id < b.task_id;
            });
  for (const TraceEntry& e : trace.assignments)
    trace.makespan = std::max(trace.makespan, e.end);
  return trace;
}

inline std::string write_trace_csv(const Trace& trace) {
  std::ostringstream out;
  out << "task_id,kind,worker,start,end\n";
  char buf[128];
  for (const TraceEntry& e : trace.assignments) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%d,%.9g,%.9g\n", e.task_id,
                  to_string(e.kind).c_str(), e.worker, e.start, e.end);
    out << buf;
  }
  return out.str();
}

struct SpeedupRow {
  int workers;
  double makespan;
  double speedup;     // makespan(1) / makespan(P)
  double efficiency;  // speedup / P
};

inline std::vector<SpeedupRow> speedup_curve(const TaskGraph& dag,
                                             const std::vector<int>& worker_counts) {
  if (worker_counts.empty()) throw ParameterError("speedup_curve: no worker counts");
  const double serial = simulate(dag, 1).makespan;
  std::vector<SpeedupRow> rows;
  for (int p : worker_counts) {
    const double m = simulate(dag, p).makespan;
    rows.push_back({p, m, serial / m, serial / m / p});
  }
  return rows;
}

inline std::string write_speedup_csv(const std::vector<SpeedupRow>& rows) {
  std::ostringstream out;
  out << "workers,makespan,speedup,efficiency\n";
  char buf[128];
  for (const SpeedupRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", r.workers, r.makespan,
                  r.speedup, r.efficiency);
    out << buf;
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// One-sided data store
// ---------------------------------------------------------------------------

// get/put/accumulate cells. Cells hold either a number or a payload
// reference (for example a catalog key). Accumulate is commutative
// addition, so the final value is independent of arrival order; get on an
// unwritten key is an error, never a silent default. Operations are
// atomic under concurrent access.
class DataStore {
 public:
  using Cell = std::variant<double, std::string>;

  void put(const std::string& key, Cell value) {
    std::lock_guard lock(mutex_);
    cells_[key] = std::move(value);
  }

  void accumulate(const std::string& key, double delta) {
    std::lock_guard lock(mutex_);
    auto it = cells_.find(key);
    if (it == cells_.end()) {
      cells_[key] = delta;
      return;
    }
    double* num = std::get_if<double>(&it->second);
    if (!num)
      throw SemanticError("accumulate on key '" + key + "' holding a payload reference");
    *num += delta;
  }

  Cell get(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = cells_.find(key);
    if (it == cells_.end())
      throw NotFoundError("store get on unwritten key '" + key + "'");
    return it->second;
  }

  double get_number(const std::string& key) const {
    Cell c = get(key);
    const double* num = std::get_if<double>(&c);
    if (!num) throw SemanticError("key '" + key + "' holds a payload reference");
    return *num;
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Cell> cells_;
};

}  // namespace fmx::workflow
