#!/usr/bin/env python3
"""External MILP solver for `--solver command:tools/highs_lp_solver.py`.

Usage: highs_lp_solver.py <model.lp> <time_limit_seconds>

Prints `<variable> <value>` lines and reports the status through the exit
code: 0 optimal, 1 feasible (limit reached), 2 infeasible, 3 limit reached
without a solution, 4 anything else.
"""
import sys

import highspy


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 4
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("time_limit", float(sys.argv[2]))
    h.setOptionValue("mip_rel_gap", 0.0)
    h.setOptionValue("mip_abs_gap", 1.0 - 1e-6)
    if h.readModel(sys.argv[1]) == highspy.HighsStatus.kError:
        print(f"cannot read {sys.argv[1]}", file=sys.stderr)
        return 4
    h.run()
    status = h.getModelStatus()
    if status in (highspy.HighsModelStatus.kInfeasible, highspy.HighsModelStatus.kUnboundedOrInfeasible):
        return 2
    info = h.getInfo()
    if info.primal_solution_status != 2:
        return 3 if status == highspy.HighsModelStatus.kTimeLimit else 4
    values = h.getSolution().col_value
    lp = h.getLp()
    for name, value in zip(lp.col_names_, values):
        print(f"{name} {value:.17g}")
    return 0 if status == highspy.HighsModelStatus.kOptimal else 1


if __name__ == "__main__":
    sys.exit(main())
