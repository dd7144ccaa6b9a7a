#!/usr/bin/env python3
"""Solves an MPS file with HiGHS and writes `name value` lines.

Usage: highs_solve.py MODEL.mps SOLUTION.sol [TIME_LIMIT] [GAP]
"""
import sys

import highspy


def main():
    mps, sol = sys.argv[1], sys.argv[2]
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    if len(sys.argv) > 3:
        h.setOptionValue("time_limit", float(sys.argv[3]))
    if len(sys.argv) > 4:
        h.setOptionValue("mip_rel_gap", float(sys.argv[4]))
    h.readModel(mps)
    h.run()
    status = h.getModelStatus()
    ms = highspy.HighsModelStatus
    info = h.getInfo()
    with open(sol, "w") as out:
        if status == ms.kOptimal:
            out.write("=status= optimal\n")
        elif status == ms.kInfeasible:
            out.write("=status= infeasible\n")
            return
        elif status == ms.kTimeLimit:
            out.write("=status= time_limit\n")
        else:
            out.write("=status= feasible\n")
        bound = getattr(info, "mip_dual_bound", None)
        if bound is not None and abs(bound) < 1e30:
            out.write(f"=bound= {bound!r}\n")
        lp = h.getLp()
        values = h.getSolution().col_value
        for name, value in zip(lp.col_names_, values):
            out.write(f"{name} {value!r}\n")


if __name__ == "__main__":
    main()
