"""Smoke test for the tps_kinetostatics extension module."""

import math

import tps_kinetostatics as tps


def main():
    cfg = tps.Configuration("C-C-C")
    assert cfg.name == "C-C-C"
    assert cfg.pulleys[0]

    sweep = cfg.sweep(steps=80)
    assert len(sweep) >= 81
    assert sweep.terminal in ("max_tension", "all_locked")
    rof = sweep.rof_deg
    assert all(b >= a - 1e-9 for a, b in zip(rof, rof[1:])), "flexion must grow with tension"
    assert sweep.csv().startswith("T_s,")
    print(f"C-C-C: {rof[-1]:.1f} deg at {sweep.tension[-1]:.2f} N")

    two = tps.Configuration("C~D-C~D=C", gamma=0.5)
    s2 = two.sweep(t_max=12.8, steps=80, exclude_joints=["MCP"])
    assert not math.isnan(s2.stress_mpa[-1])
    print(f"C~D-C~D=C: ps {s2.stress_mpa[-1]:.2f} MPa, bw {s2.bowstring_mm[-1]:.2f} mm")

    assert abs(tps.range_of_flexion([10.0, 20.0, 30.0]) - 60.0) < 1e-12

    rows = tps.table2("fds")
    assert len(rows) == 4 and all(r["ok"] for r in rows)

    gap = tps.compare_fem("C-C-C", t_max=1.0, steps=2, elements=4)
    assert len(gap) == 2

    try:
        tps.Configuration("C-Q-C")
    except ValueError:
        pass
    else:
        raise AssertionError("bad name must raise ValueError")

    assert "a-width" in tps.figure_presets()
    print("smoke test OK")


if __name__ == "__main__":
    main()
