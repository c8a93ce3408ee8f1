"""The four false-data injection attacks, applied to one measured trace.

Simulates the shipped far-placement scenario without any attack, then
falsifies buses 33/37/50 over the [2 s, 22 s] window with each attack kind
at its large magnitude.  The plots show the angle difference of attacked
bus 33 against the reference bus: step and poison are visible jumps, ramp
and riding-the-wave grow slowly and stay near the natural signal.

Run:  python demos/02_injection_attacks.py
"""
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from fdibench.attacks import AttackSpec, apply_attack
from fdibench.dataset import to_angle_differences
from fdibench.runner import simulate_scenario
from fdibench.scenarios import attack_scenario

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

base = attack_scenario("step", "large", "far")
clean_cfg = type(base)(name="clean", sim=base.sim, events=base.events)
clean, _ = simulate_scenario(clean_cfg)

ATTACKS = {
    "step": AttackSpec("step", (33, 37, 50), 2.0, 22.0, c=1.03),
    "poison": AttackSpec("poison", (33, 37, 50), 2.0, 22.0, mu=0.0,
                         sigma=0.08, seed=1000),
    "ramp": AttackSpec("ramp", (33, 37, 50), 2.0, 22.0, m=7e-5),
    "rtw": AttackSpec("rtw", (33, 37, 50), 2.0, 22.0, beta=1.5e-3),
}

fig, axes = plt.subplots(2, 2, figsize=(11, 6), sharex=True)
for ax, (kind, spec) in zip(axes.ravel(), ATTACKS.items()):
    attacked = apply_attack(clean, spec)
    for tr, color, label in ((clean, "gray", "true"),
                             (attacked, "firebrick", "measured")):
        diff = to_angle_differences(tr, reference_bus=1)
        col = diff.bus_ids.index(33)
        ax.plot(diff.t, diff.angles[:, col], color=color, lw=0.8, label=label)
    ax.axvspan(2.0, 22.0, color="orange", alpha=0.08)
    ax.set_title(kind)
    ax.legend(fontsize=8)
for ax in axes[1]:
    ax.set_xlabel("time (s)")
for ax in axes[:, 0]:
    ax.set_ylabel("angle diff 33-1 (rad)")

fig.tight_layout()
fig.savefig(OUT / "02_attacks.png", dpi=120)
print(f"wrote {OUT / '02_attacks.png'}")
