"""Scenario orchestration: simulate -> attack -> transform -> detect -> report.

All artifacts of a run land under one output directory with the config and
seeds embedded; reports are plain CSV/JSON without timestamps so reruns with
identical seeds are byte-identical.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attacks import AttackSpec, LabelMask, MeasurementTap, attack_label_mask
from .autoencoder import AutoencoderDetector, TrainConfig
from .clustering import kmeans_window_detector
from .dataset import NormalizationStats, normalize, to_angle_differences, windows
from .graphdet import (GATModel, GDNModel, GNNTrainConfig, adjacency_rows,
                       gat_score, gdn_score, train_gat, train_gdn)
from .metrics import localization_metrics, point_metrics
from .network import BusNetwork, load_bundled_network, load_network
from .scenarios import ScenarioConfig, training_scenarios
from .scoring import (AnomalyScoreSeries, localize, select_threshold,
                      write_score_series)
from .simulation import simulate, steady_state
from .trace import MeasurementTrace, write_trace

DETECTORS = ("kmeans", "autoencoder", "gat", "gdn")


class StageError(RuntimeError):
    """Pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def _load_net(cfg: ScenarioConfig) -> BusNetwork:
    return load_bundled_network() if cfg.network == "bundled" else load_network(cfg.network)


def simulate_scenario(cfg: ScenarioConfig, net: BusNetwork | None = None):
    """Returns (measured trace, truth mask or None). The tap feeds the AGC."""
    net = net if net is not None else _load_net(cfg)
    events = list(cfg.events)
    tap = None
    mask = None
    attack = cfg.attack
    if attack is not None:
        op = steady_state(net)
        if attack.kind == "rtw" and attack.phi_nom is None:
            nom = {b: float(op.angles[net.bus_index(b)]) for b in attack.targets}
            attack = AttackSpec(**{**_attack_kwargs(attack), "phi_nom": nom})
        tap = MeasurementTap(attack, net.bus_ids)
    trace = simulate(net, events, cfg.sim, measurement_tap=tap)
    trace = trace.with_angles(trace.angles, scenario_id=cfg.name)
    if attack is not None:
        mask = attack_label_mask(attack, trace.t, net.bus_ids)
    return trace, mask


def _attack_kwargs(spec: AttackSpec) -> dict:
    return {
        "kind": spec.kind, "targets": spec.targets, "t1": spec.t1, "t2": spec.t2,
        "c": spec.c, "mu": spec.mu, "sigma": spec.sigma, "m": spec.m,
        "beta": spec.beta, "phi_nom": spec.phi_nom, "seed": spec.seed,
        "literal_rtw": spec.literal_rtw,
    }


def prepare_trace(trace: MeasurementTrace, cfg: ScenarioConfig,
                  stats: NormalizationStats | None = None):
    """Angle differences against the reference bus, then normalization."""
    diff = to_angle_differences(trace, cfg.detectors.reference_bus)
    return normalize(diff, stats=stats)


def project_mask(mask: LabelMask, bus_ids: tuple) -> LabelMask:
    """Restrict a label mask to the given (e.g. post-difference) bus set."""
    cols = [mask.bus_ids.index(b) for b in bus_ids]
    sub = mask.mask[:, cols]
    return LabelMask(mask=sub, any_bus=sub.any(axis=1), bus_ids=tuple(bus_ids))


# ---------------------------------------------------------------------------
# model training on the attack-free catalog

def train_models(out_dir: str | Path, seed: int = 0,
                 scenarios: list | None = None,
                 gat_cfg: GNNTrainConfig | None = None,
                 gdn_cfg: GNNTrainConfig | None = None) -> dict:
    """Train GAT and GDN on the attack-free scenarios; persist checkpoints."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenarios = scenarios if scenarios is not None else training_scenarios()
    net = _load_net(scenarios[0])

    arrays = []
    stats = None
    val_proc = None
    for sc in scenarios:
        trace, _ = simulate_scenario(sc, net)
        proc, tr_stats = prepare_trace(trace, sc)
        stats = stats if stats is not None else tr_stats
        arrays.append(proc.angles)
        val_proc = proc
    stats.save(out_dir / "normalization.npz")

    gat_cfg = gat_cfg if gat_cfg is not None else GNNTrainConfig(
        seed=seed, train_stride=2, max_epochs=20, patience=4, batch_size=128)
    gdn_cfg = gdn_cfg if gdn_cfg is not None else GNNTrainConfig(
        seed=seed, train_stride=2, max_epochs=40, patience=6, batch_size=128)

    gdn, gdn_hist = train_gdn(arrays, gdn_cfg)
    gdn.save(out_dir / "gdn.npz")
    gat, gat_hist = train_gat(arrays, gat_cfg)
    gat.save(out_dir / "gat.npz")

    # the progressive autoencoder retrains per scenario, so only its firing
    # threshold is calibrated here: the largest per-sensor reconstruction
    # error it shows on the last (validation) attack-free trace
    ae_threshold = _calibrate_autoencoder(val_proc, scenarios[-1])
    (out_dir / "ae_threshold.json").write_text(
        json.dumps({"error_threshold": ae_threshold}, sort_keys=True) + "\n")

    with (out_dir / "graph.csv").open("w") as fh:
        fh.write("sensor,neighbor,similarity\n")
        ids = stats.bus_ids
        for i, j, s in adjacency_rows(gdn):
            fh.write(f"{ids[i]},{ids[j]},{s:.6f}\n")
    return {"gat": gat, "gdn": gdn, "stats": stats,
            "ae_threshold": ae_threshold,
            "gat_hist": gat_hist, "gdn_hist": gdn_hist}


def _calibrate_autoencoder(proc: MeasurementTrace, cfg: ScenarioConfig) -> float:
    ds = cfg.detectors
    det = AutoencoderDetector(
        n_sensors=len(proc.bus_ids), threshold=ds.silhouette_threshold,
        cfg=TrainConfig(seed=ds.autoencoder_seed),
        epochs_per_window=ds.autoencoder_epochs,
    )
    maxima = []
    for w in windows(proc, ds.window, ds.window):
        det.update(w)
        err = det.model.reconstruction_report(w.data.T).per_sensor_mean
        maxima.append(err.max())
    return select_threshold(np.asarray(maxima), ds.threshold_factor)


def load_models(models_dir: str | Path) -> dict:
    models_dir = Path(models_dir)
    out = {
        "gat": GATModel.load(models_dir / "gat.npz"),
        "gdn": GDNModel.load(models_dir / "gdn.npz"),
        "stats": NormalizationStats.load(models_dir / "normalization.npz"),
    }
    thr_path = models_dir / "ae_threshold.json"
    if thr_path.exists():
        out["ae_threshold"] = float(
            json.loads(thr_path.read_text())["error_threshold"])
    return out


# ---------------------------------------------------------------------------
# one scenario end to end

@dataclass
class ResultsBundle:
    scenario: ScenarioConfig
    trace: MeasurementTrace
    processed: MeasurementTrace
    window_truth: np.ndarray          # (n_windows,) bool
    verdicts: dict                    # detector -> per-window bool array
    scores: dict                      # detector -> AnomalyScoreSeries (gat/gdn)
    report: dict


def _windows_fired_from_samples(fired: np.ndarray, n_windows: int, w: int) -> np.ndarray:
    out = np.zeros(n_windows, dtype=bool)
    for k in range(n_windows):
        seg = fired[k * w:(k + 1) * w]
        out[k] = seg.mean() > 0.5 if seg.size else False
    return out


def run_scenario(cfg: ScenarioConfig, models: dict | None = None,
                 out_dir: str | Path | None = None,
                 detectors: tuple = DETECTORS) -> ResultsBundle:
    ds = cfg.detectors
    try:
        net = _load_net(cfg)
        trace, mask = simulate_scenario(cfg, net)
    except Exception as e:
        raise StageError("simulate", e) from e

    try:
        # every scenario shares the pre-event operating point, so per-trace
        # pre-event statistics put all traces in one frame
        proc, stats = prepare_trace(trace, cfg)
        pmask = project_mask(mask, proc.bus_ids) if mask is not None else None
    except Exception as e:
        raise StageError("transform", e) from e

    w_samples = int(round(ds.window * proc.sample_rate))
    wins = windows(proc, ds.window, ds.window, mask=pmask)
    n_windows = len(wins)
    truth = np.array([w.attacked for w in wins], dtype=bool)

    verdicts: dict = {}
    scores: dict = {}
    flagged: dict = {}
    try:
        if "kmeans" in detectors:
            vs = [kmeans_window_detector(w, ds.silhouette_threshold, seed=ds.kmeans_seed)
                  for w in wins]
            verdicts["kmeans"] = np.array([v.fired for v in vs], dtype=bool)
            flagged["kmeans"] = [v.flagged for v in vs]
        if "autoencoder" in detectors:
            det = AutoencoderDetector(
                n_sensors=len(proc.bus_ids), threshold=ds.silhouette_threshold,
                cfg=TrainConfig(seed=ds.autoencoder_seed),
                epochs_per_window=ds.autoencoder_epochs,
                error_threshold=(models or {}).get("ae_threshold"),
            )
            vs = [det.update(w) for w in wins]
            verdicts["autoencoder"] = np.array([v.fired for v in vs], dtype=bool)
            flagged["autoencoder"] = [v.flagged for v in vs]
    except Exception as e:
        raise StageError("detect-clustering", e) from e

    try:
        if models is not None and "gdn" in detectors:
            scores["gdn"] = gdn_score(models["gdn"], proc.angles, proc.t, proc.bus_ids)
            verdicts["gdn"] = _windows_fired_from_samples(
                scores["gdn"].fired, n_windows, w_samples)
        if models is not None and "gat" in detectors:
            scores["gat"] = gat_score(models["gat"], proc.angles, proc.t, proc.bus_ids)
            verdicts["gat"] = _windows_fired_from_samples(
                scores["gat"].fired, n_windows, w_samples)
    except Exception as e:
        raise StageError("detect-gnn", e) from e

    try:
        if ds.eval_unit == "sample":
            eval_truth = (pmask.any_bus if pmask is not None
                          else np.zeros(proc.n_samples, dtype=bool))
            eval_pred = {}
            for name, wv in verdicts.items():
                if name in scores:
                    eval_pred[name] = scores[name].fired
                else:
                    pv = np.zeros(proc.n_samples, dtype=bool)
                    for k, f in enumerate(wv):
                        if f:
                            pv[k * w_samples:(k + 1) * w_samples] = True
                    eval_pred[name] = pv
        else:
            eval_truth, eval_pred = truth, verdicts
        report = build_report(cfg, truth, verdicts, scores, flagged, wins,
                              eval_truth, eval_pred)
    except Exception as e:
        raise StageError("metrics", e) from e

    bundle = ResultsBundle(
        scenario=cfg, trace=trace, processed=proc, window_truth=truth,
        verdicts=verdicts, scores=scores, report=report,
    )
    if out_dir is not None:
        try:
            write_artifacts(bundle, Path(out_dir))
        except Exception as e:
            raise StageError("write", e) from e
    return bundle


def _ranking_from_flags(flagged_lists: list, wins: list, sensor_ids: tuple,
                        t1: float, t2: float) -> list:
    counts = {b: 0 for b in sensor_ids}
    for w, fl in zip(wins, flagged_lists):
        if w.start_time + w.width <= t1 or w.start_time >= t2:
            continue
        for b in fl:
            counts[b] += 1
    order = sorted(sensor_ids, key=lambda b: (-counts[b], sensor_ids.index(b)))
    return list(order)


def build_report(cfg: ScenarioConfig, truth: np.ndarray, verdicts: dict,
                 scores: dict, flagged: dict, wins: list,
                 eval_truth: np.ndarray | None = None,
                 eval_pred: dict | None = None) -> dict:
    attack = cfg.attack
    eval_truth = eval_truth if eval_truth is not None else truth
    eval_pred = eval_pred if eval_pred is not None else verdicts
    report: dict = {
        "scenario": cfg.name,
        "attack_kind": attack.kind if attack else None,
        "config": cfg.to_dict(),
        "eval_unit": cfg.detectors.eval_unit,
        "n_windows": int(truth.size),
        "truth_windows": [bool(v) for v in truth],
        "detectors": {},
    }
    sensor_ids = wins[0].sensor_ids if wins else ()
    for name in sorted(verdicts):
        pred = eval_pred[name]
        m = point_metrics(pred, eval_truth)
        entry = {
            "precision": round(m.precision, 6),
            "recall": round(m.recall, 6),
            "f1": round(m.f1, 6),
            "tp": m.counts.tp, "fp": m.counts.fp,
            "fn": m.counts.fn, "tn": m.counts.tn,
            "degenerate": m.degenerate,
            "fired_fraction": round(float(pred.mean()), 6),
        }
        if attack is not None:
            targets = [b for b in attack.targets if b in sensor_ids]
            if name in scores:
                ranked = localize(scores[name], attack.t1, attack.t2)
            else:
                ranked = _ranking_from_flags(flagged.get(name, []), wins,
                                             sensor_ids, attack.t1, attack.t2)
            if targets:
                loc = localization_metrics(ranked, set(targets), k=3)
                entry["localization"] = {
                    "hit_at_3": round(loc.hit_at_k, 6),
                    "mean_rank": round(loc.mean_rank, 6),
                    "top_buses": [str(b) for b in ranked[:5]],
                }
        report["detectors"][name] = entry
    return report


def write_artifacts(bundle: ResultsBundle, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = bundle.scenario
    cfg.save(out_dir / "scenario.yaml")
    write_trace(bundle.trace, out_dir / "trace.csv")
    write_trace(bundle.processed, out_dir / "processed.csv")
    for name, series in bundle.scores.items():
        write_score_series(series, out_dir / f"scores_{name}.csv")
    with (out_dir / "verdicts.csv").open("w") as fh:
        names = sorted(bundle.verdicts)
        fh.write("window,start_s,truth," + ",".join(names) + "\n")
        for k in range(bundle.window_truth.size):
            row = [str(k), format(k * cfg.detectors.window, ".3f"),
                   str(int(bundle.window_truth[k]))]
            row += [str(int(bundle.verdicts[n][k])) for n in names]
            fh.write(",".join(row) + "\n")
    (out_dir / "report.json").write_text(
        json.dumps(bundle.report, indent=2, sort_keys=True) + "\n")
    _plot_scores(bundle, out_dir)


def _plot_scores(bundle: ResultsBundle, out_dir: Path) -> None:
    if not bundle.scores:
        return
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    attack = bundle.scenario.attack
    for name, series in bundle.scores.items():
        fig, ax = plt.subplots(figsize=(9, 4))
        targets = set(attack.targets) if attack else set()
        for j, b in enumerate(series.sensor_ids):
            color = "red" if b in targets else "lightgray"
            z = 2 if b in targets else 1
            ax.plot(series.t, series.per_sensor[:, j], color=color, lw=0.7, zorder=z)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("deviation score")
        ax.set_title(f"{bundle.scenario.name}: per-bus {name} scores")
        fig.tight_layout()
        fig.savefig(out_dir / f"localization_{name}.png", dpi=110)
        plt.close(fig)


# ---------------------------------------------------------------------------
# suite

def _suite_cell(args):
    cfg_dict, models_dir, out_dir = args
    cfg = ScenarioConfig.from_dict(cfg_dict)
    models = load_models(models_dir)
    bundle = run_scenario(cfg, models=models, out_dir=Path(out_dir) / cfg.name)
    return cfg.name, bundle.report


def run_suite(scenarios: list, models_dir: str | Path, out_dir: str | Path,
              workers: int = 1) -> dict:
    """All suite cells; failures are recorded per cell and do not stop the run."""
    if not scenarios:
        raise ValueError("no scenarios")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(sc.to_dict(), str(models_dir), str(out_dir)) for sc in scenarios]
    results: dict = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for (name, report) in ex.map(_suite_cell, jobs):
                results[name] = report
    else:
        for job in jobs:
            name = job[0]["name"]
            try:
                _, report = _suite_cell(job)
                results[name] = report
            except Exception as e:  # cell marked failed, suite continues
                results[name] = {"scenario": name, "error": str(e)}
    write_suite_tables(results, out_dir)
    return results


def write_suite_tables(results: dict, out_dir: Path) -> None:
    rows = []
    for name in sorted(results):
        rep = results[name]
        if "error" in rep:
            rows.append((name, "-", "-", "", "", "", "failed"))
            continue
        for det, entry in sorted(rep["detectors"].items()):
            rows.append((name, rep.get("attack_kind") or "-", det,
                         f"{entry['precision']:.4f}", f"{entry['recall']:.4f}",
                         f"{entry['f1']:.4f}", "ok"))
    with (out_dir / "metrics_table.csv").open("w") as fh:
        fh.write("scenario,attack_kind,detector,precision,recall,f1,status\n")
        for r in rows:
            fh.write(",".join(str(x) for x in r) + "\n")
    summary = {
        name: ({"error": rep["error"]} if "error" in rep else {
            det: {k: entry[k] for k in ("precision", "recall", "f1")}
            for det, entry in rep["detectors"].items()
        })
        for name, rep in sorted(results.items())
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _plot_bars(results, out_dir)


def _plot_bars(results: dict, out_dir: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ok = {n: r for n, r in results.items() if "error" not in r and r["detectors"]}
    if not ok:
        return
    dets = sorted({d for r in ok.values() for d in r["detectors"]})
    metrics = ("precision", "recall", "f1")
    fig, axes = plt.subplots(1, 3, figsize=(13, 4), sharey=True)
    x = np.arange(len(ok))
    width = 0.8 / max(len(dets), 1)
    names = sorted(ok)
    for ax, metric in zip(axes, metrics):
        for i, det in enumerate(dets):
            vals = [ok[n]["detectors"].get(det, {}).get(metric, 0.0) for n in names]
            ax.bar(x + i * width, vals, width, label=det)
        ax.set_title(metric)
        ax.set_xticks(x + 0.4)
        ax.set_xticklabels(names, rotation=90, fontsize=7)
        ax.set_ylim(0, 1.05)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_dir / "detector_comparison.png", dpi=110)
    plt.close(fig)
