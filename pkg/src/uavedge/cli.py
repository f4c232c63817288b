"""Command-line entry points: run, train, sweep, oracle, grad-check.

Configs are flat ``key = value`` text files (``#`` comments allowed).  Every
key has a reference default; unknown keys are rejected with their line
number, and ``--print-config`` emits a file that parses back to the same
configuration.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .channel import AgChannelParams, OffloadChannelParams
from .edge import EdgeParams
from .field import FieldConfig
from .gridoracle import ORACLE_MAX_UAVS, p2b_grid_oracle
from .planner import PlannerConfig
from .scheduler import SchedulerConfig, p2b_objective, schedule_slot
from .sim import POLICIES, SimConfig, normalized_config, run_experiment, train_planner

# key -> (type, where, attr). "where" picks the sub-config the value lands in.
CONFIG_KEYS = {
    "seed": (int, "sim", "seed"),
    "duration_slots": (int, "sim", "duration_slots"),
    "policy": (str, "sim", "policy"),
    "uav_count": (int, "sim", "uav_count"),
    "coverage_radius": (float, "sim", "coverage_radius"),
    "slot_tau": (float, "sim", "slot_tau"),
    "checkpoint_path": (str, "sim", "checkpoint_path"),
    "assert_lemma1": (bool, "sim", "assert_lemma1"),
    "sensor_count": (int, "field", "sensor_count"),
    "area_width": (float, "field", None),
    "area_height": (float, "field", None),
    "lambda_low": (float, "field", None),
    "lambda_high": (float, "field", None),
    "a_max": (float, "field", "a_max"),
    "uplink_rate": (float, "field", "uplink_rate"),
    "density_skew": (float, "field", "density_skew"),
    "carrier_freq_hz": (float, "ag", "carrier_freq_hz"),
    "eta_los": (float, "ag", "eta_los"),
    "eta_nlos": (float, "ag", "eta_nlos"),
    "env_a": (float, "ag", "env_a"),
    "env_b": (float, "ag", "env_b"),
    "g0": (float, "offload", "g0"),
    "d0": (float, "offload", "d0"),
    "pathloss_exp": (float, "offload", "pathloss_exp"),
    "bandwidth_w": (float, "offload", "bandwidth_w"),
    "noise_psd": (float, "offload", "noise_psd"),
    "cloud_x": (float, "offload", None),
    "cloud_y": (float, "offload", None),
    "f_max": (float, "edge", "f_max"),
    "kappa": (float, "edge", "kappa"),
    "cycles_per_bit": (float, "edge", "cycles_per_bit"),
    "p_max": (float, "edge", "p_max"),
    "v_tradeoff": (float, "scheduler", "v_tradeoff"),
    "epsilon_floor": (float, "scheduler", "epsilon_floor"),
    "max_outer_iters": (int, "scheduler", "max_outer_iters"),
    "max_dual_iters": (int, "scheduler", "max_dual_iters"),
    "bisection_tol": (float, "scheduler", "bisection_tol"),
    "convergence_tol": (float, "scheduler", "convergence_tol"),
    "gamma": (float, "planner", "gamma"),
    "alpha_max": (float, "planner", "alpha_max"),
    "balanced_alpha": (bool, "planner", "balanced_alpha"),
    "eps0": (float, "planner", "eps0"),
    "eps_decay": (float, "planner", "eps_decay"),
    "eps_reset_period": (int, "planner", "eps_reset_period"),
    "target_sync_steps": (int, "planner", "target_sync_steps"),
    "batch_size": (int, "planner", "batch_size"),
    "replay_capacity": (int, "planner", "replay_capacity"),
    "overlap_penalty": (float, "planner", "overlap_penalty"),
    "step_length": (float, "planner", "step_length"),
    "path_slot_multiple": (int, "planner", "path_slot_multiple"),
    "obs_resolution": (int, "planner", "obs_resolution"),
    "obs_span": (float, "planner", "obs_span"),
    "learning_rate": (float, "planner", "learning_rate"),
    "trains_per_path_slot": (int, "planner", "trains_per_path_slot"),
}


class ConfigError(ValueError):
    pass


def _parse_value(key, text, line_no):
    typ = CONFIG_KEYS[key][0]
    try:
        if typ is bool:
            low = text.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError("expected true/false")
        return typ(text)
    except ValueError as exc:
        raise ConfigError(f"line {line_no}: key '{key}': {exc}") from exc


def read_config_text(text: str) -> dict:
    """Parse flat key = value lines into a raw {key: value} dict."""
    raw = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected 'key = value', "
                              f"got {line.strip()!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {line_no}: unknown key '{key}'")
        raw[key] = _parse_value(key, value, line_no)
    return raw


def build_config(raw: dict) -> SimConfig:
    """Assemble a validated SimConfig from raw key/value overrides."""
    groups = {"sim": {}, "field": {}, "ag": {}, "offload": {}, "edge": {},
              "scheduler": {}, "planner": {}}
    pair_keys = {}
    for key, value in raw.items():
        _, where, attr = CONFIG_KEYS[key]
        if attr is None:
            pair_keys[key] = value
        else:
            groups[where][attr] = value

    field_kwargs = dict(groups["field"])
    width = pair_keys.get("area_width", FieldConfig().area[0])
    height = pair_keys.get("area_height", FieldConfig().area[1])
    field_kwargs["area"] = (width, height)
    lo = pair_keys.get("lambda_low", FieldConfig().lambda_range[0])
    hi = pair_keys.get("lambda_high", FieldConfig().lambda_range[1])
    field_kwargs["lambda_range"] = (lo, hi)

    offload_kwargs = dict(groups["offload"])
    default_cloud = OffloadChannelParams().cloud_position
    offload_kwargs["cloud_position"] = np.array([
        pair_keys.get("cloud_x", default_cloud[0]),
        pair_keys.get("cloud_y", default_cloud[1])])

    try:
        cfg = SimConfig(field=FieldConfig(**field_kwargs),
                        ag=AgChannelParams(**groups["ag"]),
                        offload=OffloadChannelParams(**offload_kwargs),
                        edge=EdgeParams(**groups["edge"]),
                        scheduler=SchedulerConfig(**groups["scheduler"]),
                        planner=PlannerConfig(**groups["planner"]),
                        **groups["sim"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.scheduler.v_tradeoff < 0:
        raise ConfigError("v_tradeoff must satisfy V >= 0")
    return normalized_config(cfg)


def parse_config(path) -> SimConfig:
    """Load, validate, and normalize a config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return build_config(read_config_text(text))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_values(cfg: SimConfig) -> dict:
    """Current value of every config key, in declaration order."""
    out = {}
    for key, (_, where, attr) in CONFIG_KEYS.items():
        if key == "area_width":
            out[key] = cfg.field.area[0]
        elif key == "area_height":
            out[key] = cfg.field.area[1]
        elif key == "lambda_low":
            out[key] = cfg.field.lambda_range[0]
        elif key == "lambda_high":
            out[key] = cfg.field.lambda_range[1]
        elif key == "cloud_x":
            out[key] = float(cfg.offload.cloud_position[0])
        elif key == "cloud_y":
            out[key] = float(cfg.offload.cloud_position[1])
        else:
            sub = cfg if where == "sim" else getattr(cfg, where)
            out[key] = getattr(sub, attr)
    return out


def print_config(cfg: SimConfig, overridden=(), stream=None):
    """Emit the full configuration; output re-parses to the same SimConfig.

    Each line notes whether the value is a built-in reference default or was
    set by the loaded config file.
    """
    stream = stream or sys.stdout
    overridden = set(overridden)
    for key, value in config_values(cfg).items():
        origin = "config file" if key in overridden else "reference default"
        stream.write(f"{key} = {_fmt(value)}  # {origin}\n")


def run_sweep(cfg: SimConfig, param: str, values, out_dir,
              summary_name="summary.csv"):
    """Re-run the experiment for each parameter value with the same seed.

    Writes one metrics CSV per value plus a summary of steady-state means
    (final half of the run).  Returns the summary rows.
    """
    if param not in CONFIG_KEYS or CONFIG_KEYS[param][0] not in (int, float):
        raise ConfigError(f"sweep parameter '{param}' is not a numeric "
                          f"config key")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    base = config_values(cfg)
    for value in values:
        raw = dict(base)
        raw[param] = CONFIG_KEYS[param][0](value)
        run_cfg = build_config(raw)
        csv_path = out_dir / f"metrics_{param}_{value:g}.csv"
        records, _ = run_experiment(run_cfg, out_csv=csv_path)
        half = records[len(records) // 2:]
        mean_power = float(np.mean([r.weighted_power_w for r in half])) \
            if half else 0.0
        mean_queue = float(np.mean([r.avg_queue_bits for r in half])) \
            if half else 0.0
        rows.append((float(value), mean_power, mean_queue))
    with open(out_dir / summary_name, "w", newline="") as fh:
        fh.write(f"{param},mean_weighted_power_w,mean_queue_bits\n")
        for value, power, queue in rows:
            fh.write(f"{value!r},{power!r},{queue!r}\n")
    return rows


def sample_oracle_instance(k: int, rng: np.random.Generator):
    """Random per-slot instance in the regimes the simulator visits."""
    qs = 10.0 ** rng.uniform(2.0, 6.5, size=k)
    dist = rng.uniform(150.0, 900.0, size=k)
    fade = rng.exponential(1.0, size=k)
    gains = fade * 1e-4 / dist ** 4
    v = 10.0 ** rng.uniform(8.0, 10.0)
    return qs, gains, v


def run_oracle(k: int, count: int, seed: int, rel_tol: float = 1e-3,
               stream=None, slot_tau: float = 0.5):
    """Audit the per-slot solver against the grid oracle; returns worst gap."""
    stream = stream or sys.stdout
    if k > ORACLE_MAX_UAVS:
        raise ConfigError(f"oracle instances support at most "
                          f"{ORACLE_MAX_UAVS} UAVs, got {k}")
    rng = np.random.default_rng([seed, 1001])
    edge = EdgeParams(weight=1.0 / k)
    chan = OffloadChannelParams()
    worst = 0.0
    failures = 0
    for i in range(count):
        qs, gains, v = sample_oracle_instance(k, rng)
        cfg = SchedulerConfig(v_tradeoff=v, epsilon_floor=0.01)
        dec = schedule_slot(qs, gains, edge, chan, cfg, slot_tau)
        oracle_obj, *_ = p2b_grid_oracle(qs, gains, edge, chan, cfg, slot_tau)
        denom = max(abs(oracle_obj), 1e-9)
        gap = abs(dec.objective - oracle_obj) / denom
        worst = max(worst, gap)
        ok = gap <= rel_tol
        failures += not ok
        stream.write(f"instance {i}: qs={qs.tolist()} gains={gains.tolist()} "
                     f"V={float(v)!r}\n")
        stream.write(f"  solver obj {float(dec.objective)!r} shares "
                     f"{dec.band_shares.tolist()} | oracle obj "
                     f"{oracle_obj!r} | gap {gap:.3e} "
                     f"{'pass' if ok else 'FAIL'}\n")
    stream.write(f"worst relative gap over {count} instances: {worst:.3e} "
                 f"({failures} failures at tol {rel_tol})\n")
    return worst, failures


def run_grad_check(seed: int, stream=None):
    """Gradient verification on the full net at reduced input and a linear map."""
    from .neural import Dense, QNetwork, grad_check

    stream = stream or sys.stdout
    rng = np.random.default_rng([seed, 2002])
    net = QNetwork(36, 9, rng)
    x = rng.normal(size=(1, 36, 36))
    full_err = grad_check(net, x, action_index=3, rng=rng)

    class LinearModel:
        def __init__(self):
            self.layer = Dense(16, 4, rng)
            self._cache = None

        @property
        def params(self):
            return self.layer.params

        def forward(self, x, keep_cache=False):
            x = np.asarray(x, dtype=float).reshape(-1, 16)
            out, cache = self.layer.forward(x)
            if keep_cache:
                self._cache = cache
            return out

        def backward(self, dout):
            _, grads = self.layer.backward(dout, self._cache)
            return grads

    lin = LinearModel()
    lin_err = grad_check(lin, rng.normal(size=(1, 16)), action_index=1,
                         rng=rng)
    ok = full_err < 1e-4 and lin_err < 1e-8
    stream.write(f"full architecture (36x36 input) max relative error: "
                 f"{full_err:.3e} {'pass' if full_err < 1e-4 else 'FAIL'}\n")
    stream.write(f"linear model max relative error: {lin_err:.3e} "
                 f"{'pass' if lin_err < 1e-8 else 'FAIL'}\n")
    return ok


def _load(args) -> tuple:
    if args.config:
        cfg = parse_config(args.config)
        overridden = set(read_config_text(Path(args.config).read_text()))
    else:
        cfg = normalized_config(SimConfig())
        overridden = set()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
        overridden.add("seed")
    if getattr(args, "assert_lemma1", False):
        cfg = replace(cfg, assert_lemma1=True)
        overridden.add("assert_lemma1")
    return cfg, overridden


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="uavedge",
        description="Sensor/UAV-BS/cloud network simulator and optimizer")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--print-config", action="store_true",
                       help="print the effective configuration and exit")

    p_run = sub.add_parser("run", help="run one experiment")
    common(p_run)
    p_run.add_argument("--assert-lemma1", action="store_true",
                       help="check the drift bound every slot")

    p_train = sub.add_parser("train", help="train the path planner")
    common(p_train)

    p_sweep = sub.add_parser("sweep", help="sweep one numeric parameter")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated numeric values")

    p_oracle = sub.add_parser("oracle", help="audit the per-slot solver")
    p_oracle.add_argument("--uavs", type=int, default=3)
    p_oracle.add_argument("--count", type=int, default=20)
    p_oracle.add_argument("--seed", type=int, default=0)

    p_grad = sub.add_parser("grad-check", help="verify network gradients")
    p_grad.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    try:
        if args.command == "oracle":
            worst, failures = run_oracle(args.uavs, args.count, args.seed)
            return 0 if failures == 0 else 1
        if args.command == "grad-check":
            return 0 if run_grad_check(args.seed) else 1

        cfg, overridden = _load(args)
        if args.print_config:
            print_config(cfg, overridden)
            return 0
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        print(f"seed = {cfg.seed}")

        if args.command == "run":
            records, world = run_experiment(cfg,
                                            out_csv=out_dir / "metrics.csv")
            if records:
                last = records[-1]
                print(f"final slot {last.slot}: avg_urgency "
                      f"{last.avg_urgency:.3f}, avg_queue_bits "
                      f"{last.avg_queue_bits:.1f}, weighted_power_w "
                      f"{last.weighted_power_w:.3f}")
            if cfg.assert_lemma1 and world.drift_margins:
                print(f"drift bound margin min: "
                      f"{min(world.drift_margins):.6g} (all slots held)")
            return 0
        if args.command == "train":
            trainer, records, _ = train_planner(
                cfg, out_csv=out_dir / "training_metrics.csv")
            from .neural import save_checkpoint
            ckpt = out_dir / "qnet_checkpoint.bin"
            n_slots = len(records)
            t_p = max(n_slots // cfg.planner.path_slot_multiple - 1, 0)
            save_checkpoint(ckpt, trainer.qnet, n_slots,
                            epsilon_schedule_value(cfg, t_p),
                            trainer.stats.counts)
            print(f"checkpoint written to {ckpt}")
            return 0
        if args.command == "sweep":
            values = [float(v) for v in args.values.split(",") if v]
            rows = run_sweep(cfg, args.param, values, out_dir)
            for value, power, queue in rows:
                print(f"{args.param} = {value:g}: mean power {power:.4f} W, "
                      f"mean queue {queue:.1f} bits")
            return 0
    except AssertionError as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def epsilon_schedule_value(cfg: SimConfig, t_p: int) -> float:
    from .planner import epsilon_schedule
    return epsilon_schedule(t_p, cfg.planner)


if __name__ == "__main__":
    sys.exit(main())
