"""Operator command line.

Subcommands: simulate (scene generation), enhance (offline/streaming),
vvad (first-stage inference), bench (latency), macs (complexity report),
metrics (batch scoring).  Exit codes: 0 success, 1 usage error, 2 data
error, 3 internal invariant violation.  AVTSE_THREADS caps the worker
pool used by simulate/metrics fan-out.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import audio_io, engine, metrics, room, vadtools
from .errors import AvtseError, DataError, ManifestError, ShapeError
from .frontend import AudioBuffer
from .vvad import VvadModel, classify
from .weights import load_weights


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("AVTSE_THREADS", "1")))
    except ValueError:
        return 1


def _load_lips(path):
    return audio_io.read_lip_frames(path) if path else None


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _synthetic_noise(seed: int, n_samples: int) -> AudioBuffer:
    rng = np.random.default_rng(seed ^ 0x5EED)
    return AudioBuffer(rng.standard_normal(n_samples).astype(np.float32) * 0.05)


def cmd_simulate(args) -> int:
    speech_dir = Path(args.speech)
    if not speech_dir.is_dir():
        raise DataError(f"{speech_dir}: speech folder does not exist")
    clips = sorted(speech_dir.glob("*.wav"))
    if args.n > 0 and len(clips) < 2:
        raise DataError(f"{speech_dir}: need at least 2 WAV clips, found "
                        f"{len(clips)}")
    noise_clips = sorted(Path(args.noise).glob("*.wav")) if args.noise else []
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(args.seed)
    plans = []
    for i in range(args.n):
        scene_seed = int(rng.integers(0, 2 ** 62))
        ti = int(rng.integers(0, len(clips)))
        ii = int(rng.integers(0, len(clips) - 1))
        if ii >= ti:
            ii += 1
        ni = int(rng.integers(0, len(noise_clips))) if noise_clips else -1
        plans.append((i, scene_seed, ti, ii, ni))

    def build(plan):
        i, scene_seed, ti, ii, ni = plan
        scene_room, scene_spec = room.sample_scene(scene_seed)
        target = audio_io.read_wav(clips[ti])
        interferer = audio_io.read_wav(clips[ii])
        if ni >= 0:
            noise = audio_io.read_wav(noise_clips[ni])
        else:
            noise = _synthetic_noise(scene_seed, 16000 * 2)
        sample = room.make_mixture(target, interferer, noise, scene_room,
                                   scene_spec)
        return i, scene_seed, scene_room, scene_spec, sample, \
            (clips[ti].name, clips[ii].name,
             noise_clips[ni].name if ni >= 0 else "synthetic")

    records, skips = [], []
    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = []
            for plan in plans:
                results.append(pool.submit(build, plan))
            outcomes = []
            for plan, fut in zip(plans, results):
                try:
                    outcomes.append(fut.result())
                except DataError as exc:
                    skips.append(f"scene{plan[0]:05d}: {exc}")
    else:
        outcomes = []
        for plan in plans:
            try:
                outcomes.append(build(plan))
            except DataError as exc:
                skips.append(f"scene{plan[0]:05d}: {exc}")

    manifest_lines = []
    for i, scene_seed, scene_room, scene_spec, sample, sources in outcomes:
        sid = f"scene{i:05d}"
        peak = float(np.max(np.abs(sample.mixture.samples), initial=1e-9))
        scale = min(1.0, 0.99 / peak)  # common gain keeps SIR/SNR and the sum
        paths = {}
        for stem, buf in (("mixture", sample.mixture),
                          ("target", sample.target_reverberant),
                          ("interferer", sample.interferer_reverberant),
                          ("noise", sample.noise)):
            rel = f"{sid}_{stem}.wav"
            audio_io.write_wav(out_dir / rel,
                               AudioBuffer(buf.samples * np.float32(scale)))
            paths[stem] = rel
        audio_io.write_vad_labels(out_dir / f"{sid}_vad.txt", sample.target_vad)
        paths["vad"] = f"{sid}_vad.txt"
        manifest_lines.append(json.dumps({
            "id": sid, "seed": scene_seed,
            "room": {"length": scene_room.length, "width": scene_room.width,
                     "height": scene_room.height, "t60": scene_room.t60,
                     "mic": list(scene_room.mic),
                     "source_target": list(scene_room.source_target),
                     "source_interferer": list(scene_room.source_interferer)},
            "spec": {"sir_db": scene_spec.sir_db, "snr_db": scene_spec.snr_db,
                     "overlap_ratio": scene_spec.overlap_ratio,
                     "lead": scene_spec.lead, "seed": scene_spec.seed},
            "achieved_sir_db": sample.achieved_sir_db,
            "achieved_snr_db": sample.achieved_snr_db,
            "overlap_region": list(sample.overlap_region),
            "scale": scale,
            "sources": {"target": sources[0], "interferer": sources[1],
                        "noise": sources[2]},
            "paths": paths}, sort_keys=True))

    (out_dir / "manifest.jsonl").write_text(
        "".join(line + "\n" for line in manifest_lines))
    print(f"wrote {len(manifest_lines)} scenes to {out_dir}")
    for s in skips:
        print(f"skipped {s}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# enhance / vvad
# ---------------------------------------------------------------------------


def cmd_enhance(args) -> int:
    ws = load_weights(args.weights)
    audio = audio_io.read_wav(args.infile)
    lips = _load_lips(args.lips)
    if lips is None:
        print("warning: no lip stream supplied; VAD held always-active",
              file=sys.stderr)
    if args.mode == "offline":
        out = engine.enhance_offline(ws, audio, lips)
    else:
        out, times = engine.stream_file(ws, audio, lips, collect_timing=True)
        mean = float(times.mean())
        print(f"frames={len(times)} mean_ms={mean:.3f} "
              f"p95_ms={float(np.percentile(times, 95)):.3f} "
              f"max_ms={float(times.max()):.3f} rtf={mean / 10.0:.3f}")
    audio_io.write_wav(args.out, out)
    print(f"wrote {args.out}")
    return 0


def cmd_vvad(args) -> int:
    ws = load_weights(args.weights)
    lips = audio_io.read_lip_frames(args.lips)
    labels = classify(VvadModel(ws).forward(lips))
    if args.out:
        audio_io.write_vad_labels(args.out, labels)
        print(f"wrote {args.out}")
    else:
        print("".join(str(int(v)) for v in labels))
    if args.truth:
        truth = audio_io.read_vad_labels(args.truth)
        n = min(len(truth), len(labels))
        scores = vadtools.vad_metrics(labels[:n], truth[:n])
        print(f"accuracy={scores.accuracy:.4f} precision={scores.precision:.4f} "
              f"recall={scores.recall:.4f}")
    return 0


# ---------------------------------------------------------------------------
# bench / macs / metrics
# ---------------------------------------------------------------------------


def _emit(lines: list[str], keyvals: list[str], report_path) -> None:
    for line in lines:
        print(line)
    for kv in keyvals:
        print(kv)
    if report_path:
        Path(report_path).write_text("".join(kv + "\n" for kv in keyvals))
        print(f"wrote {report_path}")


def cmd_bench(args) -> int:
    ws = load_weights(args.weights)
    stats = engine.bench(ws, seconds=args.duration, seed=args.seed)
    _emit(stats.lines(), stats.keyvals(), args.report)
    return 0


def cmd_macs(args) -> int:
    ws = load_weights(args.weights)
    rep = engine.complexity_report(ws)
    keyvals = [f"params_total={rep.params}",
               f"macs_per_second={rep.macs_per_second}"]
    keyvals += [f"params.{k}={v}" for k, v in rep.breakdown_params.items()]
    keyvals += [f"macs.{k}={v}" for k, v in rep.breakdown_macs.items()]
    _emit(rep.lines(), keyvals, args.report)
    return 0


def cmd_metrics(args) -> int:
    rep = metrics.evaluate_batch(args.manifest, args.outputs)
    _emit(rep.lines(), rep.keyvals(), args.report)
    if rep.errors and not rep.files:
        return 2
    return 0


# ---------------------------------------------------------------------------
# entry
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="avtse",
                description="Causal audio-visual target speaker extraction "
                            "toolchain")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate reverberant test scenes")
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--speech", required=True, help="folder of 16 kHz mono WAVs")
    s.add_argument("--noise", help="optional noise WAV folder (default: synthetic)")
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("enhance", help="extract the target speaker from a WAV")
    s.add_argument("--weights", required=True)
    s.add_argument("--in", dest="infile", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--lips", help="lip-frame sidecar file")
    s.add_argument("--mode", choices=("offline", "streaming"), default="streaming")
    s.set_defaults(fn=cmd_enhance)

    s = sub.add_parser("vvad", help="visual voice activity detection")
    s.add_argument("--weights", required=True)
    s.add_argument("--lips", required=True)
    s.add_argument("--out")
    s.add_argument("--truth", help="reference label file for scoring")
    s.set_defaults(fn=cmd_vvad)

    s = sub.add_parser("bench", help="per-frame latency benchmark")
    s.add_argument("--weights", required=True)
    s.add_argument("--duration", type=float, default=10.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report")
    s.set_defaults(fn=cmd_bench)

    s = sub.add_parser("macs", help="analytic parameter/MAC report")
    s.add_argument("--weights", required=True)
    s.add_argument("--report")
    s.set_defaults(fn=cmd_macs)

    s = sub.add_parser("metrics", help="score enhanced outputs against a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--outputs", required=True)
    s.add_argument("--report")
    s.set_defaults(fn=cmd_metrics)
    return p


def main(argv=None) -> int:
    from threadpoolctl import threadpool_limits
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        # small per-call matrices everywhere; BLAS fan-out only adds jitter
        with threadpool_limits(limits=1, user_api="blas"):
            return args.fn(args)
    except ShapeError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except (DataError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AvtseError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
