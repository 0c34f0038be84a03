"""Command-line interface: ``ddspvoc <command> [flags]``."""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io as dio
from .analysis import F0Config, analyze
from .grad import OptimizerConfig, fit_features, history_csv
from .loss import LossConfig
from .metrics import mcd_dtw, measured_snr, mix_at_snr, spectrogram_ssim
from .signal import ConfigError, FrameConfig
from .vocoder import StreamingSynthesizer, SynthConfig, synthesize

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _default_seed() -> int:
    raw = os.environ.get("DDSPVOC_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"DDSPVOC_SEED must be an integer, got {raw!r}") from None


def _frame_config(args) -> FrameConfig:
    hop = int(round(args.hop_ms * args.sample_rate / 1000.0))
    if hop < 1:
        raise UsageError(f"--hop-ms {args.hop_ms} gives a hop below one sample")
    return FrameConfig(sample_rate=args.sample_rate, hop=hop, fft_size=2 * hop, window_len=2 * hop)


def _loss_config(args) -> LossConfig:
    return LossConfig(windows=tuple(args.loss_windows), weights=tuple(args.loss_weights),
                      n_bands=args.adv_bands)


def _require_inputs(*paths) -> None:
    for p in paths:
        if not Path(p).is_file():
            raise UsageError(f"input file not found: {p}")


def _require_out_dir(path) -> None:
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise UsageError(f"output directory does not exist: {parent}")


def _pairs(inputs, out, suffix):
    """Map inputs to outputs: a single file, or several into a directory."""
    if len(inputs) == 1 and not Path(out).is_dir():
        _require_out_dir(out)
        return [(inputs[0], Path(out))]
    if not Path(out).is_dir():
        raise UsageError(f"--out must be an existing directory for {len(inputs)} inputs")
    return [(p, Path(out) / (Path(p).stem + suffix)) for p in inputs]


def _run_jobs(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda it: fn(*it), items))


def cmd_analyze(args) -> int:
    _require_inputs(*args.inputs)
    cfg = _frame_config(args)
    f0cfg = F0Config(f0_min=args.f0_min, f0_max=args.f0_max)

    def one(src, dst):
        wave = dio.read_wav(src)
        if wave.sample_rate != cfg.sample_rate:
            raise ValueError(f"{src}: sample rate {wave.sample_rate}, expected {cfg.sample_rate}")
        feats = analyze(wave, cfg, f0cfg)
        dio.write_features(dst, feats)
        voiced = float(np.mean(feats.f0 > 0)) if feats.n_frames else 0.0
        return f"{src}: T={feats.n_frames} voiced={100 * voiced:.1f}%"

    for line in _run_jobs(one, _pairs(args.inputs, args.out, ".feat"), args.jobs):
        print(line)
    return EXIT_OK


def _synth(feats, seed, streaming):
    cfg = SynthConfig(frame=feats.config, noise_seed=seed)
    if streaming:
        synth = StreamingSynthesizer(cfg)
        wave = synth.process(feats, flush=True)
        # drop the one-hop algorithmic delay so the file lines up with the offline render
        return type(wave)(wave.samples[synth.latency_samples:], wave.sample_rate)
    return synthesize(feats, cfg)


def cmd_synth(args) -> int:
    _require_inputs(*args.feat)

    def one(src, dst):
        feats = dio.read_features(src)
        wave = _synth(feats, args.seed, args.streaming)
        dio.write_wav(dst, wave, args.encoding)
        return f"{src}: {len(wave)} samples -> {dst}"

    for line in _run_jobs(one, _pairs(args.feat, args.out, ".wav"), args.jobs):
        print(line)
    return EXIT_OK


def copy_synthesize(wave, cfg: FrameConfig = FrameConfig(), seed: int = 0):
    """Analyze then resynthesize, trimmed to the input length (T * hop >= N)."""
    feats = analyze(wave, cfg)
    out = synthesize(feats, SynthConfig(frame=cfg, noise_seed=seed))
    return type(out)(out.samples[:len(wave)], out.sample_rate), feats


def cmd_copysynth(args) -> int:
    _require_inputs(*args.inputs)
    cfg = _frame_config(args)

    def one(src, dst):
        wave = dio.read_wav(src)
        out, feats = copy_synthesize(wave, cfg, args.seed)
        dio.write_wav(dst, out, args.encoding)
        return f"{src}: T={feats.n_frames} -> {dst}"

    for line in _run_jobs(one, _pairs(args.inputs, args.out, ".wav"), args.jobs):
        print(line)
    return EXIT_OK


def cmd_fit(args) -> int:
    _require_inputs(args.target, args.init)
    _require_out_dir(args.out)
    if args.history:
        _require_out_dir(args.history)
    target = dio.read_wav(args.target)
    init = dio.read_features(args.init)
    n = init.n_frames * init.config.hop
    if len(target) != n:
        raise ValueError(f"target has {len(target)} samples, init features imply {n}")
    loss_cfg = _loss_config(args)
    opt = OptimizerConfig(step_size=args.lr, steps=args.steps, final_step_size=args.lr_final)
    result = fit_features(target, init, opt, loss_cfg, noise_seed=args.seed)
    dio.write_features(args.out, result.features)
    if args.history:
        dio.atomic_write(args.history, history_csv(result.history, loss_cfg.windows).encode())
    if result.history:
        first, last = result.history[0][1], result.history[-1][1]
        print(f"loss {first:.6g} -> {last:.6g} ({100 * last / first:.1f}% of initial)")
    return EXIT_OK


def cmd_mix(args) -> int:
    _require_inputs(args.clean, args.noise)
    _require_out_dir(args.out)
    clean, noise = dio.read_wav(args.clean), dio.read_wav(args.noise)
    mix = mix_at_snr(clean, noise, args.snr)
    dio.write_wav(args.out, mix, args.encoding)
    print(f"requested {args.snr:.2f} dB, measured {measured_snr(mix, clean):.4f} dB")
    return EXIT_OK


def cmd_eval(args) -> int:
    if len(args.ref) != len(args.est):
        raise UsageError(f"{len(args.ref)} --ref files but {len(args.est)} --est files")
    _require_inputs(*args.ref, *args.est)
    if args.csv:
        _require_out_dir(args.csv)
    cfg = _frame_config(args)

    def one(ref_path, est_path):
        ref, est = dio.read_wav(ref_path), dio.read_wav(est_path)
        if len(ref) != len(est):
            raise ValueError(f"{est_path}: {len(est)} samples vs reference {len(ref)}")
        return (ref_path, est_path, mcd_dtw(est, ref, cfg), spectrogram_ssim(est, ref, cfg),
                measured_snr(est, ref))

    rows = _run_jobs(one, list(zip(args.ref, args.est)), args.jobs)
    print(f"{'reference':<30} {'estimate':<30} {'MCD':>8} {'SSIM':>7} {'SNR':>9}")
    for r, e, mcd, ssim, snr in rows:
        print(f"{r:<30} {e:<30} {mcd:8.2f} {ssim:7.3f} {snr:9.2f}")
    mean_mcd = float(np.mean([r[2] for r in rows]))
    mean_ssim = float(np.mean([r[3] for r in rows]))
    if len(rows) > 1:
        print(f"{'mean':<61} {mean_mcd:8.2f} {mean_ssim:7.3f}")
    if args.csv:
        lines = ["ref,est,mcd_db,ssim,snr_db"]
        lines += [f"{r},{e},{m!r},{s!r},{n!r}" for r, e, m, s, n in rows]
        lines.append(f"mean,,{mean_mcd!r},{mean_ssim!r},")
        dio.atomic_write(args.csv, ("\n".join(lines) + "\n").encode())
    return EXIT_OK


def bench(feats, iters: int, seed: int = 0) -> dict:
    """Median offline RTF and median streaming per-frame latency (seconds)."""
    cfg = SynthConfig(frame=feats.config, noise_seed=seed)
    duration = feats.n_frames * feats.config.hop_seconds
    offline = []
    for _ in range(iters):
        t0 = time.perf_counter()
        synthesize(feats, cfg)
        offline.append(time.perf_counter() - t0)
    synth = StreamingSynthesizer(cfg)
    per_frame = []
    for f, p, v in zip(feats.f0, feats.periodicity, feats.envelope_logmel):
        t0 = time.perf_counter()
        synth.push(f, p, v)
        per_frame.append(time.perf_counter() - t0)
    return {
        "rtf": float(np.median(offline)) / duration,
        "frame_latency": float(np.median(per_frame)),
        "duration": duration,
    }


def cmd_bench(args) -> int:
    _require_inputs(args.feat)
    if args.iters < 1:
        raise UsageError("--iters must be at least 1")
    feats = dio.read_features(args.feat)
    if feats.n_frames == 0:
        raise ValueError(f"{args.feat}: no frames to synthesize")
    res = bench(feats, args.iters, args.seed)
    print(f"audio {res['duration']:.2f} s, median RTF {res['rtf']:.4f}, "
          f"median streaming frame {1e3 * res['frame_latency']:.3f} ms")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddspvoc", description="Zero-phase DDSP vocoder tools.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--sample-rate", type=int, default=16000)
    common.add_argument("--hop-ms", type=float, default=8.0)
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for file lists")
    common.add_argument("--seed", type=int, default=None,
                        help="noise seed (falls back to $DDSPVOC_SEED, then 0)")
    common.add_argument("--encoding", choices=dio.ENCODINGS, default="float32")
    lossargs = argparse.ArgumentParser(add_help=False)
    lossargs.add_argument("--loss-windows", type=int, nargs="+", default=[512, 1024, 2048])
    lossargs.add_argument("--loss-weights", type=float, nargs="+", default=[25.7, 51.3, 102.5])
    lossargs.add_argument("--adv-bands", type=int, default=16)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="WAV -> feature file")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--f0-min", type=float, default=50.0)
    p.add_argument("--f0-max", type=float, default=500.0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", parents=[common], help="feature file -> WAV")
    p.add_argument("--feat", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--streaming", action="store_true", help="use the causal frame-by-frame path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("copysynth", parents=[common], help="analyze then resynthesize")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_copysynth)

    p = sub.add_parser("fit", parents=[common, lossargs], help="fit features to a target WAV")
    p.add_argument("--target", required=True)
    p.add_argument("--init", required=True)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--lr-final", type=float, default=None,
                   help="decay the step size linearly to this value (default: constant)")
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None, help="CSV of per-step losses")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("mix", parents=[common], help="mix clean and noise at an SNR")
    p.add_argument("--clean", required=True)
    p.add_argument("--noise", required=True)
    p.add_argument("--snr", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("eval", parents=[common], help="MCD and SSIM against references")
    p.add_argument("--ref", nargs="+", required=True)
    p.add_argument("--est", nargs="+", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="real-time factor and frame latency")
    p.add_argument("--feat", required=True)
    p.add_argument("--iters", type=int, default=5)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is None:
            args.seed = _default_seed()
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        return args.func(args)
    except UsageError as exc:
        print(f"ddspvoc {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"ddspvoc {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, ConfigError, OSError) as exc:
        print(f"ddspvoc {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
