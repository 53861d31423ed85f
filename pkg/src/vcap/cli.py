"""Command line front end: dataset generation, local simulation,
calibration, evaluation, and the standalone rig services.

Subcommands:
  render-dataset   write {depth, label, normal, pose} sample groups
  rig              write a rig file (poses + placement bounds)
  simulate         broker + N eyes + orchestrator in one process
  calibrate        run the pipeline on a dataset group, recording, or live rig
  evaluate         recompute RMSE for a result file, compare against a rig
  broker           standalone message broker
  eye              standalone eye service
  orchestrate      standalone orchestrator + HTTP API
  eye-listener     spawn a local eye when a broker announce arrives

Every subcommand is deterministic for fixed ``--seed`` (wall-clock frame
counts aside) and exits nonzero on any stage failure.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import signal
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .calibration import CalibrationError, IcpOptions, calibrate, evaluate_rmse, view_cloud_for_icp
from .crf import CrfParams, crf_refine
from .dataset import DatasetError, generate_dataset, load_group
from .geometry import DEFAULT_INTRINSICS, GeometryError, rotation_angle_deg
from .labeling import (
    GridSearchConfig,
    GridSearchLabeler,
    LabelingError,
    OracleLabeler,
    label_views,
)
from .noise import BACKGROUND_MODES, NoiseParams
from .rasters import write_label_pgm
from .reporting import load_result, pose_from_dict, result_from_dict, result_to_dict, rmse_table, save_result
from .sampling import (
    SamplingParams,
    UniformGrid,
    load_rig,
    load_rig_sampling,
    sample_rig,
    save_rig,
)
from .structure import default_structure, load_structure, structure_from_dict, structure_to_dict

log = logging.getLogger("vcap")


# -- flag parsing helpers -----------------------------------------------------


def _host_port(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    try:
        number = int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad port in {text!r}")
    if not 0 <= number <= 65535:
        raise argparse.ArgumentTypeError(f"port out of range in {text!r}")
    return host, number


def _float_list(text: str, n: int, what: str) -> list[float]:
    parts = text.split(",")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"{what} wants {n} comma-separated values")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{what}: not numbers: {text!r}")


def _noise_type(text: str) -> tuple[float, float]:
    base, quad = _float_list(text, 2, "--noise")
    return base, quad


def _crf_type(text: str) -> CrfParams:
    spatial, normal, weight, iters = _float_list(text, 4, "--crf")
    return CrfParams(
        sigma_spatial_px=spatial,
        sigma_normal=normal,
        pairwise_weight=weight,
        iterations=int(iters),
    )


def _noise_from_args(args) -> NoiseParams:
    base, quad = args.noise
    return NoiseParams(
        sigma_base=base,
        sigma_quad=quad,
        edge_dropout=args.dropout,
        background=args.background,
        seed=args.seed or 0,
    )


def _sampling_from_args(args) -> SamplingParams:
    params = SamplingParams(sensors=args.eyes)
    if not getattr(args, "tilted", False):
        params = replace(params, euler_noise_deg=UniformGrid(0.0, 0.0, 1.0))
    return params


def _structure_from_args(args):
    if getattr(args, "structure", None):
        return load_structure(args.structure)
    return default_structure()


def _add_noise_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--noise", type=_noise_type, default=(0.001, 0.0025),
                   metavar="BASE,QUAD", help="depth noise sigma at 0 m and per m^2 (default 0.001,0.0025)")
    p.add_argument("--dropout", type=float, default=0.15, help="edge dropout probability")
    p.add_argument("--background", choices=BACKGROUND_MODES, default="planes",
                   help="background clutter fill")


def _add_structure_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--structure", metavar="FILE", help="structure description file (default: built-in)")


# -- render-dataset ------------------------------------------------------------


def cmd_render_dataset(args) -> int:
    params = _sampling_from_args(args)
    noise = _noise_from_args(args)
    model = _structure_from_args(args)
    groups = generate_dataset(
        args.out, args.count, params, DEFAULT_INTRINSICS, noise, args.seed,
        model=model, progress=lambda s: print(s, file=sys.stderr),
    )
    print(f"wrote {len(groups)} groups under {args.out}")
    return 0


# -- rig -----------------------------------------------------------------------


def cmd_rig(args) -> int:
    params = _sampling_from_args(args)
    rig = sample_rig(params, args.seed)
    save_rig(args.out, rig, params)
    print(f"wrote {len(rig)}-eye rig to {args.out}")
    return 0


# -- calibrate -------------------------------------------------------------------


def _dump_labels(directory: str, outputs, crf_params) -> None:
    """Debug dump: per view the argmax labels, the CRF-refined labels and
    the raw probability volume."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for i, output in enumerate(outputs):
        write_label_pgm(out / f"view{i}_labels.pgm", output.labels)
        refined = crf_refine(output.probs, output.normals, crf_params)
        write_label_pgm(out / f"view{i}_refined.pgm", refined)
        np.save(out / f"view{i}_probs.npy", output.probs)
    print(f"label dump written to {out}", file=sys.stderr)


def _labeler_config_dict(args, sampling: SamplingParams) -> dict:
    if args.labeler == "oracle":
        return {
            "kind": "oracle",
            "smoothing": 0.05,
            "flip_fraction": args.flip_fraction,
            "seed": args.seed or 0,
        }
    return {
        "kind": "gridsearch",
        "grid": GridSearchConfig().to_dict(),
        "sampling": sampling.to_dict(),
    }


def _build_labeler(kind: str, config: dict, model, truths=None):
    if kind == "oracle":
        if truths is None:
            raise CalibrationError("the oracle labeler needs dataset ground truth")
        return OracleLabeler(
            truths,
            smoothing=config.get("smoothing", 0.05),
            flip_fraction=config.get("flip_fraction", 0.0),
            seed=config.get("seed", 0),
        )
    return GridSearchLabeler(
        model,
        SamplingParams.from_dict(config["sampling"]),
        GridSearchConfig.from_dict(config.get("grid", {})),
    )


def cmd_calibrate(args) -> int:
    chosen = [bool(args.dataset), bool(args.recording), args.live]
    if sum(chosen) != 1:
        print("choose exactly one input: --dataset, --recording or --live", file=sys.stderr)
        return 2
    crf_params = args.crf
    icp = IcpOptions()

    if args.live:
        return _calibrate_live(args, crf_params, icp)

    if args.dataset:
        group = load_group(args.dataset)
        eye_ids, depths, k = group.eye_ids, group.depths, group.intrinsics
        model = group.structure
        sampling = group.sampling or SamplingParams(sensors=len(eye_ids))
        truths = group.truth_views()
        source = {"kind": "dataset", "path": str(Path(args.dataset).resolve())}
    else:
        from .capture.recording import RecordingError, load_latest_set

        if args.labeler == "oracle":
            print("the oracle labeler needs a dataset with ground truth", file=sys.stderr)
            return 2
        try:
            rig_order = [s.eye_id for s in load_rig(args.rig)] if args.rig else None
            eye_ids, depths, ks = load_latest_set(args.recording, rig_order)
        except RecordingError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        if any(other != ks[0] for other in ks[1:]):
            print("error: recorded eyes disagree on intrinsics", file=sys.stderr)
            return 1
        k = ks[0]
        model = _structure_from_args(args)
        sampling = (load_rig_sampling(args.rig) if args.rig else None) or SamplingParams(
            sensors=len(eye_ids)
        )
        truths = None
        source = {"kind": "recording", "path": str(Path(args.recording).resolve())}

    labeler_config = _labeler_config_dict(args, sampling)
    labeler = _build_labeler(args.labeler, labeler_config, model, truths)

    if args.dump_labels:
        outputs = label_views(depths, k, labeler)
        _dump_labels(args.dump_labels, outputs, crf_params)

    try:
        result = calibrate(
            depths, k, model, labeler,
            crf_params=crf_params, icp_options=icp,
            progress=lambda s: print(f"  {s}", file=sys.stderr),
        )
    except (CalibrationError, LabelingError) as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return 1

    print(rmse_table(result, eye_ids))
    for view, eye in zip(result.views, eye_ids):
        if not view.ok:
            print(f"note: {eye} dropped: {view.error}", file=sys.stderr)
    if args.out:
        config = {
            "source": source,
            "labeler": labeler_config,
            "crf": crf_params.to_dict(),
            "icp": icp.to_dict(),
            "min_region_px": 50,
            "model_spacing_m": 0.02,
            "eval_radius_m": 0.05,
            "structure": structure_to_dict(model),
        }
        save_result(args.out, result, eye_ids, config)
        print(f"result written to {args.out}", file=sys.stderr)
    return 0


def _calibrate_live(args, crf_params: CrfParams, icp: IcpOptions) -> int:
    from .capture.orchestrator import (
        CalibrationSettings,
        Orchestrator,
        OrchestratorConfig,
        OrchestratorError,
    )

    if args.labeler == "oracle":
        print("the oracle labeler needs a dataset with ground truth", file=sys.stderr)
        return 2
    if not args.broker:
        print("--live needs --broker host:port", file=sys.stderr)
        return 2
    if args.rig:
        eye_ids = [s.eye_id for s in load_rig(args.rig)]
        sampling = load_rig_sampling(args.rig) or SamplingParams(sensors=len(eye_ids))
    elif args.expect:
        eye_ids = [e.strip() for e in args.expect.split(",") if e.strip()]
        sampling = SamplingParams(sensors=len(eye_ids))
    else:
        print("--live needs --rig or --expect with the eye ids", file=sys.stderr)
        return 2
    model = _structure_from_args(args)

    async def run() -> int:
        host, port = args.broker
        orch = Orchestrator(
            OrchestratorConfig(host, port, tuple(eye_ids)),
            CalibrationSettings(structure=model, sampling=sampling, crf=crf_params, icp=icp),
        )
        try:
            await orch.start()
        except OSError as exc:
            print(f"cannot reach broker: {exc}", file=sys.stderr)
            return 1
        try:
            deadline = asyncio.get_running_loop().time() + args.wait
            while orch.latest_complete is None:
                if asyncio.get_running_loop().time() > deadline:
                    print("no complete multi-view set arrived in time", file=sys.stderr)
                    return 1
                await asyncio.sleep(0.05)
            try:
                payload = await orch.run_calibration()
            except OrchestratorError as exc:
                print(f"calibration failed: {exc}", file=sys.stderr)
                return 1
            result, ids, _ = result_from_dict(payload)
            print(rmse_table(result, ids))
            if args.out:
                Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
                print(f"result written to {args.out}", file=sys.stderr)
            return 0
        finally:
            await orch.stop()

    return asyncio.run(run())


# -- evaluate ---------------------------------------------------------------------


def _pose_error_report(result, eye_ids, rig_path: str) -> int:
    rig = {s.eye_id: s.pose for s in load_rig(rig_path)}
    if set(rig) != set(eye_ids):
        print(
            f"error: rig file eyes {sorted(rig)} do not match result eyes {sorted(eye_ids)}",
            file=sys.stderr,
        )
        return 1
    print(f"{'eye':<8}{'trans err (mm)':>16}{'rot err (deg)':>16}")
    for eye, pose in zip(eye_ids, result.poses):
        if pose is None:
            print(f"{eye:<8}{'failed':>16}{'failed':>16}")
            continue
        truth = rig[eye]
        terr = float(np.linalg.norm(pose.translation - truth.translation)) * 1000.0
        rerr = rotation_angle_deg(pose.rotation, truth.rotation)
        print(f"{eye:<8}{terr:>16.3f}{rerr:>16.4f}")
    return 0


def cmd_evaluate(args) -> int:
    try:
        result, eye_ids, config = load_result(args.result)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"cannot load result: {exc}", file=sys.stderr)
        return 1

    print("stored result:")
    print(rmse_table(result, eye_ids))

    status = 0
    if args.rig:
        print()
        status = max(status, _pose_error_report(result, eye_ids, args.rig))

    source = dict(config.get("source", {}))
    if args.dataset:
        source = {"kind": "dataset", "path": args.dataset}
    elif args.recording:
        source = {"kind": "recording", "path": args.recording}
    if source.get("kind") not in ("dataset", "recording"):
        print("\nno re-runnable input (live capture); pass --dataset or --recording to recompute",
              file=sys.stderr)
        return status

    try:
        recomputed = _recompute_rmse(result, eye_ids, config, source)
    except (DatasetError, CalibrationError, LabelingError, GeometryError, RuntimeError) as exc:
        print(f"recompute failed: {exc}", file=sys.stderr)
        return 1
    mean, pairs, survivor_ids = recomputed
    print("\nrecomputed from input:")
    lines = [f"{'pair':<18}{'rmse (mm)':>12}{'matches':>10}"]
    for a, b, rmse, matches in pairs:
        shown = "n/a" if np.isnan(rmse) else f"{rmse:.2f}"
        lines.append(f"{survivor_ids[a]} - {survivor_ids[b]:<11}{shown:>12}{matches:>10}")
    lines.append(f"{'mean':<18}{mean:>12.2f}")
    print("\n".join(lines))

    stored = result.mean_rmse_mm
    if np.isfinite(stored) and abs(stored - mean) > 1e-9:
        print(f"warning: recomputed mean differs from stored ({mean:.6f} vs {stored:.6f})",
              file=sys.stderr)
        return 1
    return status


def _recompute_rmse(result, eye_ids, config: dict, source: dict):
    """Rebuild the foreground clouds exactly as the stored run did and
    re-score the stored poses."""
    model = structure_from_dict(config["structure"])
    crf_params = CrfParams.from_dict(config["crf"])
    labeler_config = config["labeler"]

    if source["kind"] == "dataset":
        group = load_group(source["path"])
        if group.eye_ids != eye_ids:
            raise DatasetError(
                f"dataset eyes {group.eye_ids} do not match result eyes {eye_ids}"
            )
        depths, k = group.depths, group.intrinsics
        truths = group.truth_views()
    else:
        from .capture.recording import load_latest_set

        ids, depths, ks = load_latest_set(source["path"], eye_ids)
        k = ks[0]
        truths = None

    labeler = _build_labeler(labeler_config["kind"], labeler_config, model, truths)
    outputs = label_views(depths, k, labeler)

    poses, clouds, survivor_ids = [], [], []
    for eye, pose, depth, output in zip(eye_ids, result.poses, depths, outputs):
        if pose is None or output.flagged:
            continue
        refined = crf_refine(output.probs, output.normals, crf_params)
        cloud = view_cloud_for_icp(depth, refined, output.normals, k)
        poses.append(pose)
        clouds.append(cloud)
        survivor_ids.append(eye)
    if len(poses) < 2:
        raise CalibrationError("fewer than two usable views; nothing to evaluate")
    mean, pairs = evaluate_rmse(poses, clouds, config.get("eval_radius_m", 0.05))
    return mean, pairs, survivor_ids


# -- simulate --------------------------------------------------------------------


def cmd_simulate(args) -> int:
    from .capture.broker import Broker
    from .capture.eye import EyeConfig, EyeError, EyeService
    from .capture.orchestrator import (
        CalibrationSettings,
        Orchestrator,
        OrchestratorConfig,
        create_app,
    )

    params = _sampling_from_args(args)
    rig = sample_rig(params, args.seed)
    model = _structure_from_args(args)
    noise = _noise_from_args(args)

    async def run() -> int:
        host, port = args.broker or ("127.0.0.1", 0)
        broker = Broker(host, port, queue_frames=4096)
        try:
            await broker.start()
        except OSError as exc:
            print(f"cannot bind broker at {host}:{port}: {exc}", file=sys.stderr)
            return 1
        bhost, bport = broker.address
        print(f"broker: {bhost}:{bport}", flush=True)

        orch = Orchestrator(
            OrchestratorConfig(
                bhost, bport, tuple(s.eye_id for s in rig),
                recording_dir=args.record, record_on_start=bool(args.record),
            ),
            CalibrationSettings(structure=model, sampling=params, crf=args.crf),
        )
        await orch.start()

        server = None
        server_task = None
        if not args.no_http:
            import uvicorn

            app = create_app(orch, static_dir=args.static)
            cfg = uvicorn.Config(app, host="127.0.0.1", port=args.http, log_level="warning")
            server = uvicorn.Server(cfg)
            server.install_signal_handlers = lambda: None
            server_task = asyncio.create_task(server.serve())
            while not server.started and not server_task.done():
                await asyncio.sleep(0.01)
            if server_task.done():
                await server_task  # surface the bind error
            http_port = server.servers[0].sockets[0].getsockname()[1]
            print(f"api: http://127.0.0.1:{http_port}", flush=True)

        await asyncio.sleep(0.05)  # let the frame subscription settle
        eyes = []
        for i, sensor in enumerate(rig):
            eyes.append(
                EyeService(
                    EyeConfig(
                        eye_id=sensor.eye_id,
                        pose=sensor.pose,
                        broker_host=bhost,
                        broker_port=bport,
                        structure=model,
                        noise=replace(noise, seed=(args.seed or 0) * 1000 + i),
                        fps=args.fps,
                        max_frames=args.frames,
                        realtime=args.frames is None,
                    )
                )
            )
        eye_tasks = [asyncio.create_task(eye.run()) for eye in eyes]

        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop.set)

        status = 0
        try:
            if args.frames is not None:
                await asyncio.gather(*eye_tasks)
                deadline = loop.time() + 30.0
                expected = args.frames
                while (
                    orch.sets_complete + orch.sets_incomplete < expected
                    and loop.time() < deadline
                ):
                    await asyncio.sleep(0.05)
                await asyncio.sleep(2.5 * orch.config.stale_after_s)
            elif args.duration is not None:
                done, _ = await asyncio.wait(
                    [asyncio.ensure_future(stop.wait()), *eye_tasks],
                    timeout=args.duration,
                    return_when=asyncio.FIRST_COMPLETED,
                )
                for task in done:
                    if task in eye_tasks and task.exception() is not None:
                        raise task.exception()
            else:
                await stop.wait()
        except EyeError as exc:
            print(f"eye failed: {exc}", file=sys.stderr)
            status = 1
        finally:
            for task in eye_tasks:
                task.cancel()
            for task in eye_tasks:
                try:
                    await task
                except (asyncio.CancelledError, EyeError):
                    pass
            await asyncio.sleep(0.1)
            summary = orch.status()
            print("summary:")
            for eye, service in zip(summary["eyes"], eyes):
                print(f"  {eye['id']}: published {service.frames_published}, "
                      f"received {eye['frames']}, decode errors {eye['decode_errors']}")
            print(f"  sets: {summary['sets']['complete']} complete, "
                  f"{summary['sets']['incomplete']} incomplete")
            if args.record:
                print(f"  recording: {args.record}")
            if server is not None:
                server.should_exit = True
                await server_task
            await orch.stop()
            await broker.stop()
        return status

    try:
        return asyncio.run(run())
    except KeyboardInterrupt:
        return 0


# -- standalone services -----------------------------------------------------------


def cmd_broker(args) -> int:
    from .capture.broker import Broker

    async def run() -> int:
        host, port = args.bind
        broker = Broker(host, port)
        try:
            await broker.start()
        except OSError as exc:
            print(f"cannot bind {host}:{port}: {exc}", file=sys.stderr)
            return 1
        bhost, bport = broker.address
        print(f"broker listening on {bhost}:{bport}", flush=True)
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop.set)
        await stop.wait()
        await broker.stop()
        return 0

    try:
        return asyncio.run(run())
    except KeyboardInterrupt:
        return 0


def cmd_eye(args) -> int:
    from .capture.eye import EyeConfig, EyeError, EyeService
    from .geometry import Pose

    noise = _noise_from_args(args)
    if args.replay:
        pose = Pose.identity()
    else:
        if not args.rig:
            print("--rig FILE is required unless --replay is used", file=sys.stderr)
            return 2
        rig = {s.eye_id: s for s in load_rig(args.rig)}
        if args.id not in rig:
            print(f"eye {args.id!r} not in rig file", file=sys.stderr)
            return 2
        pose = rig[args.id].pose

    host, port = args.broker
    config = EyeConfig(
        eye_id=args.id,
        pose=pose,
        broker_host=host,
        broker_port=port,
        structure=_structure_from_args(args),
        noise=noise,
        fps=args.fps,
        max_frames=args.frames,
        replay_path=Path(args.replay) / f"{args.id}.vrec" if args.replay else None,
        realtime=True,
    )
    service = EyeService(config)

    async def run() -> int:
        task = asyncio.create_task(service.run())
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop.set)
        done, _ = await asyncio.wait(
            [task, asyncio.ensure_future(stop.wait())], return_when=asyncio.FIRST_COMPLETED
        )
        if task in done and task.exception() is not None:
            raise task.exception()
        task.cancel()
        try:
            await task
        except asyncio.CancelledError:
            pass
        return 0

    try:
        return asyncio.run(run())
    except KeyboardInterrupt:
        return 0
    except EyeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def cmd_orchestrate(args) -> int:
    import uvicorn

    from .capture.discovery import announce_broker
    from .capture.orchestrator import (
        CalibrationSettings,
        Orchestrator,
        OrchestratorConfig,
        create_app,
    )

    if args.rig:
        eye_ids = [s.eye_id for s in load_rig(args.rig)]
        sampling = load_rig_sampling(args.rig) or SamplingParams(sensors=len(eye_ids))
    elif args.expect:
        eye_ids = [e.strip() for e in args.expect.split(",") if e.strip()]
        sampling = SamplingParams(sensors=len(eye_ids))
    else:
        print("orchestrate needs --rig or --expect with the eye ids", file=sys.stderr)
        return 2

    async def run() -> int:
        host, port = args.broker
        orch = Orchestrator(
            OrchestratorConfig(
                host, port, tuple(eye_ids),
                stale_after_s=args.stale_after,
                recording_dir=args.record,
                record_on_start=bool(args.record),
            ),
            CalibrationSettings(structure=_structure_from_args(args), sampling=sampling,
                                crf=args.crf),
        )
        try:
            await orch.start()
        except OSError as exc:
            print(f"cannot reach broker at {host}:{port}: {exc}", file=sys.stderr)
            return 1

        if args.announce:
            targets = [_host_port(t) for t in args.announce.split(",")]
            replies = await announce_broker(host, port, targets)
            print(f"discovery: {len(replies)} listener replies", flush=True)

        app = create_app(orch, static_dir=args.static)
        cfg = uvicorn.Config(app, host=args.host, port=args.http, log_level="warning")
        server = uvicorn.Server(cfg)
        server.install_signal_handlers = lambda: None
        server_task = asyncio.create_task(server.serve())
        while not server.started and not server_task.done():
            await asyncio.sleep(0.01)
        if server_task.done():
            await server_task
        http_port = server.servers[0].sockets[0].getsockname()[1]
        print(f"api: http://{args.host}:{http_port}", flush=True)

        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop.set)
        await stop.wait()
        server.should_exit = True
        await server_task
        await orch.stop()
        return 0

    try:
        return asyncio.run(run())
    except KeyboardInterrupt:
        return 0


def cmd_eye_listener(args) -> int:
    import subprocess

    from .capture.discovery import AnnounceListener

    def spawn(broker_host: str, broker_port: int):
        cmd = [
            sys.executable, "-m", "vcap.cli", "eye",
            "--id", args.eye_id,
            "--rig", args.rig,
            "--broker", f"{broker_host}:{broker_port}",
        ]
        log.info("spawning: %s", " ".join(cmd))
        return subprocess.Popen(cmd)

    async def run() -> int:
        listener = AnnounceListener(args.id, spawn, port=args.port)
        await listener.start()
        lhost, lport = listener.address
        print(f"listening for announces on {lhost}:{lport}", flush=True)
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            loop.add_signal_handler(sig, stop.set)
        await stop.wait()
        listener.stop()
        for child in listener.children.values():
            child.terminate()
        return 0

    try:
        return asyncio.run(run())
    except KeyboardInterrupt:
        return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vcap", description=__doc__.split("\n\n")[0])
    parser.add_argument("--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render-dataset", help="write rendered sample groups")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=1, help="number of rig groups")
    p.add_argument("--eyes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tilted", action="store_true",
                   help="add random mounting tilt instead of pure look-at")
    _add_noise_flags(p)
    _add_structure_flag(p)
    p.set_defaults(func=cmd_render_dataset)

    p = sub.add_parser("rig", help="write a rig file")
    p.add_argument("--out", required=True)
    p.add_argument("--eyes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tilted", action="store_true")
    p.set_defaults(func=cmd_rig)

    p = sub.add_parser("simulate", help="broker + eyes + orchestrator in one process")
    p.add_argument("--eyes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fps", type=float, default=15.0)
    p.add_argument("--duration", type=float, default=None, help="seconds to run")
    p.add_argument("--frames", type=int, default=None,
                   help="publish exactly this many frames per eye, as fast as possible")
    p.add_argument("--broker", type=_host_port, default=None,
                   metavar="HOST:PORT", help="bind address for the embedded broker")
    p.add_argument("--http", type=int, default=0, help="HTTP API port (0 = ephemeral)")
    p.add_argument("--no-http", action="store_true", help="do not serve the HTTP API")
    p.add_argument("--static", default=None, help="directory with the web panel build")
    p.add_argument("--record", default=None, metavar="DIR", help="record raw frames")
    p.add_argument("--tilted", action="store_true")
    p.add_argument("--crf", type=_crf_type, default=CrfParams(),
                   metavar="S2D,S3D,W,T", help="refinement parameters")
    _add_noise_flags(p)
    _add_structure_flag(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="run the calibration pipeline")
    p.add_argument("--dataset", metavar="GROUP_DIR", help="dataset group directory")
    p.add_argument("--recording", metavar="DIR", help="recorded capture directory")
    p.add_argument("--live", action="store_true", help="latest complete set from a broker")
    p.add_argument("--broker", type=_host_port, default=None, metavar="HOST:PORT")
    p.add_argument("--rig", metavar="FILE", help="rig file (eye order and search bounds)")
    p.add_argument("--expect", metavar="IDS", help="comma-separated eye ids for --live")
    p.add_argument("--labeler", choices=("oracle", "gridsearch"), default="gridsearch")
    p.add_argument("--flip-fraction", type=float, default=0.0,
                   help="oracle labeler: fraction of pixels flipped to random labels")
    p.add_argument("--crf", type=_crf_type, default=CrfParams(), metavar="S2D,S3D,W,T")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--wait", type=float, default=10.0, help="--live: seconds to wait for a set")
    p.add_argument("--out", metavar="FILE", help="write the calibration result file")
    p.add_argument("--dump-labels", metavar="DIR", help="debug dump of label rasters")
    _add_structure_flag(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="recompute RMSE for a result file")
    p.add_argument("result", help="calibration result file")
    p.add_argument("--rig", metavar="FILE", help="ground-truth rig for pose errors")
    p.add_argument("--dataset", metavar="GROUP_DIR", help="override the stored input")
    p.add_argument("--recording", metavar="DIR", help="override the stored input")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("broker", help="standalone broker")
    p.add_argument("--bind", type=_host_port, default=("127.0.0.1", 47000), metavar="HOST:PORT")
    p.set_defaults(func=cmd_broker)

    p = sub.add_parser("eye", help="standalone eye service")
    p.add_argument("--id", required=True, help="eye id")
    p.add_argument("--broker", type=_host_port, required=True, metavar="HOST:PORT")
    p.add_argument("--rig", metavar="FILE", help="rig file with this eye's pose")
    p.add_argument("--replay", metavar="DIR", help="replay a recording instead of rendering")
    p.add_argument("--fps", type=float, default=15.0)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    _add_noise_flags(p)
    _add_structure_flag(p)
    p.set_defaults(func=cmd_eye)

    p = sub.add_parser("orchestrate", help="standalone orchestrator + HTTP API")
    p.add_argument("--broker", type=_host_port, required=True, metavar="HOST:PORT")
    p.add_argument("--rig", metavar="FILE")
    p.add_argument("--expect", metavar="IDS", help="comma-separated eye ids")
    p.add_argument("--host", default="127.0.0.1", help="HTTP bind host")
    p.add_argument("--http", type=int, default=8080, help="HTTP port (0 = ephemeral)")
    p.add_argument("--static", default=None, help="directory with the web panel build")
    p.add_argument("--record", default=None, metavar="DIR")
    p.add_argument("--stale-after", type=float, default=0.5, help="staleness window, seconds")
    p.add_argument("--announce", metavar="TARGETS",
                   help="comma-separated host:port discovery targets")
    p.add_argument("--crf", type=_crf_type, default=CrfParams(), metavar="S2D,S3D,W,T")
    _add_structure_flag(p)
    p.set_defaults(func=cmd_orchestrate)

    p = sub.add_parser("eye-listener", help="spawn a local eye on broker announces")
    p.add_argument("--id", required=True, help="listener/host id")
    p.add_argument("--eye-id", required=True, help="eye id to spawn")
    p.add_argument("--rig", required=True, metavar="FILE")
    p.add_argument("--port", type=int, default=47005, help="UDP announce port")
    p.set_defaults(func=cmd_eye_listener)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (DatasetError, GeometryError, CalibrationError, LabelingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
