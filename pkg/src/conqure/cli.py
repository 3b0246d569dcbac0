"""Operator command line: serve the queue, submit and track jobs, run the
latency benchmark and the VQE demo.

Exit codes (documented contract):

    0  success
    2  usage or validation failure (bad flags, bad config, rejected workload)
    3  transport failure (service unreachable)
    4  not found (unknown job or device)
    5  not ready (results requested before completion, without --wait)
    6  remote failure (job FAILED, server error)

``CONQURE_URL`` and ``CONQURE_CONFIG`` provide defaults for --url and
--config.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
import time
from typing import Optional

import requests

from . import __version__
from .bench import BenchError, run_latency_bench
from .service import ConfigError, QueueService, load_config
from .store import JobStore
from .vqe import (
    DEMO_GRAPH,
    SpsaSchedule,
    brute_force_maxcut,
    make_instance_configs,
    run_parallel_vqe,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TRANSPORT = 3
EXIT_NOT_FOUND = 4
EXIT_NOT_READY = 5
EXIT_REMOTE = 6

DEFAULT_URL = "http://127.0.0.1:8042"

log = logging.getLogger(__name__)


def _default_url() -> str:
    return os.environ.get("CONQURE_URL", DEFAULT_URL)


def _emit(args, human: str, payload: dict):
    if args.format == "json":
        print(json.dumps(payload))
    else:
        print(human)


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _http_error_code(status: int) -> int:
    if status == 404:
        return EXIT_NOT_FOUND
    if status == 409:
        return EXIT_NOT_READY
    if status in (400, 422):
        return EXIT_USAGE
    return EXIT_REMOTE


def _request(method: str, url: str, **kwargs):
    try:
        return requests.request(method, url, timeout=kwargs.pop("timeout", 10.0), **kwargs)
    except requests.RequestException as exc:
        raise ConnectionError(f"cannot reach service: {exc}") from exc


def _poll_until_done(url: str, job_id: str, timeout: float, interval: float = 0.05) -> dict:
    deadline = time.monotonic() + timeout
    while True:
        response = _request("GET", f"{url}/v1/work/{job_id}")
        if response.status_code != 200:
            raise ConnectionError(f"status poll failed ({response.status_code}): {response.text}")
        payload = response.json()
        if payload["status"] in ("COMPLETED", "FAILED", "CANCELLED"):
            return payload
        if time.monotonic() > deadline:
            raise TimeoutError(f"job {job_id} still {payload['status']} after {timeout}s")
        time.sleep(interval)


# -- subcommands -------------------------------------------------------------


def cmd_serve(args) -> int:
    config_path = args.config or os.environ.get("CONQURE_CONFIG")
    if not config_path:
        return _fail(EXIT_USAGE, "serve needs --config (or CONQURE_CONFIG)")
    try:
        config = load_config(config_path)
    except ConfigError as exc:
        return _fail(EXIT_USAGE, str(exc))

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    try:
        service = QueueService(config)
        service.start()
    except OSError as exc:
        return _fail(EXIT_USAGE, f"cannot start service: {exc}")

    stop = threading.Event()

    def on_signal(signum, frame):
        log.info("received signal %d, shutting down", signum)
        stop.set()

    signal.signal(signal.SIGINT, on_signal)
    signal.signal(signal.SIGTERM, on_signal)
    print(f"serving on {service.url} ({len(config.devices)} device(s))", flush=True)
    stop.wait()
    service.stop()
    return EXIT_OK


def cmd_submit(args) -> int:
    try:
        with open(args.workload, "rb") as fh:
            workload_text = fh.read().decode("utf-8")
    except OSError as exc:
        return _fail(EXIT_USAGE, f"cannot read workload file: {exc}")
    body = {"workload": workload_text, "device_id": args.device, "priority": args.priority}
    try:
        response = _request("POST", f"{_url(args)}/v1/work", json=body)
    except ConnectionError as exc:
        return _fail(EXIT_TRANSPORT, str(exc))
    if response.status_code != 201:
        return _fail(_http_error_code(response.status_code),
                     response.json().get("error", response.text))
    job_id = response.json()["job_id"]
    if not args.wait:
        _emit(args, job_id, {"job_id": job_id})
        return EXIT_OK
    try:
        status = _poll_until_done(_url(args), job_id, args.timeout)
    except ConnectionError as exc:
        return _fail(EXIT_TRANSPORT, str(exc))
    except TimeoutError as exc:
        return _fail(EXIT_NOT_READY, str(exc))
    if status["status"] != "COMPLETED":
        return _fail(EXIT_REMOTE, f"job {job_id} {status['status']}: {status.get('error', '')}")
    response = _request("GET", f"{_url(args)}/v1/work/{job_id}/results")
    payload = response.json()
    print(json.dumps(payload["counts"]))
    return EXIT_OK


def cmd_status(args) -> int:
    try:
        response = _request("GET", f"{_url(args)}/v1/work/{args.job_id}")
    except ConnectionError as exc:
        return _fail(EXIT_TRANSPORT, str(exc))
    if response.status_code != 200:
        return _fail(_http_error_code(response.status_code),
                     response.json().get("error", response.text))
    payload = response.json()
    human = f"job {payload['job_id']}: {payload['status']}"
    if "queue_position" in payload:
        human += f" (queue position {payload['queue_position']})"
    if "error" in payload:
        human += f" — {payload['error']}"
    _emit(args, human, payload)
    return EXIT_OK


def cmd_results(args) -> int:
    url = _url(args)
    if args.wait:
        try:
            _poll_until_done(url, args.job_id, args.timeout)
        except ConnectionError as exc:
            return _fail(EXIT_TRANSPORT, str(exc))
        except TimeoutError as exc:
            return _fail(EXIT_NOT_READY, str(exc))
    try:
        response = _request("GET", f"{url}/v1/work/{args.job_id}/results")
    except ConnectionError as exc:
        return _fail(EXIT_TRANSPORT, str(exc))
    if response.status_code != 200:
        return _fail(_http_error_code(response.status_code),
                     response.json().get("error", response.text))
    payload = response.json()
    if "counts" not in payload:
        return _fail(EXIT_REMOTE,
                     f"job {args.job_id} {payload.get('status')}: {payload.get('error', '')}")
    _emit(args, json.dumps(payload["counts"]), payload)
    return EXIT_OK


def cmd_cancel(args) -> int:
    try:
        response = _request("DELETE", f"{_url(args)}/v1/work/{args.job_id}")
    except ConnectionError as exc:
        return _fail(EXIT_TRANSPORT, str(exc))
    if response.status_code != 200:
        return _fail(_http_error_code(response.status_code),
                     response.json().get("error", response.text))
    payload = response.json()
    _emit(args, f"job {payload['job_id']}: {payload['status']}", payload)
    return EXIT_OK


def cmd_devices(args) -> int:
    try:
        response = _request("GET", f"{_url(args)}/v1/devices")
    except ConnectionError as exc:
        return _fail(EXIT_TRANSPORT, str(exc))
    payload = response.json()
    lines = [
        f"{d['device_id']}  {d['kind']}  {d['num_qubits']} qubits  "
        f"{d['slots']} slot(s)  {d['policy']}"
        for d in payload["devices"]
    ]
    _emit(args, "\n".join(lines) if lines else "(no devices)", payload)
    return EXIT_OK


def cmd_dump(args) -> int:
    if not os.path.exists(args.store):
        return _fail(EXIT_USAGE, f"store file {args.store!r} does not exist")
    store = JobStore(args.store)
    try:
        store.dump(sys.stdout)
    finally:
        store.close()
    return EXIT_OK


def _parse_sizes(text: str) -> list[int]:
    sizes = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if "-" in chunk:
            lo, hi = chunk.split("-", 1)
            sizes.extend(range(int(lo), int(hi) + 1))
        elif chunk:
            sizes.append(int(chunk))
    if not sizes or any(s < 1 for s in sizes):
        raise ValueError(f"bad size list {text!r}")
    return sizes


def cmd_bench_latency(args) -> int:
    try:
        sizes = _parse_sizes(args.sizes)
    except ValueError as exc:
        return _fail(EXIT_USAGE, str(exc))
    try:
        result = run_latency_bench(
            _url(args),
            device_id=args.device,
            sizes=sizes,
            repetitions=args.repetitions,
            shots=args.shots,
        )
    except BenchError as exc:
        return _fail(EXIT_REMOTE, str(exc))
    except requests.RequestException as exc:
        return _fail(EXIT_TRANSPORT, f"cannot reach service: {exc}")

    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            result.write_csv(fh)
        print(f"wrote {len(result.samples)} samples to {args.out}", file=sys.stderr)

    summaries = [s.__dict__ for s in result.summaries()]
    if args.format == "json":
        print(json.dumps({"summaries": summaries}))
    else:
        print(f"{'call':<14}{'qubits':<8}{'n':<7}{'median':<9}{'q1':<9}{'q3':<9}")
        for s in result.summaries():
            size = "all" if s.num_qubits is None else s.num_qubits
            print(f"{s.call:<14}{size:<8}{s.samples:<7}"
                  f"{s.median_ms:<9.3f}{s.q1_ms:<9.3f}{s.q3_ms:<9.3f}")
    if args.plot:
        _plot_latency(result, args.plot)
    return EXIT_OK


def _plot_latency(result, path: str):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping plot", file=sys.stderr)
        return
    sizes = sorted({s.num_qubits for s in result.samples})
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, call in zip(axes, ("create_work", "get_results")):
        data = [
            [s.latency_ms for s in result.samples if s.call == call and s.num_qubits == n]
            for n in sizes
        ]
        ax.boxplot(data, tick_labels=[str(n) for n in sizes])
        ax.set_title(call)
        ax.set_xlabel("GHZ qubits")
    axes[0].set_ylabel("latency (ms)")
    fig.tight_layout()
    fig.savefig(path)
    print(f"wrote plot to {path}", file=sys.stderr)


def _write_traces(out_dir: str, mode: str, outcome) -> None:
    for i, trace in enumerate(outcome.traces):
        if trace is None:
            continue
        path = os.path.join(out_dir, f"{mode}_trace_{i:02d}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iteration,cost,elapsed_ms\n")
            for record in trace.records:
                fh.write(f"{record.iteration},{record.cost!r},{record.elapsed_ms:.3f}\n")


def cmd_vqe_demo(args) -> int:
    if args.instances < 1:
        return _fail(EXIT_USAGE, f"--instances must be >= 1, got {args.instances}")
    if args.qpus < 1:
        return _fail(EXIT_USAGE, f"--qpus must be >= 1, got {args.qpus}")
    os.makedirs(args.out_dir, exist_ok=True)

    graph = DEMO_GRAPH
    optimum, optimum_bitstring = brute_force_maxcut(graph)
    configs = make_instance_configs(
        graph,
        instances=args.instances,
        base_seed=args.seed,
        shots=args.shots,
        max_iterations=args.iterations,
    )

    summary: dict = {
        "graph": {"num_vertices": graph.num_vertices, "num_edges": graph.num_edges},
        "optimum_cut": optimum,
        "optimum_bitstring": optimum_bitstring,
        "instances": args.instances,
        "qpus": args.qpus,
        "shots": args.shots,
        "iterations": args.iterations,
        "seed": args.seed,
    }

    outcomes = {}
    for mode in (("serial", "parallel") if args.mode == "both" else (args.mode,)):
        qpus = 1 if mode == "serial" else args.qpus
        outcome = run_parallel_vqe(configs, qpu_count=qpus)
        outcomes[mode] = outcome
        _write_traces(args.out_dir, mode, outcome)
        best = outcome.best_trace
        summary[mode] = {
            "wall_time_s": round(outcome.wall_time_s, 3),
            "best_instance": outcome.best_index,
            "best_expected_cut": best.best_expected_cut,
            "best_bitstring": best.best_bitstring,
            "approximation_ratio": best.best_expected_cut / optimum if optimum else None,
            "failed_instances": sorted(outcome.errors),
        }

    if len(outcomes) == 2:
        serial, parallel = outcomes["serial"], outcomes["parallel"]
        summary["speedup"] = round(serial.wall_time_s / parallel.wall_time_s, 3)
        summary["traces_identical"] = all(
            (a is None and b is None)
            or (a is not None and b is not None and a.result_key() == b.result_key())
            for a, b in zip(serial.traces, parallel.traces)
        )

    summary_path = os.path.join(args.out_dir, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)

    if args.format == "json":
        print(json.dumps(summary))
    else:
        print(f"graph: {graph.num_vertices} vertices, {graph.num_edges} edges, "
              f"optimum cut {optimum}")
        for mode, outcome in outcomes.items():
            best = outcome.best_trace
            print(f"{mode}: wall {outcome.wall_time_s:.2f}s, best expected cut "
                  f"{best.best_expected_cut:.3f} (instance {outcome.best_index})")
        if "speedup" in summary:
            print(f"speedup serial/parallel: {summary['speedup']:.2f}x "
                  f"(traces identical: {summary['traces_identical']})")
        print(f"wrote {summary_path}")

    if args.plot:
        _plot_convergence(next(iter(outcomes.values())), os.path.join(args.out_dir, args.plot))
    failed = any(outcome.errors for outcome in outcomes.values())
    return EXIT_REMOTE if failed else EXIT_OK


def _plot_convergence(outcome, path: str):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping plot", file=sys.stderr)
        return
    fig, ax = plt.subplots(figsize=(7, 4))
    for i, trace in enumerate(outcome.traces):
        if trace is None:
            continue
        ax.plot([r.iteration for r in trace.records], [r.cost for r in trace.records],
                label=f"run {i}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("cost")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    print(f"wrote plot to {path}", file=sys.stderr)


def _url(args) -> str:
    return args.url.rstrip("/")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conqure", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"conqure {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, url=True):
        if url:
            p.add_argument("--url", default=_default_url(),
                           help="service URL (env CONQURE_URL)")
        p.add_argument("--format", choices=("human", "json"), default="human")

    p = sub.add_parser("serve", help="run the queue service")
    p.add_argument("--config", help="config file path (env CONQURE_CONFIG)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("submit", help="submit a workload file")
    p.add_argument("workload", help="workload document file")
    p.add_argument("--device", required=True)
    p.add_argument("--priority", default="LOW", choices=("LOW", "MEDIUM", "HIGH"))
    p.add_argument("--wait", action="store_true", help="poll until done, print counts")
    p.add_argument("--timeout", type=float, default=300.0)
    add_common(p)
    p.set_defaults(func=cmd_submit)

    p = sub.add_parser("status", help="job status snapshot")
    p.add_argument("job_id")
    add_common(p)
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("results", help="fetch job results")
    p.add_argument("job_id")
    p.add_argument("--wait", action="store_true")
    p.add_argument("--timeout", type=float, default=300.0)
    add_common(p)
    p.set_defaults(func=cmd_results)

    p = sub.add_parser("cancel", help="cancel a queued job")
    p.add_argument("job_id")
    add_common(p)
    p.set_defaults(func=cmd_cancel)

    p = sub.add_parser("devices", help="list registered devices")
    add_common(p)
    p.set_defaults(func=cmd_devices)

    p = sub.add_parser("dump", help="export the job store as JSON lines")
    p.add_argument("--store", required=True, help="store file path")
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("bench-latency", help="measure API call latency")
    p.add_argument("--sizes", default="2-8", help="GHZ sizes, e.g. 2-8 or 2,4,6")
    p.add_argument("--repetitions", type=int, default=1000,
                   help="samples per size (default 1000)")
    p.add_argument("--shots", type=int, default=30)
    p.add_argument("--device", default="sim0")
    p.add_argument("--out", help="write raw samples CSV here")
    p.add_argument("--plot", help="write a box plot image here")
    add_common(p)
    p.set_defaults(func=cmd_bench_latency)

    p = sub.add_parser("vqe-demo", help="run the parallel VQE max-cut demo")
    p.add_argument("--instances", type=int, default=6)
    p.add_argument("--qpus", type=int, default=6)
    p.add_argument("--mode", choices=("serial", "parallel", "both"), default="both")
    p.add_argument("--shots", type=int, default=1000)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out-dir", default="vqe-out")
    p.add_argument("--plot", help="convergence plot filename (inside out-dir)")
    add_common(p, url=False)
    p.set_defaults(func=cmd_vqe_demo)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
