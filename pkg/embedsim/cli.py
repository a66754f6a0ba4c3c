"""Run embedsim from the command line"""
import asyncio
import json
import logging
import logging.handlers
import sys
from argparse import ArgumentParser, ArgumentTypeError, Namespace
from dataclasses import asdict
from pathlib import Path
from typing import Any, Optional

from embedsim.bench.client import RemoteRunner
from embedsim.bench.harness import (
    ControllerKind,
    report_speedup,
    run_benchmark,
    write_reports,
)
from embedsim.bench.server import DEFAULT_HOST, DEFAULT_PORT, serve_models
from embedsim.configuration import Configuration
from embedsim.engine.behavior import (
    BehaviorSpec,
    GapLaneChange,
    KraussFollow,
    LaneChange,
    LearnedFollow,
    LearnedLaneChange,
)
from embedsim.engine.flow import FlowConfig, generate_flow, load_flow, save_flow
from embedsim.engine.metrics import recovery_metrics, write_report
from embedsim.engine.simulation import Engine, log_bc_dataset
from embedsim.engine.trajectory import TrajectoryWriter
from embedsim.errors import EmbedSimError, ParseError
from embedsim.learned.features import FeatureMask, Task
from embedsim.learned.modelfile import inspect_model, save_model
from embedsim.learned.training import (
    OPTIMIZERS,
    TrainConfig,
    bc_train,
    default_architecture,
    read_dataset,
    write_dataset,
)
from embedsim.network.files import load_network, save_network
from embedsim.network.grid import (
    DEFAULT_BLOCK_LENGTH,
    DEFAULT_LANES,
    DEFAULT_MAX_SPEED,
    DEFAULT_PHASE_DURATION,
    generate_grid,
)
from embedsim.network.types import RoadNetwork
from embedsim.parsing import (
    endpoint,
    full_path,
    int_list,
    name_list,
    nonnegative_int,
    positive_float,
    positive_int,
)

DEFAULT_STEPS = 3600

LOGGER = logging.getLogger("embedsim")


class UsageError(Exception):
    """The command line couldn't be parsed"""

    def __init__(self, message: str, usage: str):
        super().__init__(message)
        self.usage = usage


class Parser(ArgumentParser):
    """An ArgumentParser that reports problems instead of exiting"""

    def error(self, message: str):  # type: ignore
        raise UsageError(f"{self.prog}: error: {message}", self.format_usage())


def with_default():
    sys.exit(main())


def main(input_args: Optional[list[str]] = None, print=print) -> int:
    """Run embedsim from the command line

    Returns:
        The exit code: 0 on success, 1 for a bad command line, 2 if the
        command failed
    """
    try:
        args = parse_cli(input_args)
    except UsageError as exception:
        print(exception.usage.rstrip())
        print(str(exception))
        return 1
    except SystemExit as exception:
        # --help
        return exception.code if isinstance(exception.code, int) else 0

    if args.command is None:
        print("a command is required, see --help")
        return 1

    configure_logging(args, print)

    try:
        configuration = Configuration(args.config)

        match args.command:
            case "gen-grid" | "gen-flow":
                run_generate(args, configuration, print)
            case "run" | "log-data" | "eval-recovery":
                run_simulation(args, configuration, print)
            case "train" | "inspect-model":
                run_model(args, configuration, print)
            case "bench" | "serve":
                run_bench(args, configuration, print)
            case _:
                raise NotImplementedError(f"Command '{args.command}' not implemented")
    except (EmbedSimError, OSError) as exception:
        LOGGER.error("%s", exception)
        print(f"error: {exception}")
        return 2

    return 0


def configure_logging(args: Namespace, print=print):
    logger = logging.getLogger("embedsim")
    logger.setLevel(level=args.log_level)

    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    handler: logging.Handler = logging.StreamHandler()
    if args.command == "serve" or args.log_directory:
        specified = args.log_directory is not None

        if not specified:
            if sys.platform.startswith("win"):
                args.log_directory = Path.home() / "Application Data" / "embedsim"
            elif sys.platform == "darwin":
                args.log_directory = Path.home() / "Library" / "Logs" / "embedsim"
            else:
                args.log_directory = Path("/var/log/embedsim")

        try:
            args.log_directory.mkdir(exist_ok=True, parents=True)
        except PermissionError:
            if specified:
                raise

            print(f"could not access log directory: {args.log_directory}")
        else:
            handler = logging.handlers.TimedRotatingFileHandler(
                args.log_directory / "embedsim.log",
                when="midnight",
                backupCount=7,
            )

    logger.addHandler(handler)


def parse_cli(input_args: Optional[list[str]] = None) -> Namespace:
    """Parse command-line arguments

    build the ArgumentParser and then parse the supplied inputs

    args:
        input_args: The input arguments to parse

    Returns:
        The produced Namespace
    """
    parser = Parser(description="Simulate traffic with embedded learned behaviors")

    subparsers = parser.add_subparsers(
        dest="command", help="Run embedsim from the command line"
    )

    leaves = []
    leaves.extend(build_generators(subparsers))
    leaves.extend(build_simulation(subparsers))
    leaves.extend(build_models(subparsers))
    leaves.extend(build_bench(subparsers))

    # shared flags go after the subcommand
    for leaf in leaves:
        leaf.add_argument(
            "--config",
            type=full_path,
            help="An embedsim.toml file with default settings",
        )
        leaf.add_argument(
            "--debug",
            dest="log_level",
            default=logging.INFO,
            action="store_const",
            const=logging.DEBUG,
            help="Show debug logs",
        )
        leaf.add_argument(
            "--log-directory",
            type=full_path,
            help=(
                "Where to write logs to. If unsupplied, logs will be "
                "written to stderr, except for the model server, which "
                "logs to the platform-appropriate directory if it has "
                "permission to write there. On macos, logs will be "
                "written to ~/Library/Logs/embedsim, on Windows, "
                "\\%Username\\%\\Application Data\\embedsim, and "
                "everywhere else /var/log/embedsim."
            ),
        )

    return parser.parse_args(input_args)


def build_generators(action) -> list[ArgumentParser]:
    """Add commands that write networks and flows"""

    grid = action.add_parser(
        "gen-grid", description="Write a grid network of signalized intersections"
    )
    grid.add_argument(
        "--rows", type=positive_int, required=True, help="Intersections north-south"
    )
    grid.add_argument(
        "--cols", type=positive_int, required=True, help="Intersections east-west"
    )
    grid.add_argument(
        "--block-length",
        type=positive_float,
        default=DEFAULT_BLOCK_LENGTH,
        help="Length of every road, in meters",
    )
    grid.add_argument(
        "--lanes",
        type=positive_int,
        default=DEFAULT_LANES,
        help="Lanes on every road",
    )
    grid.add_argument(
        "--max-speed",
        type=positive_float,
        default=DEFAULT_MAX_SPEED,
        help="Speed limit of every lane, in m/s",
    )
    grid.add_argument(
        "--phase-duration",
        type=positive_float,
        default=DEFAULT_PHASE_DURATION,
        help="Length of each signal phase, in seconds",
    )
    grid.add_argument(
        "--unsignalized",
        dest="signalized",
        action="store_false",
        help="Leave intersections without signals",
    )
    grid.add_argument(
        "--out", type=full_path, required=True, help="Where to write the network"
    )

    flow = action.add_parser(
        "gen-flow",
        description=(
            "Write a flow with one vehicle stream per entry road and "
            "movement at the first intersection"
        ),
    )
    flow.add_argument("network", type=full_path, help="The network file")
    flow.add_argument(
        "--interval",
        type=positive_float,
        default=30.0,
        help="Seconds between vehicles of a stream",
    )
    flow.add_argument(
        "--end",
        type=float,
        default=300.0,
        help="No stream spawns vehicles after this time",
    )
    flow.add_argument(
        "--stagger",
        type=float,
        default=2.0,
        help="Stream i starts at i times this many seconds",
    )
    flow.add_argument(
        "--out", type=full_path, required=True, help="Where to write the flow"
    )

    return [grid, flow]


def _add_scenario(parser: ArgumentParser, steps: int = DEFAULT_STEPS):
    parser.add_argument("network", type=full_path, help="The network file")
    parser.add_argument("flow", type=full_path, help="The flow file")
    parser.add_argument(
        "--steps", type=nonnegative_int, default=steps, help="How many steps to run"
    )
    parser.add_argument(
        "--dt",
        type=positive_float,
        help="Step length in seconds (default from the configuration, or 1)",
    )


def _add_models(parser: ArgumentParser, whom: str):
    parser.add_argument(
        "--follow-model",
        type=full_path,
        help=f"Use this followSpeed model for every vehicle{whom}",
    )
    parser.add_argument(
        "--lane-model",
        type=full_path,
        help=f"Use this laneChange model for every vehicle{whom}",
    )


def build_simulation(action) -> list[ArgumentParser]:
    """Add commands that run simulations"""

    run = action.add_parser("run", description="Run a simulation")
    _add_scenario(run)
    run.add_argument("--log", type=full_path, help="Where to write the trajectory log")
    _add_models(run, "")
    run.add_argument(
        "--spawn-jitter",
        type=float,
        default=0.0,
        help="Delay each spawn by up to this many seconds, at random",
    )
    run.add_argument(
        "--seed", type=int, help="Seed for the spawn jitter (default from config)"
    )

    log_data = action.add_parser(
        "log-data", description="Log a rule-based run as a behavior-cloning dataset"
    )
    _add_scenario(log_data)
    log_data.add_argument(
        "--task",
        choices=[task.value for task in Task],
        default=Task.FOLLOW_SPEED.value,
        help="Which decisions to log",
    )
    log_data.add_argument(
        "--out", type=full_path, required=True, help="Where to write the dataset"
    )
    log_data.add_argument(
        "--allow-learned-teacher",
        action="store_true",
        help="Allow logging decisions made by learned models",
    )

    recovery = action.add_parser(
        "eval-recovery",
        description=(
            "Compare a candidate run against a reference run of the same vehicles"
        ),
    )
    recovery.add_argument("network", type=full_path, help="The network file")
    recovery.add_argument(
        "reference", type=full_path, help="The flow file of the reference run"
    )
    recovery.add_argument(
        "candidate", type=full_path, help="The flow file of the candidate run"
    )
    recovery.add_argument(
        "--steps",
        type=nonnegative_int,
        default=DEFAULT_STEPS,
        help="How many steps to run each",
    )
    recovery.add_argument(
        "--dt",
        type=positive_float,
        help="Step length in seconds (default from the configuration, or 1)",
    )
    _add_models(recovery, " in the candidate run")
    recovery.add_argument(
        "--report", type=full_path, help="Where to write the full report (TOML)"
    )
    recovery.add_argument(
        "--reference-log", type=full_path, help="Where to write the reference log"
    )
    recovery.add_argument(
        "--candidate-log", type=full_path, help="Where to write the candidate log"
    )

    return [run, log_data, recovery]


def build_models(action) -> list[ArgumentParser]:
    """Add commands for learned models"""

    train = action.add_parser(
        "train", description="Train a model on a behavior-cloning dataset"
    )
    train.add_argument("dataset", type=full_path, help="The dataset file")
    train.add_argument(
        "--out", type=full_path, required=True, help="Where to write the model"
    )
    train.add_argument(
        "--arch",
        type=int_list,
        help=(
            "Comma-separated layer sizes from inputs to outputs "
            "(default: catalog size,64,64,outputs)"
        ),
    )
    train.add_argument("--epochs", type=positive_int, help="Training epochs")
    train.add_argument("--learning-rate", type=positive_float, help="Step size")
    train.add_argument(
        "--optimizer", choices=OPTIMIZERS, help="How to step (default: sgd)"
    )
    train.add_argument(
        "--balance-classes",
        action="store_true",
        default=None,
        help="Weigh lane choices by how rare they are",
    )
    train.add_argument("--batch-size", type=positive_int, help="Rows per batch")
    train.add_argument("--seed", type=int, help="Seed for splits, init, and shuffling")
    train.add_argument(
        "--validation-fraction",
        type=float,
        help="Share of rows held out for validation",
    )
    mask_group = train.add_mutually_exclusive_group()
    mask_group.add_argument(
        "--mask",
        type=name_list,
        help="Comma-separated features the model may use (default: all)",
    )
    mask_group.add_argument(
        "--exclude",
        type=name_list,
        help="Comma-separated features to mask out",
    )

    inspect = action.add_parser(
        "inspect-model", description="Describe the contents of a model file"
    )
    inspect.add_argument("path", type=full_path, help="The model file")

    return [train, inspect]


def build_bench(action) -> list[ArgumentParser]:
    """Add benchmarking commands"""

    bench = action.add_parser(
        "bench",
        description="Time a scenario with rule-based, embedded, and remote models",
    )
    _add_scenario(bench)
    bench.add_argument(
        "--kind",
        dest="kinds",
        action="append",
        choices=[kind.value for kind in ControllerKind],
        help="A controller to time. Repeatable (default: all three)",
    )
    bench.add_argument(
        "--repetitions",
        type=positive_int,
        help="Runs per controller; the median is reported",
    )
    bench.add_argument(
        "--endpoint",
        type=endpoint,
        help="host:port of the model server for RemoteLearned",
    )
    bench.add_argument(
        "--scenario", help="A name for the scenario (default: the flow file's name)"
    )
    _add_models(bench, " of the learned controllers")
    bench.add_argument("--report", type=full_path, help="Where to write the CSV report")
    bench.add_argument(
        "--log-dir",
        type=full_path,
        help="Keep each controller's first trajectory log in this directory",
    )
    bench.add_argument(
        "--shutdown-server",
        action="store_true",
        help="Stop the model server when done",
    )

    serve = action.add_parser(
        "serve", description="Serve models over a local socket until shut down"
    )
    _add_models(serve, "")
    serve.add_argument(
        "--endpoint",
        type=endpoint,
        default=(DEFAULT_HOST, DEFAULT_PORT),
        help=f"host:port to listen on (default {DEFAULT_HOST}:{DEFAULT_PORT})",
    )

    return [bench, serve]


def run_generate(args: Namespace, configuration: Configuration, print=print):
    """Write networks and flows"""
    match args.command:
        case "gen-grid":
            network = generate_grid(
                args.rows,
                args.cols,
                args.block_length,
                args.lanes,
                args.max_speed,
                args.signalized,
                phase_duration=args.phase_duration,
            )
            save_network(network, args.out)
            print(
                f"wrote {len(network.intersections)} intersections and "
                f"{len(network.roads)} roads to {args.out}"
            )
        case "gen-flow":
            flow = generate_flow(
                load_network(args.network),
                interval=args.interval,
                end=args.end,
                stagger=args.stagger,
            )
            save_flow(flow, args.out)
            print(
                f"wrote {len(flow.flows)} flows, "
                f"{len(flow.spawn_records())} vehicles to {args.out}"
            )


def override_behavior(
    configuration: Configuration,
    follow_model: Optional[Path],
    lane_model: Optional[Path],
) -> Optional[BehaviorSpec]:
    """The behavior replacing every vehicle's, if models were given"""
    if follow_model is None and lane_model is None:
        return None

    lane_change: LaneChange = GapLaneChange(**asdict(configuration.lane_change))
    if lane_model is not None:
        lane_change = LearnedLaneChange(lane_model)

    if follow_model is not None:
        return BehaviorSpec(LearnedFollow(follow_model), lane_change)

    return BehaviorSpec(KraussFollow(), lane_change)


def _load_scenario(
    network_path: Path, flow_path: Path, configuration: Configuration
) -> tuple[RoadNetwork, FlowConfig]:
    return load_network(network_path), load_flow(
        flow_path, lane_change_defaults=asdict(configuration.lane_change)
    )


def _engine(
    network: RoadNetwork,
    flow: FlowConfig,
    args: Namespace,
    configuration: Configuration,
    behavior: Optional[BehaviorSpec] = None,
) -> Engine:
    simulation = configuration.simulation
    return Engine(
        network,
        flow,
        dt=args.dt or simulation.dt,
        collision_tolerance=simulation.collision_tolerance,
        behavior=behavior,
        spawn_jitter=getattr(args, "spawn_jitter", 0.0),
        seed=simulation.seed if getattr(args, "seed", None) is None else args.seed,
    )


def run_simulation(args: Namespace, configuration: Configuration, print=print):
    """Run simulations"""
    match args.command:
        case "run":
            network, flow = _load_scenario(args.network, args.flow, configuration)
            engine = _engine(
                network,
                flow,
                args,
                configuration,
                override_behavior(configuration, args.follow_model, args.lane_model),
            )

            if args.log:
                with TrajectoryWriter(args.log) as sink:
                    engine.run(args.steps, sink)
            else:
                engine.run(args.steps)

            print(json_dump(engine.summary()))
        case "log-data":
            network, flow = _load_scenario(args.network, args.flow, configuration)
            dataset = log_bc_dataset(
                _engine(network, flow, args, configuration),
                args.steps,
                Task(args.task),
                allow_learned_teacher=args.allow_learned_teacher,
            )
            write_dataset(dataset, args.out)
            print(f"wrote {len(dataset)} {dataset.task.value} rows to {args.out}")
        case "eval-recovery":
            network = load_network(args.network)
            lane_defaults = asdict(configuration.lane_change)

            reference = _engine(
                network,
                load_flow(args.reference, lane_change_defaults=lane_defaults),
                args,
                configuration,
            ).run(args.steps)
            candidate = _engine(
                network,
                load_flow(args.candidate, lane_change_defaults=lane_defaults),
                args,
                configuration,
                override_behavior(configuration, args.follow_model, args.lane_model),
            ).run(args.steps)

            if args.reference_log:
                reference.write(args.reference_log)

            if args.candidate_log:
                candidate.write(args.candidate_log)

            metrics = recovery_metrics(reference, candidate)
            if args.report:
                write_report(metrics, args.report)

            summary: dict[str, Any] = metrics.serialize()
            summary.pop("vehicles")
            summary.pop("version")
            print(json_dump(summary))


def _train_config(args: Namespace, configuration: Configuration) -> TrainConfig:
    values = asdict(configuration.training)
    for name in values:
        if getattr(args, name, None) is not None:
            values[name] = getattr(args, name)

    return TrainConfig(**values)


def run_model(args: Namespace, configuration: Configuration, print=print):
    """Train and describe models"""
    match args.command:
        case "train":
            dataset = read_dataset(args.dataset)
            task = dataset.task

            if args.mask is not None:
                mask = FeatureMask(task, frozenset(args.mask))
            elif args.exclude is not None:
                mask = FeatureMask.excluding(task, args.exclude)
            else:
                mask = FeatureMask.full(task)

            result = bc_train(
                dataset,
                args.arch or default_architecture(task),
                mask,
                _train_config(args, configuration),
            )
            save_model(result.model, args.out)

            final = result.history[-1]
            print(
                json_dump(
                    {
                        "task": task.value,
                        "layer_sizes": result.model.layer_sizes,
                        "epochs": final.epoch,
                        "train_loss": final.train,
                        "validation_loss": final.validation,
                        "out": str(args.out),
                    }
                )
            )
        case "inspect-model":
            print(json_dump(inspect_model(args.path)))


def run_bench(args: Namespace, configuration: Configuration, print=print):
    """Run benchmarks and the model server"""
    settings = configuration.bench
    match args.command:
        case "bench":
            if args.endpoint:
                host, port = args.endpoint
            else:
                try:
                    host, port = endpoint(settings.endpoint)
                except ArgumentTypeError as exception:
                    raise ParseError(f"bench.{exception}") from exception
            network, flow = _load_scenario(args.network, args.flow, configuration)
            kinds = [ControllerKind(kind) for kind in args.kinds or ()] or list(
                ControllerKind
            )
            scenario = args.scenario or args.flow.stem

            if args.log_dir:
                args.log_dir.mkdir(parents=True, exist_ok=True)

            reports = []
            for kind in kinds:
                log = None
                if args.log_dir:
                    log = args.log_dir / f"{kind.value}.csv"

                reports.append(
                    run_benchmark(
                        network,
                        flow,
                        args.steps,
                        kind,
                        args.repetitions or settings.repetitions,
                        scenario=scenario,
                        follow_model=args.follow_model,
                        lane_model=args.lane_model,
                        endpoint=(host, port),
                        dt=args.dt or configuration.simulation.dt,
                        log=log,
                    )
                )

            if args.shutdown_server:
                RemoteRunner(host, port).shutdown()

            if args.report:
                write_reports(reports, args.report)

            if len(reports) > 1:
                print(report_speedup(reports).rstrip())
            else:
                print(json_dump(asdict(reports[0]) | {"kind": reports[0].kind.value}))
        case "serve":
            host, port = args.endpoint
            print("send a shutdown message or press ^c to stop the server")
            try:
                asyncio.run(
                    serve_models(args.follow_model, args.lane_model, host, port)
                )
            except KeyboardInterrupt:
                pass


def json_dump(data) -> str:
    """Dump data to a json string with nice formatting"""

    return json.dumps(
        data,
        sort_keys=True,
        indent=2,
    )
