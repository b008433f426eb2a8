"""Command line interface."""

import asyncio
import functools
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, BinaryIO, NamedTuple, Optional, Tuple

import click
import numpy as np
import orjson
import pandas as pd
import xdg

from . import (
    DEFAULT_ALPHA,
    DEFAULT_PERMUTATIONS,
    DEFAULT_SAMPLES,
    DEFAULT_SUBSAMPLE_CAP,
    DEFAULT_TRIALS,
    METHOD_BASELINE,
    METHOD_DISCOVER,
    MIN_HSIC_SAMPLES,
    LvOrderError,
)
from .evaluate import CONVENTIONS, async_run_benchmark, render_table
from .independence import HsicOptions
from .ordering import direct_lingam_baseline, discover
from .regression import DataMatrix
from .simulate import BUILTIN_SPECS, ModelSpec, calibrate_snr, generate
from .utils import THREADS_ENV, dumps_json, thread_count

_LOG = logging.getLogger(__name__)

CONFIG_FILE = "benchmark.json"


def _cli_main(main):
    """Wrap a command to run in asyncio and report failures as usage errors."""

    def wrapper(*args, **kwargs):
        verbose = kwargs.pop("verbose", False)
        logging.basicConfig()
        logging.getLogger("lvorder").setLevel(
            logging.DEBUG if verbose else logging.WARN
        )

        try:
            return asyncio.run(main(*args, **kwargs))
        except (LvOrderError, ValueError, OSError) as ex:
            raise click.ClickException(str(ex)) from ex

    return functools.update_wrapper(wrapper, main)


def _verbose_option(func):
    return click.option(
        "-v", "--verbose", is_flag=True, help="Log progress and diagnostics."
    )(func)


class _SamplesParamType(click.ParamType):
    """A comma separated list of sample sizes."""

    name = "samples"

    def convert(
        self, value: Any, param: Optional[click.Parameter], ctx: Optional[click.Context]
    ) -> Tuple[int, ...]:
        if isinstance(value, tuple):
            return value
        try:
            return tuple(int(item) for item in str(value).split(",") if item.strip())
        except ValueError:
            self.fail(
                f"{value!r} is not a comma separated list of integers", param, ctx
            )


class _CountParamType(click.ParamType):
    """A count, "on" for a default count, "off" or 0 to disable."""

    name = "count|on|off"

    def __init__(self, default_count: int, minimum: int = 1):
        self.default_count = default_count
        self.minimum = minimum

    def convert(
        self, value: Any, param: Optional[click.Parameter], ctx: Optional[click.Context]
    ) -> int:
        if isinstance(value, int):
            return value
        if str(value).lower() == "off":
            return 0
        if str(value).lower() == "on":
            return self.default_count
        try:
            count = int(value)
        except ValueError:
            self.fail(f"{value!r} is neither a count nor 'on' or 'off'", param, ctx)
        if count != 0 and count < self.minimum:
            self.fail(f"the count must be at least {self.minimum}", param, ctx)
        return count


SAMPLES = _SamplesParamType()
PERMUTATIONS = _CountParamType(DEFAULT_PERMUTATIONS)
SUBSAMPLE_CAP = _CountParamType(DEFAULT_SUBSAMPLE_CAP, minimum=MIN_HSIC_SAMPLES)
SEED = click.IntRange(0, 2**64 - 1)


class _ConfigOption(click.Option):
    """An option that defaults to the benchmark config in $XDG_CONFIG_HOME."""

    def get_default(self, ctx: click.Context, call: bool = True) -> Optional[Path]:
        if not call:
            return None

        path = xdg.xdg_config_home() / "lvorder" / CONFIG_FILE
        return path if path.is_file() else None


class RunConfig(NamedTuple):
    """Settings of a benchmark run."""

    alpha: float = DEFAULT_ALPHA
    seed: int = 0
    trials: int = DEFAULT_TRIALS
    samples: Tuple[int, ...] = DEFAULT_SAMPLES
    spec: str = "paper-benchmark"
    permutations: int = 0
    subsample_cap: Optional[int] = None
    out: Optional[str] = None

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        """Convert a JSON dictionary to a RunConfig."""
        unknown = set(data) - set(cls._fields)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        config = cls()._replace(**data)
        return config._replace(samples=tuple(config.samples))

    def merged(self, **overrides) -> "RunConfig":
        """Replace the fields whose override is not None."""
        return self._replace(
            **{key: value for key, value in overrides.items() if value is not None}
        )

    def validate(self):
        """
        Check the settings.

        :raises ValueError: if any setting is out of range
        """
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.trials < 1:
            raise ValueError(f"trials must be at least 1, got {self.trials}")
        if not self.samples:
            raise ValueError("at least one sample size is required")
        for n in self.samples:
            if n < MIN_HSIC_SAMPLES:
                raise ValueError(f"n below minimum {MIN_HSIC_SAMPLES}: {n}")
        self.hsic_options().validate()

    def hsic_options(self) -> HsicOptions:
        """Get the HSIC settings of the run."""
        return HsicOptions(
            permutations=self.permutations or None,
            subsample_cap=self.subsample_cap or None,
            seed=self.seed,
        )


def load_spec(name: str) -> ModelSpec:
    """
    Load a built-in model by name or a model spec JSON document by path.

    :raises ValueError: if the document is malformed
    """
    if name in BUILTIN_SPECS:
        return BUILTIN_SPECS[name]()
    try:
        data = orjson.loads(Path(name).read_bytes())
    except orjson.JSONDecodeError as ex:
        raise ValueError(f"malformed spec {name}: {ex}") from ex
    if not isinstance(data, dict):
        raise ValueError(f"malformed spec {name}: expected a JSON object")
    return ModelSpec.from_json(data)


def read_csv(path: Path) -> DataMatrix:
    """
    Read a samples x variables CSV file with a header row.

    :raises ValueError: naming the cell or column that cannot be used
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if frame.shape[1] < 2:
        raise ValueError(f"{path}: at least 2 columns are required")
    if frame.shape[0] < MIN_HSIC_SAMPLES:
        raise ValueError(
            f"{path}: at least {MIN_HSIC_SAMPLES} rows are required, "
            f"got {frame.shape[0]}"
        )
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = ~np.isfinite(numeric.to_numpy(dtype=float))
    if bad.any():
        row, column = (int(i) for i in np.argwhere(bad)[0])
        raise ValueError(
            f"{path}: row {row + 1}, column {frame.columns[column]!r}: "
            f"{frame.iat[row, column]!r} is not a number"
        )
    for column in numeric.columns:
        if numeric[column].nunique() < 2:
            raise ValueError(f"{path}: column {column!r} is constant")
    return DataMatrix.from_frame(numeric)


def _truth_path(out: Path) -> Path:
    return out.with_name(out.stem + ".truth.json")


@click.group()
def lvorder():
    """Estimate causal orders robust against latent confounders."""


@lvorder.command()
@_cli_main
@click.option(
    "--spec",
    "spec_name",
    default="paper-benchmark",
    show_default=True,
    help=f"A model spec JSON file or one of: {', '.join(BUILTIN_SPECS)}.",
)
@click.option("-n", "n", type=int, default=1000, show_default=True, help="Samples.")
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option(
    "--snr", type=float, help="Calibrate the external influences to this ratio."
)
@click.option(
    "-o",
    "--out",
    type=click.Path(dir_okay=False, path_type=Path),
    required=True,
    help="The CSV file to write. Ground truth goes next to it as .truth.json.",
)
@_verbose_option
async def simulate(spec_name: str, n: int, seed: int, snr: Optional[float], out: Path):
    """
    Simulate a dataset.

    Writes one sample per row and one variable per column, with a header row.
    """
    if n < MIN_HSIC_SAMPLES:
        raise click.ClickException(f"n below minimum {MIN_HSIC_SAMPLES}")

    spec = load_spec(spec_name)
    if snr is not None:
        spec = calibrate_snr(spec, snr)

    loop = asyncio.get_running_loop()
    X, truth = await loop.run_in_executor(None, generate, spec, n, seed)

    X.to_frame().to_csv(out, index=False, float_format="%.17g", lineterminator="\n")
    document = {
        "n": n,
        "seed": seed,
        "spec": spec.to_json(),
        "truth": truth.to_json(),
    }
    _truth_path(out).write_bytes(dumps_json(document))
    _LOG.info("wrote %s and %s", out, _truth_path(out))


@lvorder.command("discover")
@_cli_main
@click.argument("data", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--alpha", type=float, default=DEFAULT_ALPHA, show_default=True)
@click.option(
    "--permutation-null",
    "permutations",
    type=PERMUTATIONS,
    default="off",
    show_default=True,
    help="Use a permutation null with this many shuffles.",
)
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option(
    "--subsample-cap",
    type=SUBSAMPLE_CAP,
    default="off",
    show_default=True,
    help=f"Subsample to this many rows for testing, 'on' for {DEFAULT_SUBSAMPLE_CAP}.",
)
@click.option(
    "--baseline",
    is_flag=True,
    help="Order every variable without the stopping rules.",
)
@click.option(
    "--threads", type=int, envvar=THREADS_ENV, help="Worker threads for scoring."
)
@click.option(
    "-o",
    "--out",
    type=click.File("wb"),
    default="-",
    help="Save the ordering into a file.",
)
@_verbose_option
async def discover_command(
    data: Path,
    alpha: float,
    permutations: int,
    seed: int,
    subsample_cap: int,
    baseline: bool,
    threads: Optional[int],
    out: BinaryIO,
):
    """
    Estimate a partial causal order from a CSV file.

    The output lists the head, middle and tail of the order, the estimated
    connection strengths and a per-iteration trace.
    """
    if not 0.0 < alpha < 1.0:
        raise click.BadParameter("alpha must lie in (0, 1)", param_hint="--alpha")
    X = read_csv(data)
    options = HsicOptions(
        permutations=permutations or None,
        subsample_cap=subsample_cap or None,
        seed=seed,
    )

    workers = thread_count(threads)
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    if baseline:
        method = METHOD_BASELINE
        search = functools.partial(
            direct_lingam_baseline, X, options, executor=executor, alpha=alpha
        )
    else:
        method = METHOD_DISCOVER
        search = functools.partial(discover, X, alpha, options, executor=executor)
    try:
        loop = asyncio.get_running_loop()
        result = await loop.run_in_executor(None, search)
    finally:
        if executor is not None:
            executor.shutdown()

    document = {
        "method": method,
        "alpha": alpha,
        "variable_ids": list(X.variable_ids),
        **result.to_json(),
    }
    out.write(dumps_json(document))


@lvorder.command()
@_cli_main
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    cls=_ConfigOption,
    help=f"A RunConfig JSON file, default $XDG_CONFIG_HOME/lvorder/{CONFIG_FILE}.",
)
@click.option(
    "--spec",
    "spec_name",
    help=f"A model spec JSON file or one of: {', '.join(BUILTIN_SPECS)}.",
)
@click.option("--alpha", type=float)
@click.option("--seed", type=SEED)
@click.option("--trials", type=int)
@click.option("--samples", type=SAMPLES, help="e.g. 500,1000,2000")
@click.option(
    "--permutation-null",
    "permutations",
    type=PERMUTATIONS,
    help="Use a permutation null with this many shuffles, or 'off'.",
)
@click.option(
    "--subsample-cap",
    type=SUBSAMPLE_CAP,
    help=f"Subsample to this many rows for testing, 'on' for {DEFAULT_SUBSAMPLE_CAP}.",
)
@click.option("--threads", type=int, envvar=THREADS_ENV, help="Worker threads.")
@click.option(
    "-o",
    "--out",
    type=click.Path(dir_okay=False),
    help="Save the report JSON into a file instead of printing it.",
)
@_verbose_option
async def benchmark(
    config: Optional[Path],
    spec_name: Optional[str],
    alpha: Optional[float],
    seed: Optional[int],
    trials: Optional[int],
    samples: Optional[Tuple[int, ...]],
    permutations: Optional[int],
    subsample_cap: Optional[int],
    threads: Optional[int],
    out: Optional[str],
):
    """
    Compare the hybrid search against the no-stopping baseline on simulated data.

    Prints precision, recall and RMSE tables for every sample size.
    """
    run = RunConfig()
    if config is not None:
        run = RunConfig.from_json(orjson.loads(config.read_bytes()))
    run = run.merged(
        spec=spec_name,
        alpha=alpha,
        seed=seed,
        trials=trials,
        samples=samples,
        permutations=permutations,
        subsample_cap=subsample_cap,
        out=out,
    )
    run.validate()
    spec = load_spec(run.spec)

    report = await async_run_benchmark(
        spec,
        run.samples,
        run.trials,
        run.alpha,
        run.seed,
        run.hsic_options(),
        thread_count(threads),
    )

    document = dumps_json(report.to_json(CONVENTIONS))
    table = render_table(report)
    if run.out is not None:
        Path(run.out).write_bytes(document)
        click.echo(table, nl=False)
    else:
        click.get_binary_stream("stdout").write(document)
        click.echo(table, nl=False, err=True)

    if report.failures == len(report.records):
        raise click.ClickException("every trial failed")
