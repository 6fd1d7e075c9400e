"""
`ulrs` command line.

Exit codes: 0 success, 1 usage error (bad or missing flags, invalid values),
2 data or numerical failure. Artefacts are written atomically, so a failed
run leaves no partial output behind.
"""

import sys
from enum import Enum
from pathlib import Path
from typing import Annotated, Optional, Sequence

import numpy as np
import structlog
import typer
from pydantic import ValidationError
from structlog import get_logger

try:  # typer >= 0.26 vendors its own click; catch the exceptions it actually raises
    from typer import _click as click
except ImportError:  # older typer depends on the external click package
    import click  # type: ignore[no-redef]

from ulrs.common.errors import UlrsError
from ulrs.common.logging import configure_logging
from ulrs.common.storage import (
    noise_floor_path,
    read_dictionary,
    read_labels,
    read_noise_floor,
    read_vectors,
    write_decisions,
    write_dictionary,
    write_noise_floor,
    write_roc,
    write_sweep,
    write_vectors,
)
from ulrs.detector import (
    calibrate_threshold,
    energy_stat,
    matched_filter_bank_stat,
    sr_decide,
    sr_score,
    theoretical_roc,
    white_noise_sampler,
)
from ulrs.dictionary import kmeans_learn, ksvd_learn, overcomplete_dct
from ulrs.evaluation import (
    detector_roc,
    monte_carlo_roc,
    sparsity_esr_sweep,
    synth_uos,
    truth_statistic_roc,
)
from ulrs.models import (
    CodingMethod,
    DecisionRule,
    DetectorParams,
    FrameConfig,
    RunConfig,
    SolverConfig,
    SynthConfig,
)
from ulrs.types import Dictionary, RocCurve
from ulrs.vad.audio import read_wav, scaled_noise
from ulrs.vad.corpus import white_noise
from ulrs.vad.pipeline import fit_noise_floor, learn_vad_dictionary, vad_calibrate, vad_run, vad_score

logger = get_logger()

app = typer.Typer(
    name="ulrs",
    add_completion=False,
    no_args_is_help=True,
    help="Detection over a union of learned low-rank subspaces.",
)


class Algo(str, Enum):
    KMEANS = "kmeans"
    KSVD = "ksvd"
    DCT = "dct"
    VAD = "vad"


class Statistic(str, Enum):
    SR = "sr"
    ENERGY = "energy"
    BANK = "bank"
    TRUTH = "truth"


# --- Shared options ----------------------------------------------------------

SeedOpt = Annotated[int, typer.Option("--seed", help="Random seed")]
OutOpt = Annotated[Path, typer.Option("--out", help="Output path")]
DictOpt = Annotated[Path, typer.Option("--dict", help="Dictionary file", exists=True, dir_okay=False)]
AtomsOpt = Annotated[int, typer.Option("--atoms", min=1, help="Atom count K")]
SparsityOpt = Annotated[int, typer.Option("--sparsity", min=1, help="Sparsity T")]
ItersOpt = Annotated[int, typer.Option("--iters", min=1, help="Learning iterations")]
WorkersOpt = Annotated[Optional[int], typer.Option("--workers", min=1, help="Worker threads")]
RuleOpt = Annotated[DecisionRule, typer.Option("--rule", help="Decision rule")]
SolverOpt = Annotated[CodingMethod, typer.Option("--solver", help="Coder for plain/sparse rules")]
SigmaN2Opt = Annotated[float, typer.Option("--sigma-n2", help="Per-entry noise variance")]
SigmaE2Opt = Annotated[float, typer.Option("--sigma-e2", help="Per-entry model-error variance")]
GammaOpt = Annotated[float, typer.Option("--gamma", help="Sparsity penalty")]
L1Opt = Annotated[float, typer.Option("--l1-penalty", help="ℓ1 penalty")]
RhoOpt = Annotated[float, typer.Option("--rho", help="Robust ℓ1 penalty")]
RobustLambdaOpt = Annotated[float, typer.Option("--robust-lambda", help="Huber knee")]
ThresholdOpt = Annotated[Optional[float], typer.Option("--threshold", help="Decision constant C")]
AlphaOpt = Annotated[Optional[float], typer.Option("--alpha", help="Calibrate C to this false-alarm rate")]
TrialsOpt = Annotated[int, typer.Option("--trials", min=100, help="Calibration trials")]


def _start(command: str, seed: int, output: Optional[Path], **inputs: Optional[Path]) -> RunConfig:
    run = RunConfig(
        command=command,
        seed=seed,
        inputs={k: str(v) for k, v in inputs.items() if v is not None},
        output=None if output is None else str(output),
    )
    structlog.contextvars.bind_contextvars(ulrs_command=command, ulrs_seed=seed)
    logger.info("command_started", inputs=run.inputs, output=run.output)
    return run


def _params(
    rule: DecisionRule,
    solver: CodingMethod,
    sparsity: int,
    sigma_n2: float,
    sigma_e2: float,
    gamma: float,
    l1_penalty: float,
    rho: float,
    robust_lambda: float,
    threshold: Optional[float] = None,
) -> DetectorParams:
    return DetectorParams(
        sigma_n2=sigma_n2,
        sigma_e2=sigma_e2,
        gamma=gamma,
        threshold_C=threshold,
        rule=rule,
        solver=SolverConfig(
            method=solver,
            sparsity_limit=sparsity,
            l1_penalty=l1_penalty,
            robust_rho=rho,
            robust_lambda=robust_lambda,
        ),
    )


def _need_threshold(threshold: Optional[float], alpha: Optional[float]) -> None:
    if (threshold is None) == (alpha is None):
        raise typer.BadParameter("give exactly one of --threshold and --alpha")
    if alpha is not None and not 0.0 < alpha < 1.0:
        raise typer.BadParameter("--alpha must lie strictly inside (0, 1)")


# --- Commands ----------------------------------------------------------------


@app.command()
def learn(
    out: OutOpt,
    algo: Annotated[Algo, typer.Option("--algo", help="Learning method")] = Algo.KSVD,
    atoms: AtomsOpt = 100,
    sparsity: SparsityOpt = 3,
    iters: ItersOpt = 10,
    seed: SeedOpt = 0,
    input: Annotated[Optional[Path], typer.Option("--input", help="Training vectors CSV (a speech WAV for vad)")] = None,
    n: Annotated[Optional[int], typer.Option("--n", min=1, help="Signal dimension (dct only)")] = None,
    workers: WorkersOpt = None,
) -> None:
    """Learn (or construct) a dictionary and write it to --out."""
    _start("learn", seed, out, input=input)
    if algo is Algo.VAD:
        if input is None:
            raise typer.BadParameter("vad needs --input")
        D, stats, floor = learn_vad_dictionary(read_wav(input)[0], atoms, sparsity, iters, seed, workers=workers)
        write_noise_floor(noise_floor_path(out), floor)
        summary = f"rmse={stats.per_iteration_rmse[-1]:.6g} floor={noise_floor_path(out)}"
    elif algo is Algo.DCT:
        if n is None and input is None:
            raise typer.BadParameter("dct needs --n or --input")
        dimension = n if n is not None else read_vectors(input).shape[1]  # type: ignore[arg-type]
        D = overcomplete_dct(dimension, atoms)
        summary = "parametric"
    else:
        if input is None:
            raise typer.BadParameter(f"{algo.value} needs --input")
        training = read_vectors(input)
        if algo is Algo.KMEANS:
            D, stats = kmeans_learn(training, atoms, iters, seed)
        else:
            D, stats = ksvd_learn(training, atoms, sparsity, iters, seed, workers)
        summary = f"rmse={stats.per_iteration_rmse[-1]:.6g} esr={stats.final_esr:.6g}"

    write_dictionary(out, D)
    logger.info("command_finished", n=D.n, K=D.K)
    typer.echo(f"{algo.value} dictionary n={D.n} K={D.K} {summary} -> {out}")


@app.command()
def detect(
    dict_path: DictOpt,
    input: Annotated[Path, typer.Option("--input", help="Signals CSV", exists=True, dir_okay=False)],
    out: OutOpt,
    rule: RuleOpt = DecisionRule.PLAIN,
    solver: SolverOpt = CodingMethod.OMP,
    sparsity: SparsityOpt = 3,
    sigma_n2: SigmaN2Opt = 1.0,
    sigma_e2: SigmaE2Opt = 0.0,
    gamma: GammaOpt = 0.0,
    l1_penalty: L1Opt = 0.1,
    rho: RhoOpt = 0.1,
    robust_lambda: RobustLambdaOpt = 1.0,
    threshold: ThresholdOpt = None,
    alpha: AlphaOpt = None,
    trials: TrialsOpt = 1000,
    seed: SeedOpt = 0,
    workers: WorkersOpt = None,
) -> None:
    """Decide H0/H1 for every signal of --input."""
    _start("detect", seed, out, dict=dict_path, input=input)
    _need_threshold(threshold, alpha)
    D = read_dictionary(dict_path)
    params = _params(rule, solver, sparsity, sigma_n2, sigma_e2, gamma, l1_penalty, rho, robust_lambda)
    if threshold is None:
        threshold = calibrate_threshold(
            lambda y: sr_score(D, y, params),
            white_noise_sampler(D.n, sigma_n2),
            alpha,  # type: ignore[arg-type]
            trials,
            seed,
            workers,
        )
    params = params.with_threshold(threshold)
    signals = read_vectors(input)
    detections = [sr_decide(y, D, params) for y in signals]
    write_decisions(out, detections)
    flagged = sum(d.decision.flag for d in detections)
    logger.info("command_finished", signals=len(detections), h1=flagged, threshold=threshold)
    typer.echo(f"{flagged}/{len(detections)} signals decided H1 (C={threshold:.6g}) -> {out}")


@app.command()
def roc(
    out: OutOpt,
    statistic: Annotated[Statistic, typer.Option("--statistic", help="Statistic to sweep")] = Statistic.SR,
    dict_path: Annotated[Optional[Path], typer.Option("--dict", help="Dictionary file")] = None,
    h0: Annotated[Optional[Path], typer.Option("--h0", help="H0 signals CSV")] = None,
    h1: Annotated[Optional[Path], typer.Option("--h1", help="H1 signals CSV")] = None,
    n: Annotated[int, typer.Option("--n", min=1, help="Synthetic signal dimension")] = 24,
    atoms: AtomsOpt = 50,
    sparsity: SparsityOpt = 3,
    count: Annotated[int, typer.Option("--count", min=1, help="Synthetic signals per hypothesis")] = 1000,
    snr_db: Annotated[float, typer.Option("--snr-db", help="Synthetic SNR in dB")] = 20.0,
    esr: Annotated[float, typer.Option("--esr", help="Synthetic ESR")] = 0.0,
    theory: Annotated[bool, typer.Option("--theory", help="Write the closed-form curve instead")] = False,
    rule: RuleOpt = DecisionRule.PLAIN,
    solver: SolverOpt = CodingMethod.OMP,
    sigma_n2: SigmaN2Opt = 1.0,
    sigma_e2: SigmaE2Opt = 0.0,
    gamma: GammaOpt = 0.0,
    l1_penalty: L1Opt = 0.1,
    rho: RhoOpt = 0.1,
    robust_lambda: RobustLambdaOpt = 1.0,
    seed: SeedOpt = 0,
    workers: WorkersOpt = None,
) -> None:
    """
    ROC of a statistic on H0/H1 files, on seeded synthetic data, or in closed
    form (--theory).
    """
    _start("roc", seed, out, dict=dict_path, h0=h0, h1=h1)
    params = _params(rule, solver, sparsity, sigma_n2, sigma_e2, gamma, l1_penalty, rho, robust_lambda)

    curve: RocCurve
    if theory:
        grid = np.linspace(0.005, 0.995, 199)
        curve = theoretical_roc(10.0 ** (snr_db / 10.0), esr, grid)
    elif h0 is not None or h1 is not None:
        if h0 is None or h1 is None:
            raise typer.BadParameter("--h0 and --h1 go together")
        if statistic is Statistic.TRUTH:
            raise typer.BadParameter("the truth statistic needs synthetic data")
        h0_set, h1_set = read_vectors(h0), read_vectors(h1)
        curve = _file_roc(statistic, dict_path, params, h0_set, h1_set, workers)
    else:
        data = synth_uos(SynthConfig(n=n, K=atoms, T=sparsity, count=count, snr_db=snr_db, esr=esr, seed=seed))
        if statistic is Statistic.TRUTH:
            curve = truth_statistic_roc(data)
        elif statistic is Statistic.SR:
            curve = detector_roc(data.dictionary, params, data.h0, data.h1, workers)
        else:
            curve = _baseline_roc(statistic, data.dictionary, data.h0, data.h1, workers)

    write_roc(out, curve)
    logger.info("command_finished", points=len(curve), auc=curve.auc())
    typer.echo(f"{len(curve)} operating points, AUC={curve.auc():.6f} -> {out}")


def _baseline_roc(
    statistic: Statistic, D: Optional[Dictionary], h0_set: np.ndarray, h1_set: np.ndarray, workers: Optional[int]
) -> RocCurve:
    if statistic is Statistic.ENERGY:
        return monte_carlo_roc(energy_stat, h0_set, h1_set, workers)
    if D is None:
        raise typer.BadParameter(f"--statistic {statistic.value} needs --dict")
    return monte_carlo_roc(lambda y: matched_filter_bank_stat(D, y), h0_set, h1_set, workers)


def _file_roc(
    statistic: Statistic,
    dict_path: Optional[Path],
    params: DetectorParams,
    h0_set: np.ndarray,
    h1_set: np.ndarray,
    workers: Optional[int],
) -> RocCurve:
    D = read_dictionary(dict_path) if dict_path is not None else None
    if statistic is Statistic.SR:
        if D is None:
            raise typer.BadParameter("--statistic sr needs --dict")
        return detector_roc(D, params, h0_set, h1_set, workers)
    return _baseline_roc(statistic, D, h0_set, h1_set, workers)


@app.command()
def synth(
    out: Annotated[str, typer.Option("--out", help="Output prefix")],
    n: Annotated[int, typer.Option("--n", min=1, help="Signal dimension")] = 24,
    atoms: AtomsOpt = 50,
    sparsity: SparsityOpt = 3,
    count: Annotated[int, typer.Option("--count", min=1, help="Signals per hypothesis")] = 1000,
    snr_db: Annotated[float, typer.Option("--snr-db", help="SNR in dB")] = 20.0,
    esr: Annotated[float, typer.Option("--esr", help="ESR")] = 0.0,
    seed: SeedOpt = 0,
) -> None:
    """Write a synthetic dataset: <out>_dict.txt, _h1.csv, _h0.csv, _codes.csv."""
    _start("synth", seed, Path(out))
    data = synth_uos(SynthConfig(n=n, K=atoms, T=sparsity, count=count, snr_db=snr_db, esr=esr, seed=seed))
    write_dictionary(f"{out}_dict.txt", data.dictionary)
    write_vectors(f"{out}_h1.csv", data.h1)
    write_vectors(f"{out}_h0.csv", data.h0)
    write_vectors(f"{out}_codes.csv", data.codes)
    logger.info("command_finished", snr_db=data.realized_snr_db, esr=data.realized_esr)
    typer.echo(
        f"{count} signals per hypothesis, SNR={data.realized_snr_db:.3f} dB, "
        f"ESR={data.realized_esr:.4g} -> {out}_*"
    )


@app.command()
def sweep(
    input: Annotated[Path, typer.Option("--input", help="Training vectors CSV", exists=True, dir_okay=False)],
    out: OutOpt,
    atoms: AtomsOpt = 100,
    t_min: Annotated[int, typer.Option("--t-min", min=1, help="Smallest coding sparsity")] = 1,
    t_max: Annotated[int, typer.Option("--t-max", min=1, help="Largest coding sparsity")] = 12,
    sparsity: SparsityOpt = 3,
    iters: ItersOpt = 10,
    dict_path: Annotated[Optional[Path], typer.Option("--dict", help="Use this dictionary instead of learning")] = None,
    seed: SeedOpt = 0,
    workers: WorkersOpt = None,
) -> None:
    """ESR of one dictionary coded at every T in [--t-min, --t-max]."""
    _start("sweep", seed, out, input=input, dict=dict_path)
    if t_min > t_max:
        raise typer.BadParameter("--t-min must not exceed --t-max")
    training = read_vectors(input)
    D = read_dictionary(dict_path) if dict_path is not None else None
    K = D.K if D is not None else atoms
    result = sparsity_esr_sweep(
        training, K, range(t_min, t_max + 1), sparsity, iters, seed, D, workers
    )
    write_sweep(out, result)
    logger.info("command_finished", levels=len(result))
    typer.echo(f"ESR {result[0][1]:.6g} (T={result[0][0]}) .. {result[-1][1]:.6g} (T={result[-1][0]}) -> {out}")


@app.command()
def vad(
    input: Annotated[Path, typer.Option("--input", help="16-bit mono 8 kHz WAV", exists=True, dir_okay=False)],
    dict_path: DictOpt,
    out: OutOpt,
    ref: Annotated[Optional[Path], typer.Option("--ref", help="Reference labels, one 0/1 per frame")] = None,
    floor: Annotated[
        Optional[Path],
        typer.Option("--floor", exists=True, dir_okay=False, help="Noise floor file (default: fitted on the input's noise, else stored next to --dict)"),
    ] = None,
    noise: Annotated[Optional[Path], typer.Option("--noise", help="Noise WAV for mixing and calibration")] = None,
    snr_db: Annotated[Optional[float], typer.Option("--snr-db", help="Mix noise into the input at this SNR")] = None,
    rule: RuleOpt = DecisionRule.PLAIN,
    solver: SolverOpt = CodingMethod.OMP,
    sparsity: SparsityOpt = 3,
    sigma_n2: SigmaN2Opt = 1.0,
    sigma_e2: SigmaE2Opt = 0.0,
    gamma: GammaOpt = 0.0,
    l1_penalty: L1Opt = 0.1,
    rho: RhoOpt = 0.1,
    robust_lambda: RobustLambdaOpt = 1.0,
    threshold: ThresholdOpt = None,
    alpha: AlphaOpt = None,
    seed: SeedOpt = 0,
    workers: WorkersOpt = None,
) -> None:
    """Per-frame speech/non-speech decisions for a recording."""
    _start("vad", seed, out, input=input, dict=dict_path, ref=ref, noise=noise, floor=floor)
    _need_threshold(threshold, alpha)
    frame_cfg = FrameConfig()
    D = read_dictionary(dict_path)
    params = _params(rule, solver, sparsity, sigma_n2, sigma_e2, gamma, l1_penalty, rho, robust_lambda)

    samples, _ = read_wav(input)
    noise_samples = read_wav(noise)[0] if noise is not None else None
    if snr_db is not None:
        mixer = noise_samples if noise_samples is not None else white_noise(samples.size, seed)
        # keep the noise exactly as it enters the input
        noise_samples = scaled_noise(samples, mixer, snr_db)
        samples = samples + noise_samples

    stored = noise_floor_path(dict_path)
    if floor is not None:
        noise_floor = read_noise_floor(floor)
    elif noise_samples is not None:
        noise_floor = fit_noise_floor(noise_samples, frame_cfg)
    elif stored.exists():
        noise_floor = read_noise_floor(stored)
    else:
        raise typer.BadParameter(f"no noise floor at {stored}; pass --floor, --noise or --snr-db")
    if threshold is None:
        threshold = vad_calibrate(
            D, params, alpha, frame_cfg, noise=noise_samples, seed=seed, workers=workers, noise_floor=noise_floor  # type: ignore[arg-type]
        )

    detections = vad_run(samples, D, params.with_threshold(threshold), frame_cfg, workers=workers, noise_floor=noise_floor)
    message = f"{sum(d.decision.flag for d in detections)}/{len(detections)} frames speech"
    if ref is not None:
        pd, pf = vad_score(detections, read_labels(ref))
        message += f", pd={pd:.4f} pf={pf:.4f}"
        logger.info("vad_scored", pd=pd, pf=pf)
    write_decisions(out, detections)
    logger.info("command_finished", frames=len(detections), threshold=threshold)
    typer.echo(f"{message} -> {out}")


# --- Entry points ------------------------------------------------------------


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and map its outcome to an exit code."""
    args = list(sys.argv[1:] if argv is None else argv)
    configure_logging()
    command = typer.main.get_command(app)
    try:
        result = command.main(args=args, prog_name="ulrs", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.exceptions.Abort:
        typer.echo("Aborted.", err=True)
        return 1
    except click.exceptions.ClickException as exc:
        exc.show()
        return 1
    except ValidationError as exc:
        typer.echo(f"Error: invalid parameters\n{exc}", err=True)
        return 1
    except UlrsError as exc:
        logger.error("command_failed", error=exc.message, error_type=type(exc).__name__, **exc.details)
        typer.echo(f"Error: {exc}", err=True)
        return 2
    except (OSError, ValueError) as exc:
        logger.error("command_failed", error=str(exc), error_type=type(exc).__name__)
        typer.echo(f"Error: {exc}", err=True)
        return 2
    finally:
        structlog.contextvars.clear_contextvars()
    return result if isinstance(result, int) else 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
