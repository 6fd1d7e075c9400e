from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class CodingMethod(str, Enum):
    OMP = "omp"
    L1 = "l1"


class DecisionRule(str, Enum):
    PLAIN = "plain"
    SPARSE = "sparse"
    ROBUST = "robust"


class SolverConfig(BaseModel):
    """
    Penalties, limits and tolerances shared by every coefficient solver.

    `sparsity_limit` must not exceed the atom count of the dictionary it is
    used with; that check happens at call time since K is not known here.
    """

    model_config = ConfigDict(frozen=True)

    method: CodingMethod = Field(CodingMethod.OMP, description="Coder for plain/sparse rules")
    sparsity_limit: int = Field(3, ge=1, description="OMP sparsity T")
    residual_tol: Optional[float] = Field(
        None, ge=0.0, description="OMP residual stop ε (applied together with T)"
    )
    relative_residual: bool = Field(
        False, description="Interpret residual_tol as a fraction of ‖y‖"
    )
    l2_penalty: float = Field(0.0, ge=0.0, description="Ridge penalty λ_ridge")
    l1_penalty: float = Field(0.1, gt=0.0, description="ℓ1 penalty λ")
    robust_rho: float = Field(0.1, gt=0.0, description="Robust ℓ1 penalty ρ")
    robust_lambda: float = Field(1.0, gt=0.0, description="Huber knee λ_rob")
    epsilon_delta: float = Field(1e-8, gt=0.0, description="Division guard δ")
    max_iterations: int = Field(20_000, ge=1, description="ℓ1 sweep limit")
    convergence_tol: float = Field(1e-10, gt=0.0, description="KKT tolerance")


class DetectorParams(BaseModel):
    """Noise model, sparsity penalty and calibrated constant of a decision rule."""

    model_config = ConfigDict(frozen=True)

    sigma_n2: float = Field(1.0, gt=0.0, description="Per-entry noise variance σ_n²")
    sigma_e2: float = Field(0.0, ge=0.0, description="Per-entry model-error variance σ_e²")
    gamma: float = Field(0.0, ge=0.0, description="Sparsity penalty γ")
    threshold_C: Optional[float] = Field(None, description="Calibrated constant C")
    rule: DecisionRule = Field(DecisionRule.PLAIN, description="Decision rule")
    solver: SolverConfig = Field(default_factory=SolverConfig)

    def with_threshold(self, threshold_C: float) -> "DetectorParams":
        return self.model_copy(update={"threshold_C": float(threshold_C)})


class SynthConfig(BaseModel):
    """Union-of-subspaces synthetic data: H1 = Dx + e + n, H0 = n."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(24, ge=1, description="Signal dimension")
    K: int = Field(50, ge=1, description="Atom count")
    T: int = Field(3, ge=1, description="Nonzeros per code")
    count: int = Field(1000, ge=1, description="Signals per hypothesis")
    snr_db: float = Field(20.0, description="E‖Dx‖²/σ_n² in dB")
    esr: float = Field(0.0, ge=0.0, description="E‖e‖²/E‖Dx‖²")
    seed: int = Field(0, description="Random seed")

    @model_validator(mode="after")
    def _sparsity_within_atoms(self) -> "SynthConfig":
        if self.T > self.K:
            raise ValueError(f"T={self.T} exceeds K={self.K}")
        return self


class FrameConfig(BaseModel):
    """Framing of an audio stream; defaults are 25 ms frames every 10 ms at 8 kHz."""

    model_config = ConfigDict(frozen=True)

    sample_rate_hz: int = Field(8000, ge=1)
    frame_ms: float = Field(25.0, gt=0.0)
    hop_ms: float = Field(10.0, gt=0.0)

    @property
    def frame_samples(self) -> int:
        return int(round(self.frame_ms * self.sample_rate_hz / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_ms * self.sample_rate_hz / 1000.0))

    @model_validator(mode="after")
    def _valid_lengths(self) -> "FrameConfig":
        if self.frame_samples < 1 or self.hop_samples < 1:
            raise ValueError("frame and hop must each span at least one sample")
        if self.hop_samples > self.frame_samples:
            raise ValueError("hop must not exceed the frame length")
        return self


class FeatureConfig(BaseModel):
    """
    Composition of the per-frame feature stack.

    The vector is [cepstra, log band energies, total log energy, spectral
    entropy]; the defaults give 12 + 10 + 1 + 1 = 24 values.
    """

    model_config = ConfigDict(frozen=True)

    n_mels: int = Field(10, ge=1, description="Triangular Mel filters")
    n_cepstra: int = Field(12, ge=1, description="Cepstral coefficients kept")
    nfft: int = Field(256, ge=2, description="FFT length (frames zero-padded)")
    log_floor: float = Field(1e-10, gt=0.0, description="Floor applied before every log")
    fmin_hz: float = Field(0.0, ge=0.0)
    fmax_hz: Optional[float] = Field(None, gt=0.0, description="Defaults to Nyquist")

    @property
    def dimension(self) -> int:
        return self.n_cepstra + self.n_mels + 2


class RunConfig(BaseModel):
    """Validated flag set of one CLI invocation."""

    model_config = ConfigDict(frozen=True)

    command: str = Field(..., pattern="^(learn|detect|roc|synth|sweep|vad)$")
    seed: int = 0
    inputs: dict[str, str] = Field(default_factory=dict, description="Named input paths")
    output: Optional[str] = Field(None, description="Primary output path")
