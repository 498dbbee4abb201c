"""Target illumination, beamforming, detection, and angle-CRB metrics.

The alternating illumination solver uses two closed-form blocks: a matched
filter for the precoder and per-element phase alignment for the RIS, so the
power trace never decreases. Detection follows an energy test on the matched
filtered echo; the receive steering vector is normalized so the noise-only
statistic is unit-mean exponential and the false-alarm rate exp(-gamma) is
exact.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .arrays import steering_derivative, steering_vector
from .channels import (
    PathGains,
    RisProfile,
    Scene,
    angles_from_geometry,
    build_ris_dyads,
    build_sensing_channels,
    path_gains,
    ris_side_angle,
)
from .errors import DegenerateChannelError

__all__ = [
    "Beamformer",
    "DetectionConfig",
    "IlluminationResult",
    "illumination_power",
    "matched_filter_beamformer",
    "align_ris_phases",
    "maximize_illumination",
    "isotropic_illumination",
    "matched_filter_snr",
    "marcum_q1",
    "detection_probability",
    "glrt_monte_carlo",
    "crb_angle",
    "trajectory_sweep",
]


@dataclasses.dataclass(eq=False)
class Beamformer:
    """Precoder weights under a transmit power budget ||w||^2 <= budget."""

    weights: np.ndarray
    budget: float = 1.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=complex).reshape(-1)
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        norm_sq = float(np.real(np.vdot(self.weights, self.weights)))
        if norm_sq > self.budget + 1e-9 * self.budget:
            raise ValueError(
                f"weights exceed the power budget: ||w||^2 = {norm_sq:.6g} > {self.budget:.6g}"
            )


@dataclasses.dataclass(frozen=True)
class DetectionConfig:
    """False-alarm rate and the matching energy-test threshold."""

    false_alarm_rate: float
    threshold: float = None  # type: ignore[assignment]

    def __post_init__(self):
        if not 0.0 < self.false_alarm_rate < 1.0:
            raise ValueError("false_alarm_rate must lie in (0, 1)")
        gamma = -math.log(self.false_alarm_rate)
        if self.threshold is None:
            object.__setattr__(self, "threshold", gamma)
        elif abs(self.threshold - gamma) > 1e-9 * max(1.0, gamma):
            raise ValueError("threshold must equal -ln(false_alarm_rate)")


def _weights(w) -> np.ndarray:
    if isinstance(w, Beamformer):
        return w.weights
    return np.asarray(w, dtype=complex).reshape(-1)


def illumination_power(h_t: np.ndarray, w) -> float:
    """Power delivered to the target: |h_t^H w|^2."""
    h_t = np.asarray(h_t, dtype=complex).reshape(-1)
    w_vec = _weights(w)
    if h_t.shape != w_vec.shape:
        raise ValueError(f"dimension mismatch: {h_t.shape} vs {w_vec.shape}")
    return float(np.abs(np.vdot(h_t, w_vec)) ** 2)


def matched_filter_beamformer(h: np.ndarray, budget: float = 1.0) -> Beamformer:
    """Precoder sqrt(budget) * h / ||h||, the illumination-power maximizer."""
    h = np.asarray(h, dtype=complex).reshape(-1)
    norm = float(np.linalg.norm(h))
    if norm == 0.0:
        raise DegenerateChannelError("cannot match-filter a zero channel")
    return Beamformer(math.sqrt(budget) * h / norm, budget)


def align_ris_phases(b_target: np.ndarray, b_incident: np.ndarray) -> RisProfile:
    """Per-element phases that make every term of b_target^H diag(phi) b_incident add in phase."""
    b_target = np.asarray(b_target, dtype=complex).reshape(-1)
    b_incident = np.asarray(b_incident, dtype=complex).reshape(-1)
    if b_target.shape != b_incident.shape:
        raise ValueError(
            f"length mismatch: {b_target.shape[0]} vs {b_incident.shape[0]}"
        )
    terms = b_target.conj() * b_incident
    return RisProfile(np.exp(-1j * np.angle(terms)))


@dataclasses.dataclass(eq=False)
class IlluminationResult:
    w: Beamformer
    phi: RisProfile
    power: float
    power_trace: np.ndarray
    converged: bool
    iterations: int


def _phase_align_block(
    c0: complex, coeffs: np.ndarray
) -> np.ndarray:
    """Closed-form phi-block: rotate each RIS term onto the direct term.

    Maximizes |c0 + sum_i conj(phi_i) coeffs_i| over unit-modulus phi; when the
    direct term vanishes the common reference phase is zero.
    """
    ref = np.angle(c0) if abs(c0) > 0 else 0.0
    return np.exp(1j * (np.angle(coeffs) - ref))


def maximize_illumination(
    scene: Scene,
    init_phi: Optional[RisProfile] = None,
    init_w: Optional[Beamformer] = None,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> IlluminationResult:
    """Alternating (precoder, RIS-profile) maximization of illumination power.

    Both block updates are exact maximizers, so the recorded power trace is
    non-decreasing. When ``init_w`` is given the first phi-block runs against
    it before any matched-filter update, which guarantees the result is at
    least as good as the supplied precoder alone.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    angles = angles_from_geometry(scene)
    gains = path_gains(scene)
    n = scene.n_ris
    p_t = scene.transmit_power
    g_t, _ = build_ris_dyads(scene, gains)
    a_t = steering_vector(scene.tx, angles.theta1).entries
    b_target = (
        steering_vector(scene.ris, angles.theta2).entries
        if n
        else np.zeros(0, dtype=complex)
    )

    phi = init_phi.phases.copy() if init_phi is not None else np.ones(n, dtype=complex)
    if phi.size != n:
        raise ValueError(f"init profile length {phi.size} does not match N={n}")

    def phi_block(w_vec: np.ndarray) -> np.ndarray:
        if n == 0:
            return phi
        c0 = np.conj(gains.alpha_t) * np.vdot(a_t, w_vec)
        coeffs = b_target.conj() * (g_t.conj().T @ w_vec)
        return _phase_align_block(c0, coeffs)

    if init_w is not None:
        phi = phi_block(init_w.weights)

    trace = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        h_t, _ = build_sensing_channels(scene, phi, gains)
        norm = float(np.linalg.norm(h_t))
        if norm == 0.0:
            raise DegenerateChannelError(
                "sensing channel is identically zero; nothing to illuminate"
            )
        w_vec = math.sqrt(p_t) * h_t / norm
        power = p_t * norm**2
        trace.append(power)
        if len(trace) > 1:
            gain = (trace[-1] - trace[-2]) / max(trace[-2], 1e-300)
            if gain < tol:
                converged = True
                break
        phi = phi_block(w_vec)

    return IlluminationResult(
        w=Beamformer(w_vec, p_t),
        phi=RisProfile(phi),
        power=trace[-1],
        power_trace=np.asarray(trace),
        converged=converged,
        iterations=it,
    )


def isotropic_illumination(scene: Scene) -> float:
    """Expected illumination power under isotropic transmission.

    Closed form sigma_alpha^2 * L_T + sigma_beta^2 * L_T * N^2 with the scene's
    gain statistics and the phase-aligned RIS profile.
    """
    gains = path_gains(scene)
    l_t = scene.tx.num_elements
    n = scene.n_ris
    sigma_alpha_sq = abs(gains.alpha_t) ** 2
    sigma_beta_sq = abs(gains.beta_t) ** 2
    return sigma_alpha_sq * l_t + sigma_beta_sq * l_t * n**2


def matched_filter_snr(power: float, scene: Scene) -> float:
    """Output SNR of the receive matched filter: L_S * sigma_eta^2 * power / sigma_s^2."""
    if power < 0:
        raise ValueError("power must be nonnegative")
    return scene.rx.num_elements * scene.target_gain_var * power / scene.noise_power_sensing


def marcum_q1(a: float, b: float, tol: float = 1e-10) -> float:
    """First-order Marcum Q function via the modified-Bessel term series.

    Series sum_k (a/b)^k e^{-(a^2+b^2)/2} I_k(ab), accumulated with
    exponentially scaled Bessel terms for stability; the symmetry relation
    Q1(a,b) + Q1(b,a) = 1 + e^{-(a^2+b^2)/2} I_0(ab) handles a > b, where the
    direct series converges slowly.
    """
    a, b = float(a), float(b)
    if not (math.isfinite(a) and math.isfinite(b)) or a < 0 or b < 0:
        raise ValueError("arguments must be finite and nonnegative")
    if b == 0.0:
        return 1.0
    if a > b:
        sym = math.exp(-0.5 * (a - b) ** 2) * float(special.ive(0, a * b))
        return min(1.0, max(0.0, 1.0 + sym - marcum_q1(b, a, tol)))
    # a <= b: each term is (a/b)^k ive(k, ab) e^{-(b-a)^2/2}.
    envelope = math.exp(-0.5 * (b - a) ** 2)
    if a == 0.0:
        return envelope  # reduces to exp(-b^2/2)
    ratio = a / b
    x = a * b
    total = 0.0
    term_scale = 1.0
    k = 0
    while True:
        term = term_scale * float(special.ive(k, x)) * envelope
        total += term
        if term < 0.1 * tol and k > x:
            break
        if k > 100000:
            raise RuntimeError("Marcum series failed to converge")
        term_scale *= ratio
        k += 1
    return min(1.0, max(0.0, total))


def detection_probability(snr: float, cfg: DetectionConfig) -> float:
    """Detection probability Q1(sqrt(2 SNR), sqrt(2 gamma)) for a fixed target gain."""
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    return marcum_q1(math.sqrt(2.0 * snr), math.sqrt(2.0 * cfg.threshold))


@dataclasses.dataclass(frozen=True)
class GlrtResult:
    empirical_pf: float
    empirical_pd: float
    trials: int


def glrt_monte_carlo(
    scene: Scene,
    w,
    phi,
    trials: int,
    cfg: DetectionConfig,
    seed: int = 0,
) -> GlrtResult:
    """Monte Carlo energy test on the simulated echo under H0 and H1.

    Simulates one received snapshot per trial, applies the matched filter to
    the normalized receive steering vector, and thresholds the energy. The
    target gain is complex Gaussian when the scene is fluctuating, otherwise a
    fixed amplitude sqrt(sigma_eta^2) with a random phase.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    angles = angles_from_geometry(scene)
    h_t, _ = build_sensing_channels(scene, phi)
    c = np.vdot(h_t, _weights(w))  # h_t^H w, per-snapshot deterministic part
    a_r = steering_vector(scene.rx, angles.theta1).entries
    a_r_hat = a_r / np.linalg.norm(a_r)
    l_s = scene.rx.num_elements
    sigma_s = math.sqrt(scene.noise_power_sensing)
    sigma_eta = math.sqrt(scene.target_gain_var)

    def noise(n_rows):
        z = rng.standard_normal((n_rows, l_s)) + 1j * rng.standard_normal((n_rows, l_s))
        return (sigma_s / math.sqrt(2.0)) * z

    # H0: noise only.
    stat_h0 = np.abs(noise(trials) @ a_r_hat.conj()) ** 2 / scene.noise_power_sensing
    # H1: target echo plus noise.
    if scene.fluctuating_target:
        eta = (sigma_eta / math.sqrt(2.0)) * (
            rng.standard_normal(trials) + 1j * rng.standard_normal(trials)
        )
    else:
        eta = sigma_eta * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=trials))
    y1 = np.outer(eta * c, a_r) + noise(trials)
    stat_h1 = np.abs(y1 @ a_r_hat.conj()) ** 2 / scene.noise_power_sensing

    gamma = cfg.threshold
    return GlrtResult(
        empirical_pf=float(np.mean(stat_h0 > gamma)),
        empirical_pd=float(np.mean(stat_h1 > gamma)),
        trials=trials,
    )


def crb_angle(snr: float, samples: int, adot_norm_sq: float, l_s: int) -> float:
    """Angle-estimation CRB: L_S / (2 T ||adot||^2) * (1/SNR + 1/SNR^2).

    Zero SNR means no sensing is possible and returns infinity.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not adot_norm_sq > 0:
        raise ValueError("adot_norm_sq must be positive")
    if snr < 0:
        raise ValueError("snr must be nonnegative")
    if snr == 0.0:
        return math.inf
    return l_s / (2.0 * samples * adot_norm_sq) * (1.0 / snr + 1.0 / snr**2)


@dataclasses.dataclass(frozen=True)
class SweepRow:
    waypoint: int
    mode: str
    power: float
    power_db: float
    crb: float


def _power_db(power: float) -> float:
    return 10.0 * math.log10(power) if power > 0 else -math.inf


def _ris_only_design(scene: Scene, gains: PathGains):
    """Closed-form RIS-path-only design: beam at the RIS, aligned phases."""
    angles = angles_from_geometry(scene)
    n = scene.n_ris
    if n == 0:
        return None
    b_in = steering_vector(scene.ris, ris_side_angle(scene, angles)).entries
    b_tgt = steering_vector(scene.ris, angles.theta2).entries
    phi = align_ris_phases(b_tgt, b_in)
    a_om = steering_vector(scene.tx, angles.omega_t).entries
    w = matched_filter_beamformer(a_om, scene.transmit_power)
    power = scene.transmit_power * abs(gains.beta_t) ** 2 * scene.tx.num_elements * n**2
    return w, phi, power


def trajectory_sweep(
    scene_template: Scene,
    waypoints: Sequence,
    modes: Sequence[str] = ("ris_aided", "ris_only", "without_ris"),
    blocked: Optional[Sequence[bool]] = None,
    tol: float = 1e-8,
    max_iter: int = 200,
):
    """Illumination power and CRB along a target trajectory for each mode.

    Modes: joint alternating optimization ("ris_aided"), the RIS-path-only
    closed form ("ris_only"), and the direct-only matched filter
    ("without_ris"). Blocked waypoints zero the direct path where applicable.
    """
    if len(waypoints) == 0:
        raise ValueError("need at least one waypoint")
    known = {"ris_aided", "ris_only", "without_ris"}
    bad = set(modes) - known
    if bad:
        raise ValueError(f"unknown modes: {sorted(bad)}")
    if blocked is None:
        blocked = [False] * len(waypoints)
    if len(blocked) != len(waypoints):
        raise ValueError("blocked mask length must match waypoints")

    rows = []
    for idx, (pos, blk) in enumerate(zip(waypoints, blocked)):
        for mode in modes:
            base = scene_template.replace(
                target_position=np.asarray(pos, dtype=float),
                blocked_direct=bool(blk) or scene_template.blocked_direct,
            )
            angles = angles_from_geometry(base)
            adot = steering_derivative(base.rx, angles.theta1)
            adot_sq = float(np.real(np.vdot(adot, adot)))
            if mode == "without_ris":
                scene = base.replace(ris_gain_override=0.0)
                gains = path_gains(scene)
                if abs(gains.alpha_t) == 0.0:
                    power = 0.0
                else:
                    a_t = steering_vector(scene.tx, angles.theta1).entries
                    w = matched_filter_beamformer(a_t, scene.transmit_power)
                    h_t, _ = build_sensing_channels(scene, RisProfile.ones(scene.n_ris))
                    power = illumination_power(h_t, w)
            elif mode == "ris_only":
                scene = base.replace(blocked_direct=True)
                gains = path_gains(scene)
                design = _ris_only_design(scene, gains)
                power = design[2] if design is not None else 0.0
            else:  # ris_aided
                scene = base
                gains = path_gains(scene)
                starts = []
                if abs(gains.alpha_t) > 0:
                    a_t = steering_vector(scene.tx, angles.theta1).entries
                    starts.append(
                        dict(init_w=matched_filter_beamformer(a_t, scene.transmit_power))
                    )
                ris_start = _ris_only_design(scene, gains)
                if ris_start is not None:
                    starts.append(dict(init_phi=ris_start[1]))
                if not starts:
                    starts.append(dict())
                best = None
                for kw in starts:
                    res = maximize_illumination(scene, tol=tol, max_iter=max_iter, **kw)
                    if best is None or res.power > best.power:
                        best = res
                power = best.power
            snr = matched_filter_snr(power, base)
            crb = crb_angle(snr, base.samples, adot_sq, base.rx.num_elements)
            rows.append(SweepRow(idx, mode, power, _power_db(power), crb))
    return rows
