"""Continuum layer: invariants of the deformation gradient with exact first and
second F-derivatives, the strain-energy ansatz over the polyconvex inputs
(K1, K2, K3), and the classical benchmark material models.

Plane-strain convention: 2x2 deformation gradients are accepted everywhere and
expanded internally to 3x3 with F33 = 1; stress and tangent are restricted back
to the in-plane components when the input was 2x2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import numpy.typing as npt
import sympy as sp

from .errors import ConfigurationError, EvaluationError, InadmissibleDeformationError

Array = npt.NDArray[np.float64]

_EYE = np.eye(3)
_DELTA4 = np.einsum("ik,jl->ijkl", _EYE, _EYE)  # d F_ij / d F_kl

SQRT3 = math.sqrt(3.0)


def _embed(F) -> tuple[Array, bool]:
    F = np.asarray(F, dtype=np.float64)
    if F.shape == (2, 2):
        F3 = np.eye(3)
        F3[:2, :2] = F
        return F3, True
    if F.shape == (3, 3):
        return F, False
    raise ConfigurationError(f"deformation gradient must be 2x2 or 3x3, got {F.shape}")


@dataclass(frozen=True)
class DeformationState:
    """Invariants and ansatz inputs of one deformation gradient, with their
    first and second derivatives with respect to F."""

    F: Array
    C: Array
    I1: float
    I2: float
    I3: float
    J: float
    I1_tilde: float
    I2_star: float
    K: Array  # (3,)
    dK_dF: Array  # (3, 3, 3): dK_m / dF_ij
    d2K_dFdF: Array  # (3, 3, 3, 3, 3): d2K_m / dF_ij dF_kl
    dI: dict  # base-invariant first derivatives, keys I1/I2/J -> (3,3)
    d2I: dict  # base-invariant second derivatives, keys I1/I2/J -> (3,3,3,3)


def _chain(first: dict, second: dict, dI: dict, d2I: dict) -> tuple[Array, Array]:
    """First/second F-derivatives of a scalar given its partials with respect
    to the base invariants. ``second`` keys are unordered pairs."""
    d = np.zeros((3, 3))
    for a, fa in first.items():
        d += fa * dI[a]
    d2 = np.zeros((3, 3, 3, 3))
    for a, fa in first.items():
        d2 += fa * d2I[a]
    for (a, b), fab in second.items():
        if a == b:
            d2 += fab * np.einsum("ij,kl->ijkl", dI[a], dI[a])
        else:
            cross = np.einsum("ij,kl->ijkl", dI[a], dI[b])
            d2 += fab * (cross + cross.transpose(2, 3, 0, 1))
    return d, d2


def compute_state(F) -> DeformationState:
    """Full invariant/derivative bundle for one deformation gradient."""
    F3, _ = _embed(F)
    J = float(np.linalg.det(F3))
    if J <= 0.0:
        raise InadmissibleDeformationError(f"det(F) = {J} <= 0")
    C = F3.T @ F3
    I1 = float(np.trace(C))
    I2 = 0.5 * (I1 * I1 - float(np.trace(C @ C)))
    I3 = J * J
    B = F3 @ F3.T
    FinvT = np.linalg.inv(F3).T

    dI = {
        "I1": 2.0 * F3,
        "I2": 2.0 * (I1 * F3 - F3 @ C),
        "J": J * FinvT,
    }
    d2I2 = (
        4.0 * np.einsum("kl,ij->ijkl", F3, F3)
        + 2.0 * I1 * _DELTA4
        - 2.0
        * (
            np.einsum("ik,lj->ijkl", _EYE, C)
            + np.einsum("il,kj->ijkl", F3, F3)
            + np.einsum("ik,jl->ijkl", B, _EYE)
        )
    )
    d2J = J * (
        np.einsum("ij,kl->ijkl", FinvT, FinvT) - np.einsum("il,kj->ijkl", FinvT, FinvT)
    )
    d2I = {"I1": 2.0 * _DELTA4, "I2": d2I2, "J": d2J}

    I1_tilde = I1 * J ** (-2.0 / 3.0)
    I2_tilde = I2 * J ** (-4.0 / 3.0)
    I2_star = I2_tilde**1.5  # equals I2^{3/2} / J^2

    # K1 = I1 J^{-2/3} - 3
    dK1, d2K1 = _chain(
        {"I1": J ** (-2.0 / 3.0), "J": -(2.0 / 3.0) * I1 * J ** (-5.0 / 3.0)},
        {
            ("I1", "J"): -(2.0 / 3.0) * J ** (-5.0 / 3.0),
            ("J", "J"): (10.0 / 9.0) * I1 * J ** (-8.0 / 3.0),
        },
        dI,
        d2I,
    )
    # K2 = I2^{3/2} J^{-2} - 3 sqrt(3)
    sI2 = math.sqrt(I2)
    dK2, d2K2 = _chain(
        {"I2": 1.5 * sI2 / J**2, "J": -2.0 * I2 * sI2 / J**3},
        {
            ("I2", "I2"): 0.75 / (sI2 * J**2),
            ("I2", "J"): -3.0 * sI2 / J**3,
            ("J", "J"): 6.0 * I2 * sI2 / J**4,
        },
        dI,
        d2I,
    )
    # K3 = (J - 1)^2
    dK3, d2K3 = _chain({"J": 2.0 * (J - 1.0)}, {("J", "J"): 2.0}, dI, d2I)

    K = np.array([I1_tilde - 3.0, I2_star - 3.0 * SQRT3, (J - 1.0) ** 2])
    return DeformationState(
        F=F3,
        C=C,
        I1=I1,
        I2=I2,
        I3=I3,
        J=J,
        I1_tilde=I1_tilde,
        I2_star=I2_star,
        K=K,
        dK_dF=np.stack([dK1, dK2, dK3]),
        d2K_dFdF=np.stack([d2K1, d2K2, d2K3]),
        dI=dI,
        d2I=d2I,
    )


class MaterialModel:
    """Common interface: scalar energy W(F), stress P = dW/dF, and tangent
    modulus dP/dF.  2x2 inputs yield in-plane 2x2 / 2x2x2x2 outputs."""

    kind = "?"

    def energy(self, F) -> float:
        raise NotImplementedError

    def stress(self, F) -> Array:
        raise NotImplementedError

    def tangent(self, F) -> Array:
        raise NotImplementedError

    @staticmethod
    def _restrict(T: Array, in_plane: bool) -> Array:
        if not in_plane:
            return T
        if T.ndim == 2:
            return T[:2, :2]
        return T[:2, :2, :2, :2]


class InvariantEnergyModel(MaterialModel):
    """Material defined by a closed-form W(I1~, I2~, J).

    Subclasses provide a sympy expression; first and second partials with
    respect to the principal invariants (I1, I2, J) are generated symbolically
    once per class and chained to F through the shared invariant derivatives.
    """

    _i1t, _i2t, _J = sp.symbols("i1t i2t J", positive=True)

    @classmethod
    def expression(cls):
        raise NotImplementedError

    @classmethod
    def _lambdas(cls):
        if "_cached_lambdas" in cls.__dict__:
            return cls._cached_lambdas
        I1, I2, J = sp.symbols("I1 I2 J", positive=True)
        w = cls.expression().subs(
            {cls._i1t: I1 * J ** sp.Rational(-2, 3), cls._i2t: I2 * J ** sp.Rational(-4, 3)},
            simultaneous=True,
        )
        syms = (I1, I2, J)
        names = ("I1", "I2", "J")
        first = {n: sp.lambdify(syms, sp.diff(w, s), "numpy") for n, s in zip(names, syms)}
        second = {}
        for a in range(3):
            for b in range(a, 3):
                second[(names[a], names[b])] = sp.lambdify(
                    syms, sp.diff(w, syms[a], syms[b]), "numpy"
                )
        cls._cached_lambdas = (sp.lambdify(syms, w, "numpy"), first, second)
        return cls._cached_lambdas

    def _check(self, state: DeformationState):
        pass

    def energy(self, F) -> float:
        state = compute_state(F)
        self._check(state)
        w, _, _ = self._lambdas()
        return float(w(state.I1, state.I2, state.J))

    def stress(self, F) -> Array:
        _, in_plane = _embed(F)
        state = compute_state(F)
        self._check(state)
        _, first, _ = self._lambdas()
        args = (state.I1, state.I2, state.J)
        P = np.zeros((3, 3))
        for name, fn in first.items():
            P += float(fn(*args)) * state.dI[name]
        return self._restrict(P, in_plane)

    def tangent(self, F) -> Array:
        _, in_plane = _embed(F)
        state = compute_state(F)
        self._check(state)
        _, first, second = self._lambdas()
        args = (state.I1, state.I2, state.J)
        d, d2 = _chain(
            {n: float(fn(*args)) for n, fn in first.items()},
            {k: float(fn(*args)) for k, fn in second.items()},
            state.dI,
            state.d2I,
        )
        return self._restrict(d2, in_plane)


class NeoHookean(InvariantEnergyModel):
    kind = "NH"

    @classmethod
    def expression(cls):
        return sp.Rational(1, 2) * (cls._i1t - 3) + sp.Rational(3, 2) * (cls._J - 1) ** 2


class Isihara(InvariantEnergyModel):
    kind = "IH"

    @classmethod
    def expression(cls):
        i1, i2, J = cls._i1t, cls._i2t, cls._J
        return (
            sp.Rational(1, 2) * (i1 - 3)
            + (i2 - 3)
            + (i1 - 3) ** 2
            + sp.Rational(3, 2) * (J - 1) ** 2
        )


class HainesWilson(InvariantEnergyModel):
    kind = "HW"

    @classmethod
    def expression(cls):
        i1, i2, J = cls._i1t, cls._i2t, cls._J
        return (
            sp.Rational(1, 2) * (i1 - 3)
            + (i2 - 3)
            + sp.Float(0.7) * (i1 - 3) * (i2 - 3)
            + sp.Float(0.2) * (i1 - 3) ** 3
            + sp.Rational(3, 2) * (J - 1) ** 2
        )


class GentThomas(InvariantEnergyModel):
    kind = "GT"

    @classmethod
    def expression(cls):
        i1, i2, J = cls._i1t, cls._i2t, cls._J
        return (
            sp.Rational(1, 2) * (i1 - 3) + sp.log(i2 / 3) + sp.Rational(3, 2) * (J - 1) ** 2
        )


class ArrudaBoyce(InvariantEnergyModel):
    """Eight-chain model with the Pade approximant of the inverse Langevin
    function; the energy offset is computed so W(I) = 0 holds exactly for the
    approximated form."""

    kind = "AB"
    n_chain = 28.0

    @classmethod
    def expression(cls):
        N = sp.Float(cls.n_chain)
        lam = sp.sqrt(cls._i1t / 3)
        y = lam / sp.sqrt(N)
        beta = y * (3 - y**2) / (1 - y**2)  # inverse Langevin, Pade [3/2]
        chain = sp.Float(2.5) * sp.sqrt(N) * (beta * lam - sp.sqrt(N) * sp.log(sp.sinh(beta) / beta))
        return chain - cls._offset() + sp.Rational(3, 2) * (cls._J - 1) ** 2

    @classmethod
    def _offset(cls):
        if "_cached_offset" not in cls.__dict__:
            N = cls.n_chain
            y = 1.0 / math.sqrt(N)
            beta = y * (3 - y * y) / (1 - y * y)
            cls._cached_offset = sp.Float(
                2.5 * math.sqrt(N) * (beta - math.sqrt(N) * math.log(math.sinh(beta) / beta)),
                17,
            )
        return cls._cached_offset

    @property
    def c_ab(self) -> float:
        return float(self._offset())

    def _check(self, state: DeformationState):
        y = math.sqrt(state.I1_tilde / 3.0) / math.sqrt(self.n_chain)
        if abs(y) >= 1.0:
            raise EvaluationError(
                f"chain stretch saturated: |lambda/sqrt(N)| = {abs(y):.4f} >= 1"
            )


class Ogden(MaterialModel):
    """Principal-stretch model; stress and tangent by central finite
    differences of the energy (ground-truth data generation only)."""

    kind = "OG"
    mu = 1.3
    eta = 1.3

    def energy(self, F) -> float:
        state = compute_state(F)
        lam2 = np.linalg.eigvalsh(state.C)
        lam2 = np.maximum(lam2, 1e-300)
        lam_t = state.J ** (-1.0 / 3.0) * np.sqrt(lam2)
        return float(
            self.mu / self.eta * (np.sum(lam_t**self.eta) - 3.0)
            + 1.5 * (state.J - 1.0) ** 2
        )

    def _fd_step(self, F3: Array) -> float:
        return 1e-6 * float(np.linalg.norm(F3))

    def stress(self, F) -> Array:
        F3, in_plane = _embed(F)
        compute_state(F3)  # admissibility check
        h = self._fd_step(F3)
        P = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                Fp, Fm = F3.copy(), F3.copy()
                Fp[i, j] += h
                Fm[i, j] -= h
                P[i, j] = (self.energy(Fp) - self.energy(Fm)) / (2 * h)
        return self._restrict(P, in_plane)

    def tangent(self, F) -> Array:
        F3, in_plane = _embed(F)
        compute_state(F3)
        h = 10.0 * self._fd_step(F3)  # larger step: second differences
        T = np.zeros((3, 3, 3, 3))
        for k in range(3):
            for l in range(3):
                Fp, Fm = F3.copy(), F3.copy()
                Fp[k, l] += h
                Fm[k, l] -= h
                T[:, :, k, l] = (self.stress(Fp) - self.stress(Fm)) / (2 * h)
        return self._restrict(T, in_plane)


class KEnergyModel(MaterialModel):
    """Material whose energy is a smooth function of the ansatz inputs K.

    Subclasses supply value/gradient/Hessian with respect to K; stress and
    tangent follow from the chain rule through the invariant derivatives.
    """

    subtract_reference_energy = True

    def k_value_grad_hess(self, K: Array):
        raise NotImplementedError

    def reference_energy(self) -> float:
        """Value at K = 0, subtracted so W(I) = 0."""
        w, _, _ = self.k_value_grad_hess(np.zeros(3))
        return float(w)

    def energy(self, F) -> float:
        state = compute_state(F)
        w, _, _ = self.k_value_grad_hess(state.K)
        if self.subtract_reference_energy:
            w = w - self.reference_energy()
        return float(w)

    def stress(self, F) -> Array:
        _, in_plane = _embed(F)
        state = compute_state(F)
        _, g, _ = self.k_value_grad_hess(state.K)
        P = np.einsum("m,mij->ij", g, state.dK_dF)
        return self._restrict(P, in_plane)

    def tangent(self, F) -> Array:
        _, in_plane = _embed(F)
        state = compute_state(F)
        _, g, H = self.k_value_grad_hess(state.K)
        T = np.einsum("mn,mij,nkl->ijkl", H, state.dK_dF, state.dK_dF)
        T += np.einsum("m,mijkl->ijkl", g, state.d2K_dFdF)
        return self._restrict(T, in_plane)


class NetworkMaterial(KEnergyModel):
    """Strain energy given by a trained spline network plus the constant
    correction that zeroes the energy at the undeformed state."""

    kind = "ICKAN"

    def __init__(self, model):
        self.model = model
        self._w0 = None

    def k_value_grad_hess(self, K):
        return self.model.forward_with_input_derivatives(K)

    def reference_energy(self) -> float:
        # the wrapped network is treated as frozen, so the correction is
        # computed once
        if self._w0 is None:
            self._w0 = super().reference_energy()
        return self._w0


def random_rotation(rng) -> Array:
    """Haar-ish random rotation from the sign-fixed QR of a Gaussian matrix."""
    Q, R = np.linalg.qr(rng.standard_normal((3, 3)))
    Q = Q @ np.diag(np.sign(np.diag(R)))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


def objectivity_check(model: MaterialModel, F, R) -> float:
    """|W(R F) - W(F)| for a proper rotation R."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.allclose(R.T @ R, np.eye(3), atol=1e-10) or np.linalg.det(R) < 0:
        raise ConfigurationError("R must be a proper rotation matrix")
    F3, _ = _embed(F)
    return abs(model.energy(R @ F3) - model.energy(F3))


BENCHMARKS = {
    "NH": NeoHookean,
    "IH": Isihara,
    "HW": HainesWilson,
    "GT": GentThomas,
    "AB": ArrudaBoyce,
    "OG": Ogden,
}


def benchmark_model(kind: str) -> MaterialModel:
    try:
        return BENCHMARKS[kind.upper()]()
    except KeyError:
        raise ConfigurationError(
            f"unknown material kind {kind!r}; choose from {sorted(BENCHMARKS)}"
        ) from None
