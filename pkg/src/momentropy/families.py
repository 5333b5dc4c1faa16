"""Entropy-extremal density families parameterised by a dual variable.

Each family turns a dual variable ``lam`` (living in the range subspace of the
moment operator) into a matrix density on the support grid, via the sampled
adjoint field ``A = L*(lam)``:

    rational               rho = A^{-1}                    (A > 0 nodewise)
    exponential            rho = (1/e) exp(-A)
    weighted_rational      rho = phi A^{-1} phi*           (A > 0 nodewise)
    weighted_exponential   rho = (1/e) sigma^(1/2) exp(-A) sigma^(1/2)
    prior_exponential      rho = (1/e) exp(log sigma - A)

The composite map ``h(lam) = L(rho_lam)`` sends dual variables to moment
matrices; matching a target moment means solving ``h(lam) = R``.  The inverse
families extremise a Burg-type entropy and require ``lam`` to stay strictly
dual-feasible; the exponential families are defined for every ``lam`` and
extremise von Neumann / relative entropies.

Jacobian orientation
--------------------
``jacobian`` returns the conventional orientation of the derivative together
with a sign tag: for the inverse-type families the assembled matrix

    J(i,j) = <E_i, L(P L*(E_j) P*)>,   P = phi A^{-1}   (phi = I when absent)

is positive definite (sign +1), while the actual Frechet derivative of
``h_map`` is its negative; for the exponential-type families the assembled
matrix is the derivative itself and is negative (semi)definite (sign -1).
``flow_jacobian`` always returns the true derivative, which is what the
continuation solver inverts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .calculus import eigh_hermitian, hermitian_part, matrix_log
from .errors import DualStartNotFound, PositivityError
from .operator import MomentOperator, DualVariable, apply_L_adjoint, dual_from_coords, _as_matrix

FAMILY_KINDS = (
    "rational",
    "exponential",
    "weighted_rational",
    "weighted_exponential",
    "prior_exponential",
)

_INVERSE_KINDS = ("rational", "weighted_rational")
_DEFAULT_POS_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class Family:
    """A density family; build instances through the factory functions below.

    ``phi`` (N, m, m) is the spectral-factor weight of the weighted rational
    family; ``sigma`` (N, m, m) the reference density of the weighted families
    (with its square root and logarithm cached as needed).
    """

    kind: str
    phi: np.ndarray | None = None
    sigma: np.ndarray | None = None
    sqrt_sigma: np.ndarray | None = None
    log_sigma: np.ndarray | None = None

    @property
    def is_inverse_kind(self) -> bool:
        """True for the families built on A^{-1}, which need dual feasibility
        and (off discrete grids) a one-dimensional support."""
        return self.kind in _INVERSE_KINDS

    @property
    def jacobian_sign(self) -> int:
        """Definiteness orientation of the assembled Jacobian: +1 or -1."""
        return 1 if self.is_inverse_kind else -1


def rational_family() -> Family:
    return Family("rational")


def exponential_family() -> Family:
    return Family("exponential")


def weighted_rational_family(phi: np.ndarray | None = None, sigma: np.ndarray | None = None) -> Family:
    """Weighted inverse family rho = phi A^{-1} phi*.

    Provide either the factor ``phi`` directly (any invertible square field)
    or a positive reference ``sigma``, in which case phi = sigma^(1/2).
    """
    if phi is None:
        if sigma is None:
            raise ValueError("weighted_rational needs phi or sigma")
        phi = _sqrt_field(np.asarray(sigma, dtype=complex))
        sigma = np.asarray(sigma, dtype=complex)
    else:
        phi = np.asarray(phi, dtype=complex)
        if sigma is None:
            sigma = phi @ np.conj(np.swapaxes(phi, -1, -2))
    _validate_field(phi, "phi")
    return Family("weighted_rational", phi=phi, sigma=sigma)


def weighted_exponential_family(sigma: np.ndarray) -> Family:
    sigma = np.asarray(sigma, dtype=complex)
    _validate_field(sigma, "sigma")
    return Family("weighted_exponential", sigma=sigma, sqrt_sigma=_sqrt_field(sigma))


def prior_exponential_family(sigma: np.ndarray) -> Family:
    sigma = np.asarray(sigma, dtype=complex)
    _validate_field(sigma, "sigma")
    return Family("prior_exponential", sigma=sigma, log_sigma=matrix_log(sigma))


def family_from_name(name: str, sigma: np.ndarray | None = None) -> Family:
    """Build a family from its hyphen- or underscore-spelled name."""
    key = name.replace("-", "_")
    if key == "rational":
        return rational_family()
    if key == "exponential":
        return exponential_family()
    if key == "weighted_rational":
        return weighted_rational_family(sigma=_require_sigma(key, sigma))
    if key == "weighted_exponential":
        return weighted_exponential_family(_require_sigma(key, sigma))
    if key == "prior_exponential":
        return prior_exponential_family(_require_sigma(key, sigma))
    raise ValueError(f"unknown family {name!r}; expected one of {FAMILY_KINDS}")


def family_density(op: MomentOperator, lam, family: Family,
                   pos_floor: float = _DEFAULT_POS_FLOOR) -> np.ndarray:
    """Sampled density rho_lam of the family at the dual point ``lam``.

    For the inverse-type families a near-singular adjoint field (any nodewise
    eigenvalue at or below ``pos_floor`` times the field's mean eigenvalue)
    raises :class:`PositivityError` naming the offending node.
    """
    return _evaluate(op, lam, family, pos_floor).density


def h_map(op: MomentOperator, lam, family: Family,
          pos_floor: float = _DEFAULT_POS_FLOOR) -> np.ndarray:
    """Moment image h(lam) = L(rho_lam), an n_left x n_right matrix."""
    ev = _evaluate(op, lam, family, pos_floor)
    return np.einsum(
        "n,nab,nbc,ncd->ad", op.grid.weights, op.kernels.left, ev.density, op.kernels.right,
        optimize=True,
    )


def jacobian(op: MomentOperator, lam, family: Family,
             pos_floor: float = _DEFAULT_POS_FLOOR) -> tuple[np.ndarray, int]:
    """Assembled d x d Jacobian in the family's conventional orientation.

    Returns ``(J, sign)``; see the module docstring.  The true derivative of
    ``h_map`` in range coordinates is ``-J`` when sign is +1 and ``J`` when
    sign is -1.
    """
    ev = _evaluate(op, lam, family, pos_floor, need_jacobian=True)
    sign = family.jacobian_sign
    return (-ev.flow_jacobian if sign > 0 else ev.flow_jacobian), sign


def flow_jacobian(op: MomentOperator, lam, family: Family,
                  pos_floor: float = _DEFAULT_POS_FLOOR) -> np.ndarray:
    """True Frechet derivative of h_map at ``lam``, in range coordinates."""
    return _evaluate(op, lam, family, pos_floor, need_jacobian=True).flow_jacobian


def default_dual_start(op: MomentOperator, family: Family,
                       pos_floor: float = _DEFAULT_POS_FLOOR) -> DualVariable:
    """Family-appropriate starting point for the continuation flow.

    Exponential-type families start at lam = 0 (feasible by construction).
    Inverse-type families start from the least-squares solution of
    ``L*(lam) = identity`` over the range subspace, which reproduces the
    identity-coordinates start on problems where the adjoint can reach the
    constant identity field; the result is validated for strict dual
    feasibility and :class:`DualStartNotFound` is raised otherwise.
    """
    if not family.is_inverse_kind:
        return dual_from_coords(op, np.zeros(op.d))
    x = op.adjoint_basis
    w = op.grid.weights
    gram = np.real(np.einsum("inab,jnba,n->ij", x, x, w, optimize=True))
    target = np.real(np.einsum("inaa,n->i", x, w, optimize=True))
    try:
        coords = np.linalg.solve(gram, target)
    except np.linalg.LinAlgError:
        coords = np.linalg.lstsq(gram, target, rcond=None)[0]
    start = dual_from_coords(op, coords)
    field = apply_L_adjoint(op, start.matrix)
    eigs, _ = eigh_hermitian(field)
    floor = pos_floor * max(float(np.mean(eigs)), 0.0)
    if not float(np.min(eigs)) > floor:
        raise DualStartNotFound(
            "least-squares identity start is not strictly dual-feasible "
            "(min eigenvalue %.3e); supply an explicit start" % float(np.min(eigs))
        )
    return start


# ---------------------------------------------------------------------------
# shared evaluation machinery (also used by the continuation solver)

class _PointEval(NamedTuple):
    density: np.ndarray          # (N, m, m)
    h_coords: np.ndarray         # (d,) range coordinates of L(density)
    flow_jacobian: np.ndarray | None  # (d, d) true derivative, when requested
    min_eig: float               # min eigenvalue of L*(lam) over the field
    mean_eig: float              # mean eigenvalue of L*(lam) over the field


def _evaluate(op: MomentOperator, lam, family: Family, pos_floor: float,
              need_jacobian: bool = False) -> _PointEval:
    lam_matrix = _as_matrix(op, lam)
    a_field = apply_L_adjoint(op, lam_matrix)
    x = op.adjoint_basis
    w = op.grid.weights

    if family.is_inverse_kind:
        eigs, u = eigh_hermitian(a_field)
        min_eig = float(np.min(eigs))
        mean_eig = float(np.mean(eigs))
        floor = pos_floor * max(mean_eig, 0.0)
        if not min_eig > floor:
            node = int(np.argmin(np.min(eigs, axis=1)))
            raise PositivityError(
                "adjoint field near-singular at node %d (min eig %.3e, floor %.3e)"
                % (node, min_eig, floor),
                min_eig=min_eig, node=node,
            )
        uh = np.conj(np.swapaxes(u, -1, -2))
        inv_field = (u * (1.0 / eigs)[:, None, :]) @ uh
        if family.phi is not None:
            p = family.phi @ inv_field
            density = hermitian_part(p @ np.conj(np.swapaxes(family.phi, -1, -2)))
        else:
            p = inv_field
            density = hermitian_part(inv_field)
        jac = None
        if need_jacobian:
            # true derivative: delta -> -L(P L*(delta) P*)
            t = np.einsum("nab,jnbc,ndc->jnad", p, x, np.conj(p), optimize=True)
            jac = -np.real(np.einsum("inab,jnba,n->ij", x, t, w, optimize=True))
        return _PointEval(density, _range_coords(x, w, density), jac, min_eig, mean_eig)

    # exponential-type families
    exponent = -a_field if family.log_sigma is None else family.log_sigma - a_field
    ew, u = eigh_hermitian(exponent)
    if family.log_sigma is None:
        eigs_a = -ew
    else:
        eigs_a, _ = eigh_hermitian(a_field)
    uh = np.conj(np.swapaxes(u, -1, -2))
    with np.errstate(over="ignore", under="ignore"):
        core = (u * (np.exp(ew) / np.e)[:, None, :]) @ uh
    if family.kind == "weighted_exponential":
        s = family.sqrt_sigma
        density = hermitian_part(s @ core @ s)
    else:
        density = hermitian_part(core)
    jac = None
    if need_jacobian:
        y = np.einsum("nba,inbc,ncd->inad", np.conj(u), x, u, optimize=True)
        factor = _divided_difference_exp(ew)
        if family.kind == "weighted_exponential":
            s = family.sqrt_sigma
            z = np.einsum("nba,inbc,ncd->inad", np.conj(u), s @ x @ s, u, optimize=True)
        else:
            z = y
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            jac = (-1.0 / np.e) * np.real(
                np.einsum("nab,inab,jnab,n->ij", factor, np.conj(z), y, w, optimize=True)
            )
    return _PointEval(
        density, _range_coords(x, w, density), jac,
        float(np.min(eigs_a)), float(np.mean(eigs_a)),
    )


def _range_coords(x: np.ndarray, w: np.ndarray, density: np.ndarray) -> np.ndarray:
    # <E_i, L(rho)> = <L*(E_i), rho> with quadrature weights on the density side
    return np.real(np.einsum("inab,nba,n->i", x, density, w, optimize=True))


def _divided_difference_exp(w: np.ndarray) -> np.ndarray:
    """First divided difference of exp on exponents: (e^a - e^b)/(a - b).

    Evaluated as e^b (e^x - 1)/x with x = a - b, series below 1e-4; stays
    finite for strongly negative exponents and overflows to inf (handled by
    the solver's step rejection) for exponents beyond the double range.
    """
    x = w[..., :, None] - w[..., None, :]
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        direct = np.expm1(x) / x
        series = 1.0 + 0.5 * x + x * x / 6.0
        g = np.where(np.abs(x) < 1e-4, series, direct)
        return np.exp(w[..., None, :]) * g


def _sqrt_field(sigma: np.ndarray) -> np.ndarray:
    w, u = eigh_hermitian(sigma)
    if not float(np.min(w)) > 0.0:
        raise PositivityError(
            "sigma must be positive definite at every node (min eig %.3e)" % float(np.min(w)),
            min_eig=float(np.min(w)),
        )
    return (u * np.sqrt(w)[..., None, :]) @ np.conj(np.swapaxes(u, -1, -2))


def _validate_field(field: np.ndarray, name: str) -> None:
    if field.ndim != 3 or field.shape[-1] != field.shape[-2]:
        raise ValueError(f"{name} must be a sampled field of square matrices (N, m, m)")


def _require_sigma(kind: str, sigma: np.ndarray | None) -> np.ndarray:
    if sigma is None:
        raise ValueError(f"family {kind!r} needs a reference density sigma")
    return np.asarray(sigma, dtype=complex)
