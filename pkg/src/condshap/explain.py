"""End-to-end explanation pipeline: coalition design + sampler + WLS solve.

One :class:`Explainer` holds everything reusable across instances (the
coalition design, the solver factorization, the fitted sampler state, AICc
bandwidth tables), so explaining a batch of predictions costs one v-vector
estimation per instance.  Randomness is derived per (seed, instance,
coalition row), which makes parallel and serial runs identical.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .coalitions import (
    CoalitionMatrix,
    ENUMERATION_CAP,
    Explanation,
    WlsSolver,
    enumerate_coalitions,
    sample_coalitions,
)
from .errors import DiagnosticWarning, EfficiencyViolationError
from .samplers import (
    FittedSampler,
    Predictor,
    SamplerSpec,
    TrainingMatrix,
    aicc_bandwidth,
    call_predictor,
    mean_training_prediction,
)

EFFICIENCY_RTOL = 1e-6

WORKERS_ENV = "CONDSHAP_WORKERS"


def _workers(explicit: int | None) -> int:
    if explicit is not None:
        return max(1, explicit)
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


class Explainer:
    """Explains individual predictions of one fitted model.

    Parameters
    ----------
    train : fitted sampler training data (also the independence pool).
    predictor : deterministic vectorized model, (n, m) -> (n,).
    spec : contribution estimator choice.
    k : per-coalition sample budget.
    seed : master seed; all per-instance randomness derives from it.
    coalition_draws : budget for sampled coalitions when m exceeds the
        enumeration cap.
    """

    def __init__(
        self,
        train: TrainingMatrix,
        predictor: Predictor,
        spec: SamplerSpec,
        k: int = 1000,
        seed: int = 0,
        coalition_matrix: CoalitionMatrix | None = None,
        coalition_draws: int = 2048,
        solve_method: str = "constrained",
        enumeration_cap: int = ENUMERATION_CAP,
    ):
        self.train = train
        self.predictor = predictor
        self.spec = spec
        self.k = int(k)
        self.seed = int(seed)
        m = train.m
        if coalition_matrix is not None:
            cm = coalition_matrix
        elif m <= enumeration_cap:
            cm = enumerate_coalitions(m)
        else:
            warnings.warn(
                f"m={m} exceeds the enumeration cap {enumeration_cap}; "
                f"sampling {coalition_draws} coalitions",
                DiagnosticWarning,
                stacklevel=2,
            )
            cm = sample_coalitions(m, coalition_draws, rng_seed=seed)
        self.cm = cm
        self.solver = WlsSolver(cm, method=solve_method)
        self.sampler = FittedSampler(spec, train)
        self.mean_prediction = mean_training_prediction(train, predictor)
        self._proper_rows = [
            (i, s) for i, s in enumerate(cm.coalitions) if 0 < len(s) < m
        ]

    # -- per-instance bandwidths -------------------------------------------

    def _sigma_for_instance(self, x_star: np.ndarray) -> dict:
        """AICc bandwidth per coalition (exact mode) or per size (approx)."""
        spec = self.spec
        table: dict = {}
        if spec.bandwidth_mode == "fixed" or spec.kind in (
            "independence",
            "gaussian",
            "copula",
        ):
            return table
        needs = [
            s
            for _, s in self._proper_rows
            if spec.kind == "empirical" or len(s) <= spec.d_star
        ]
        if spec.bandwidth_mode == "aicc_exact":
            for s in needs:
                table[s] = self.sampler.bandwidth_for(self.predictor, s, x_star)
        else:
            for size in sorted({len(s) for s in needs}):
                sigma = aicc_bandwidth(
                    self.train,
                    self.predictor,
                    size,
                    x_star,
                    sigma_grid=spec.aicc_grid,
                    n_aicc=spec.n_aicc,
                    phi_form=spec.phi_form,
                )
                for s in needs:
                    if len(s) == size:
                        table[s] = sigma
        return table

    # -- explanation ---------------------------------------------------------

    def contribution_vector(self, x_star: np.ndarray, instance_index: int = 0) -> np.ndarray:
        """Estimated v(S) for every coalition row of the design."""
        x_star = np.asarray(x_star, float).reshape(-1)
        cm = self.cm
        v = np.empty(cm.n_rows)
        sigma_table = self._sigma_for_instance(x_star)
        f_star = float(call_predictor(self.predictor, x_star[None, :])[0])
        for i, s in enumerate(cm.coalitions):
            if len(s) == 0:
                v[i] = self.mean_prediction
            elif len(s) == cm.m:
                v[i] = f_star
            else:
                v[i] = self.sampler.contribution(
                    self.predictor,
                    s,
                    x_star,
                    self.k,
                    rng_seed=[self.seed, instance_index, i],
                    sigma=sigma_table.get(s),
                )
        return v

    def explain_one(self, x_star: np.ndarray, instance_index: int = 0) -> Explanation:
        v = self.contribution_vector(x_star, instance_index)
        expl = self.solver.solve(
            v,
            estimator_id=self.spec.label,
            seed=self.seed,
            sample_budget=self.k,
        )
        gap = expl.efficiency_gap()
        tol = EFFICIENCY_RTOL * max(1.0, abs(expl.prediction))
        if gap > tol:
            raise EfficiencyViolationError(
                f"efficiency violated: |phi0 + sum(phi) - f(x*)| = {gap:.3e} > {tol:.3e}"
            )
        return expl

    def explain(
        self, x: np.ndarray, workers: int | None = None
    ) -> list[Explanation]:
        """Explain each row of x; result order matches the input order."""
        x = np.atleast_2d(np.asarray(x, float))
        n_workers = _workers(workers)
        if n_workers == 1 or len(x) == 1:
            return [self.explain_one(row, i) for i, row in enumerate(x)]
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            return list(pool.map(self.explain_one, x, range(len(x))))
