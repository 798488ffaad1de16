"""scikit-learn style front end for generalised stability analysis."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .assembly import mass_matrix
from .eigensolver import LanczosParams, gst_from_tape
from .models import MODELS, ModelSpec, build_model
from .propagator import propagator_from_tape
from .validation import check_choice, check_int, check_perturbations, check_positive, check_vector

__all__ = ["GSTAnalysis"]


class GSTAnalysis(TransformerMixin, BaseEstimator):
    """Leading singular triplets of a model's linearised propagator.

    Parameters
    ----------
    model : str or ModelSpec, default="burgers"
        Bundled model name or a ready-made :class:`ModelSpec`.
    model_params : dict, optional
        Keyword arguments of the bundled model factory.
    nev : int, default=3
        Number of singular triplets.
    tol : float, default=1e-8
        Lanczos residual tolerance.
    ncv : int, optional
        Lanczos subspace size.
    max_restarts : int, default=200
    random_state : int, default=0
        Seed of the Lanczos start vector.

    Attributes
    ----------
    singular_values_ : ndarray of shape (nev,)
    components_ : ndarray of shape (nev, n_dofs)
        Optimal initial perturbations (right singular vectors), unit ``X_I`` norm.
    final_components_ : ndarray of shape (nev, n_dofs)
        Their normalised images (left singular vectors).
    residuals_ : ndarray of shape (nev,)
    model_ : ModelSpec
    propagator_ : LinearOperator
    n_features_in_ : int

    Examples
    --------
    >>> gst = GSTAnalysis("heat", nev=2).fit()
    >>> gst.singular_values_.shape
    (2,)
    """

    def __init__(self, model="burgers", model_params=None, nev=3, tol=1e-8, ncv=None,
                 max_restarts=200, random_state=0):
        self.model = model
        self.model_params = model_params
        self.nev = nev
        self.tol = tol
        self.ncv = ncv
        self.max_restarts = max_restarts
        self.random_state = random_state

    def _build_model(self):
        if isinstance(self.model, ModelSpec):
            if self.model_params:
                raise ValueError("model_params only applies to bundled model names")
            return self.model
        check_choice(self.model, "model", MODELS)
        return build_model(self.model, **(self.model_params or {}))

    def fit(self, X=None, y=None):
        """Linearise about the trajectory starting from ``X``.

        Parameters
        ----------
        X : array-like of shape (n_dofs,) or (1, n_dofs), optional
            Base initial condition; the model's own by default.
        y : ignored
        """
        nev = check_int(self.nev, "nev", 1)
        tol = check_positive(self.tol, "tol")
        model = self._build_model()
        m0 = None if X is None else check_vector(X, model.dof_count, "X")
        tape = model.build_tape(m0)
        params = LanczosParams(nev=min(nev, model.dof_count), ncv=self.ncv, tol=tol,
                               max_restarts=check_int(self.max_restarts, "max_restarts"),
                               seed=check_int(self.random_state, "random_state"))
        triplets = gst_from_tape(tape, params)
        self.model_ = model
        self.tape_ = tape
        self.propagator_ = propagator_from_tape(tape)
        self.input_norm_ = mass_matrix(model.input_space)
        self.singular_values_ = np.array([t.sigma for t in triplets])
        self.components_ = np.array([t.v for t in triplets])
        self.final_components_ = np.array([t.u for t in triplets])
        self.residuals_ = np.array([t.residual for t in triplets])
        self.n_features_in_ = model.dof_count
        return self

    def transform(self, X):
        """Coordinates of perturbations along the optimal perturbations.

        Returns the ``X_I`` inner products with ``components_``, an array of
        shape (n_samples, nev).
        """
        check_is_fitted(self)
        X = check_perturbations(X, self.n_features_in_)
        return X @ (self.input_norm_ @ self.components_.T)

    def predict(self, X):
        """Propagate perturbations to the final time with the linearised model."""
        check_is_fitted(self)
        X = check_perturbations(X, self.n_features_in_)
        return np.array([self.propagator_.apply(x) for x in X])

    def growth(self, X):
        """Ratio ``||L x||_{X_F} / ||x||_{X_I}`` for each row of ``X``."""
        check_is_fitted(self)
        X = check_perturbations(X, self.n_features_in_)
        X_F = mass_matrix(self.model_.output_space)
        out = self.predict(X)
        num = np.sqrt(np.einsum("ij,ij->i", out, out @ X_F))
        den = np.sqrt(np.einsum("ij,ij->i", X, X @ self.input_norm_))
        return num / den
