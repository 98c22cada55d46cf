"""Backend selection for the chain driver.

The compiled extension covers the builtin potentials (closed-form energy
in C) for every kernel kind; basin-dependent features (the restricted
walk and the ``basin``/``cold_basin`` observables) are compiled only in
d=1 where classification reduces to an exact arc table.  Everything else
runs on the pure-Python driver, which is always available and produces
bit-identical traces.

The environment variable ``TEMPERGAP_BACKEND`` overrides the choice:
``auto`` (default) prefers compiled when eligible, ``python`` forces the
fallback, ``compiled`` fails loudly when the compiled path cannot serve
the request.
"""

import os

__all__ = ["compiled_available", "backend_name", "select_backend"]

_BASIN_OBS = ("basin", "cold_basin")


def compiled_available() -> bool:
    """True when the compiled extension imports cleanly."""
    try:
        from . import _core  # noqa: F401
    except ImportError:
        return False
    return True


def backend_name() -> str:
    """Name of the default backend under the current environment."""
    mode = os.environ.get("TEMPERGAP_BACKEND", "auto")
    if mode == "python":
        return "python"
    return "compiled" if compiled_available() else "python"


def _compiled_eligible(descriptor, observables) -> tuple:
    """(eligible, reason) for serving this chain from the extension."""
    pot = descriptor.pot
    if getattr(pot, "builtin", None) is None:
        return False, "potential has no compiled evaluator"
    needs_basin = descriptor.kind == "RestrictedMRW" or any(
        name in _BASIN_OBS for name in observables
    )
    if needs_basin and pot.dim != 1:
        return False, "basin classification is compiled only for d=1"
    return True, ""


def select_backend(descriptor, observables) -> str:
    """Resolve the backend for one run_chain call.

    Raises:
        ValueError: ``TEMPERGAP_BACKEND=compiled`` was forced but the
            extension is missing or cannot serve this descriptor.
    """
    mode = os.environ.get("TEMPERGAP_BACKEND", "auto")
    if mode not in ("auto", "python", "compiled"):
        raise ValueError(
            "TEMPERGAP_BACKEND must be auto, python or compiled; got %r" % mode
        )
    if mode == "python":
        return "python"
    have = compiled_available()
    ok, reason = _compiled_eligible(descriptor, observables)
    if mode == "compiled":
        if not have:
            raise ValueError("TEMPERGAP_BACKEND=compiled but the extension is missing")
        if not ok:
            raise ValueError("TEMPERGAP_BACKEND=compiled but %s" % reason)
        return "compiled"
    return "compiled" if (have and ok) else "python"
