"""Model files: a small YAML dialect with line-accurate diagnostics.

Layout::

    lambda: 0.2                 # optional, default 0
    system:
      dim: 2
      hamiltonian: [[1, 0], [0, 0], [0, 0], [-1, 0]]   # row-major [re, im] pairs
    reservoirs:
      - beta: 1.0
        channels:
          - coupling: [[0, 0], [1, 0], [1, 0], [0, 0]]
            density: {family: flat-exp, amp: 1.0, scale: 1.0}
    run:                        # optional defaults for the command line
      theta: 0.5

Matrix entries may be ``[re, im]`` pairs or plain reals, either flat
(row-major) or as nested rows. A channel with several field factors lists
``densities:`` instead of ``density:``. Density families: ``flat-exp``
(amp, scale), ``gauss-window`` (amp, center, width), ``tabulated`` (rows of
``[u, J]``). Unknown keys are rejected.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import yaml

from .model import CouplingChannel, ModelSpec, ModelStructureError, ReservoirSpec, SmallSystem, SpectralDensity

RUN_KEYS = {
    "theta": float,
    "alpha_points": int,
    "modes": "intlist",
    "smax": float,
    "t_max": float,
    "t_points": int,
    "threads": int,
    "format": str,
}

DENSITY_FIELDS = {
    "flat-exp": ("amp", "scale"),
    "gauss-window": ("amp", "center", "width"),
    "tabulated": ("rows",),
}


class ModelFileError(ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.message, self.line, self.field = message, line, field
        loc = f"line {line}" if line is not None else "?"
        super().__init__(f"{loc}: {field or '<root>'}: {message}")


def _line(node) -> int:
    return node.start_mark.line + 1


def _mapping(node, path, required=(), optional=()):
    if not isinstance(node, yaml.MappingNode):
        raise ModelFileError("expected a mapping", _line(node), path)
    out = {}
    allowed = set(required) | set(optional)
    for k, v in node.value:
        key = k.value
        if key not in allowed:
            raise ModelFileError(f"unknown field {key!r}", _line(k), f"{path}.{key}" if path else key)
        if key in out:
            raise ModelFileError("duplicate field", _line(k), f"{path}.{key}" if path else key)
        out[key] = v
    for key in required:
        if key not in out:
            raise ModelFileError(f"missing field {key!r}", _line(node), path)
    return out


def _seq(node, path):
    if not isinstance(node, yaml.SequenceNode):
        raise ModelFileError("expected a list", _line(node), path)
    return node.value


def _number(node, path) -> float:
    if not isinstance(node, yaml.ScalarNode):
        raise ModelFileError("expected a number", _line(node), path)
    try:
        x = float(node.value)
    except ValueError:
        raise ModelFileError(f"not a number: {node.value!r}", _line(node), path) from None
    if not math.isfinite(x):
        raise ModelFileError("number must be finite", _line(node), path)
    return x


def _integer(node, path) -> int:
    x = _number(node, path)
    if x != int(x):
        raise ModelFileError("expected an integer", _line(node), path)
    return int(x)


def _complex(node, path) -> complex:
    if isinstance(node, yaml.SequenceNode):
        parts = node.value
        if len(parts) != 2:
            raise ModelFileError("complex entries are [re, im] pairs", _line(node), path)
        return complex(_number(parts[0], path), _number(parts[1], path))
    return complex(_number(node, path), 0.0)


def _matrix(node, dim, path) -> np.ndarray:
    items = _seq(node, path)
    one_by_one_row = dim == 1 and isinstance(items[0], yaml.SequenceNode) and len(items[0].value) == 1 if items else False
    if len(items) == dim * dim and not one_by_one_row:
        flat = items
    elif len(items) == dim and all(isinstance(r, yaml.SequenceNode) and len(r.value) == dim for r in items):
        flat = [e for r in items for e in r.value]
    else:
        flat = items
    if len(flat) != dim * dim:
        raise ModelFileError(f"expected {dim * dim} entries for a {dim}x{dim} matrix, got {len(flat)}", _line(node), path)
    vals = [_complex(e, f"{path}[{i}]") for i, e in enumerate(flat)]
    return np.array(vals, dtype=complex).reshape(dim, dim)


def _density(node, path) -> SpectralDensity:
    m = _mapping(node, path, ("family",), {"amp", "scale", "center", "width", "rows"})
    fam_node = m["family"]
    fam = fam_node.value if isinstance(fam_node, yaml.ScalarNode) else None
    if fam not in DENSITY_FIELDS:
        raise ModelFileError(f"unknown density family {fam!r}; expected one of {sorted(DENSITY_FIELDS)}", _line(fam_node), f"{path}.family")
    need = DENSITY_FIELDS[fam]
    for key, v in m.items():
        if key != "family" and key not in need:
            raise ModelFileError(f"field {key!r} does not apply to {fam}", _line(v), f"{path}.{key}")
    for key in need:
        if key not in m:
            raise ModelFileError(f"missing field {key!r} for {fam}", _line(node), path)
    try:
        if fam == "tabulated":
            rows = []
            for i, r in enumerate(_seq(m["rows"], f"{path}.rows")):
                pair = _seq(r, f"{path}.rows[{i}]")
                if len(pair) != 2:
                    raise ModelFileError("rows are [u, J] pairs", _line(r), f"{path}.rows[{i}]")
                rows.append((_number(pair[0], f"{path}.rows[{i}]"), _number(pair[1], f"{path}.rows[{i}]")))
            u, J = zip(*rows) if rows else ((), ())
            return SpectralDensity.tabulated(u, J)
        args = {k: _number(m[k], f"{path}.{k}") for k in need}
        if fam == "flat-exp":
            return SpectralDensity.flat_exp(args["amp"], args["scale"])
        return SpectralDensity.gauss_window(args["amp"], args["center"], args["width"])
    except ModelStructureError as exc:
        raise ModelFileError(str(exc), _line(node), path) from None


def parse_model(text: str, source: str = "<string>") -> tuple[ModelSpec, dict]:
    """Parse model-file text; returns the model and the optional ``run`` defaults."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ModelFileError(f"malformed YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None) from None
    if root is None:
        raise ModelFileError("empty model file", 1)
    top = _mapping(root, "", ("system", "reservoirs"), ("lambda", "run"))
    lam = _number(top["lambda"], "lambda") if "lambda" in top else 0.0

    sysm = _mapping(top["system"], "system", ("dim", "hamiltonian"))
    dim = _integer(sysm["dim"], "system.dim")
    if dim < 1:
        raise ModelFileError("dim must be positive", _line(sysm["dim"]), "system.dim")
    H = _matrix(sysm["hamiltonian"], dim, "system.hamiltonian")
    try:
        system = SmallSystem(H)
    except ModelStructureError as exc:
        raise ModelFileError(str(exc), _line(sysm["hamiltonian"]), "system.hamiltonian") from None

    reservoirs = []
    res_nodes = _seq(top["reservoirs"], "reservoirs")
    if not res_nodes:
        raise ModelFileError("at least one reservoir is required", _line(top["reservoirs"]), "reservoirs")
    for j, rn in enumerate(res_nodes):
        p = f"reservoirs[{j}]"
        rm = _mapping(rn, p, ("beta", "channels"))
        beta = _number(rm["beta"], f"{p}.beta")
        if beta <= 0:
            raise ModelFileError("beta must be positive", _line(rm["beta"]), f"{p}.beta")
        channels = []
        ch_nodes = _seq(rm["channels"], f"{p}.channels")
        if not ch_nodes:
            raise ModelFileError("at least one channel is required", _line(rm["channels"]), f"{p}.channels")
        for k, cn in enumerate(ch_nodes):
            cp = f"{p}.channels[{k}]"
            cm = _mapping(cn, cp, ("coupling",), ("density", "densities"))
            if ("density" in cm) == ("densities" in cm):
                raise ModelFileError("give exactly one of 'density' or 'densities'", _line(cn), cp)
            if "density" in cm:
                dens = [_density(cm["density"], f"{cp}.density")]
            else:
                dens = [_density(d, f"{cp}.densities[{i}]") for i, d in enumerate(_seq(cm["densities"], f"{cp}.densities"))]
                if not dens:
                    raise ModelFileError("densities list is empty", _line(cm["densities"]), f"{cp}.densities")
            Q = _matrix(cm["coupling"], dim, f"{cp}.coupling")
            try:
                channels.append(CouplingChannel(Q, dens))
            except ModelStructureError as exc:
                raise ModelFileError(str(exc), _line(cm["coupling"]), f"{cp}.coupling") from None
        reservoirs.append(ReservoirSpec(beta, channels))

    run = {}
    if "run" in top:
        rmap = _mapping(top["run"], "run", (), RUN_KEYS)
        for key, v in rmap.items():
            if RUN_KEYS[key] == "intlist":
                items = v.value if isinstance(v, yaml.SequenceNode) else [v]
                run[key] = [_integer(x, f"run.{key}") for x in items]
            elif RUN_KEYS[key] is str:
                if not isinstance(v, yaml.ScalarNode):
                    raise ModelFileError("expected a string", _line(v), f"run.{key}")
                run[key] = v.value
            elif RUN_KEYS[key] is int:
                run[key] = _integer(v, f"run.{key}")
            else:
                run[key] = _number(v, f"run.{key}")
    return ModelSpec(system, reservoirs, lam), run


def load_model(path: str | Path) -> tuple[ModelSpec, dict]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFileError(f"cannot read {path}: {exc.strerror}") from None
    return parse_model(text, str(path))


def _pairs(M: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(M).ravel()]


def dump_model(model: ModelSpec, run: dict | None = None) -> str:
    """Serialise a model (with named or tabulated densities) back to YAML."""
    data = {
        "lambda": model.lam,
        "system": {"dim": model.dim, "hamiltonian": _pairs(model.system.hamiltonian)},
        "reservoirs": [
            {
                "beta": r.beta,
                "channels": [
                    {"coupling": _pairs(ch.coupling_op), "density": ch.density.to_dict()}
                    if ch.order == 1
                    else {"coupling": _pairs(ch.coupling_op), "densities": [d.to_dict() for d in ch.densities]}
                    for ch in r.channels
                ],
            }
            for r in model.reservoirs
        ],
    }
    if run:
        data["run"] = dict(run)
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)
