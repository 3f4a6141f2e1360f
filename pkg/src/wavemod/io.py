"""CSV tables and JSON sidecars with deterministic formatting."""

import json
from pathlib import Path

import numpy as np

FLOAT_FORMAT = "%.17g"


def _plain(obj):
    """Convert numpy scalars/arrays and complex numbers to JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


def dumps_json(obj):
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(obj))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def write_csv(path, columns, header):
    """Columns of equal length as a comma-separated table with a header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, data, fmt=FLOAT_FORMAT, delimiter=",")
    return path


def read_csv(path):
    """(header, data) with data of shape (rows, columns)."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


# --- domain objects ------------------------------------------------------------

def write_profile(directory, wave, stem="profile"):
    d = Path(directory)
    n = wave.phi.shape[1]
    write_csv(d / f"{stem}.csv", [wave.grid] + [wave.phi[:, i] for i in range(n)],
              ["zeta"] + [f"phi{i + 1}" for i in range(n)])
    write_json(d / f"{stem}.json", {"k": wave.k, "omega": wave.omega, "N": wave.N,
                                    "residual": wave.residual})


def read_profile(directory, stem="profile"):
    from .wavetrain import WaveProfile
    d = Path(directory)
    _, data = read_csv(d / f"{stem}.csv")
    meta = read_json(d / f"{stem}.json")
    return WaveProfile(meta["k"], meta["omega"], data[:, 1:], meta["residual"])


def write_curve(path, curve):
    lam = np.asarray(curve.lambda_c)
    return write_csv(path, [curve.xis, lam.real, lam.imag], ["xi", "re_lambda", "im_lambda"])


def write_series(path, times, series):
    """Time series table (t, one column per named series)."""
    names = list(series)
    return write_csv(path, [times] + [series[n] for n in names], ["t"] + names)


def write_phase_field(directory, field, stem="phase"):
    d = Path(directory)
    write_csv(d / f"{stem}.csv", [field.x, field.values], ["zeta", "value"])
    write_json(d / f"{stem}.json", field.to_dict())


def write_trajectory(directory, traj):
    """One CSV per snapshot plus manifest.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n = traj.snapshots.shape[-1]
    files = []
    for i, u in enumerate(traj.snapshots):
        name = f"snapshot_{i:04d}.csv"
        write_csv(d / name, [traj.x] + [u[:, c] for c in range(n)],
                  ["zeta"] + [f"u{c + 1}" for c in range(n)])
        files.append(name)
    write_json(d / "manifest.json", {**traj.manifest(), "snapshots": files})
    return d / "manifest.json"


def read_trajectory(directory):
    from .experiment import Trajectory
    d = Path(directory)
    meta = read_json(d / "manifest.json")
    snaps = []
    x = None
    for name in meta["snapshots"]:
        _, data = read_csv(d / name)
        x = data[:, 0]
        snaps.append(data[:, 1:])
    extra = {k: v for k, v in meta.items()
             if k not in ("L", "N", "dt", "k0", "omega0", "scheme", "halving_error",
                          "times", "snapshots")}
    return Trajectory(x, np.array(meta["times"]), np.array(snaps), meta["L"], meta["N"],
                      meta["dt"], meta["k0"], meta["omega0"], meta["scheme"],
                      meta["halving_error"], extra)
