"""Independent numpy reader for the odereg volume / field / landmark formats.

Usage: check_formats.py <path to odereg executable>

Generates a sequence with the CLI, reads it back without any odereg code and
checks layout invariants; then writes a field with numpy and lets the CLI
compute its Jacobian.
"""

import json
import pathlib
import subprocess
import sys
import tempfile

import numpy as np


def read_array(header_path):
    header = json.loads(header_path.read_text())
    assert header["dtype"] == "f32", header
    assert header["byte_order"] == "little", header
    nx, ny, nz = header["extents"]
    raw = np.fromfile(header_path.parent / header["payload"], dtype="<f4")
    if header["kind"] == "volume":
        assert raw.size == nx * ny * nz
        return header, raw.reshape(nz, ny, nx)
    assert header["kind"] == "field" and header["components"] == ["x", "y", "z"]
    assert raw.size == 3 * nx * ny * nz
    return header, raw.reshape(nz, ny, nx, 3)


def write_field(header_path, vectors_zyx3, fraction=1.0):
    nz, ny, nx, _ = vectors_zyx3.shape
    payload = header_path.with_suffix(".raw")
    vectors_zyx3.astype("<f4").tofile(payload)
    header_path.write_text(json.dumps({
        "kind": "field", "extents": [nx, ny, nz], "dtype": "f32",
        "byte_order": "little", "payload": payload.name,
        "resolution_fraction": fraction, "components": ["x", "y", "z"]}))


def read_landmarks(csv_path):
    rows = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    return {int(t): rows[rows[:, 0] == t][:, 2:5] for t in np.unique(rows[:, 0])}


def main():
    exe = sys.argv[1]
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        data = tmp / "data"
        subprocess.run([exe, "synth", "-o", str(data), "--seed", "5",
                        "--set", "synth.extents=32,24,16"],
                       check=True, stdout=subprocess.DEVNULL)
        manifest = json.loads((data / "sequence.json").read_text())
        assert manifest["phases"] == 6

        header, frame0 = read_array(data / manifest["frames"][0])
        assert frame0.shape == (16, 24, 32), frame0.shape
        assert frame0.min() >= 0.0 and frame0.max() <= 1.0
        assert frame0.std() > 0.05

        _, truth0 = read_array(data / manifest["ground_truth"][0])
        assert np.all(truth0 == 0.0)
        _, truth3 = read_array(data / manifest["ground_truth"][3])
        assert abs(np.linalg.norm(truth3, axis=-1).max() - 4.0) < 1e-4

        # Phase-0 landmarks sit on voxel centres, so p_t = p_0 + truth_t(p_0)
        # exactly, with (x, y, z) indexing the (z, y, x) array backwards.
        marks = read_landmarks(data / manifest["landmarks"])
        p0 = marks[0]
        assert np.all(p0 == np.round(p0))
        for t in range(1, 6):
            _, truth = read_array(data / manifest["ground_truth"][t])
            idx = p0.astype(int)
            d = truth[idx[:, 2], idx[:, 1], idx[:, 0]]
            err = np.abs(marks[t] - (p0 + d)).max()
            assert err < 1e-5, (t, err)

        # Uniform dilation 0.1 * p has Jacobian determinant 1.1^3 everywhere.
        z, y, x = np.meshgrid(np.arange(8), np.arange(8), np.arange(8), indexing="ij")
        field = 0.1 * np.stack([x, y, z], axis=-1).astype(np.float64)
        write_field(tmp / "dilation.json", field)
        subprocess.run([exe, "jacobian", "-f", str(tmp / "dilation.json"),
                        "-o", str(tmp / "jac.txt")], check=True, stdout=subprocess.DEVNULL)
        stats = dict(line.split(" = ") for line in (tmp / "jac.txt").read_text().splitlines()
                     if " = " in line)
        assert abs(float(stats["jacobian_min"]) - 1.331) < 1e-5, stats
        assert abs(float(stats["jacobian_max"]) - 1.331) < 1e-5, stats
        assert float(stats["fold_fraction"]) == 0.0
    print("formats OK")


if __name__ == "__main__":
    main()
