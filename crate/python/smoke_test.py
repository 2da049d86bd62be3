"""Smoke test for the pygeoalign extension module."""

import math
import os
import tempfile

import pygeoalign as ga


def close(x, y, tol=1e-9):
    return abs(x - y) <= tol * max(1.0, abs(x), abs(y))


def main():
    a = ga.PointSet([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]], [1.0, 2.0, 1.0])
    assert len(a) == 3 and a.dim == 2
    assert close(a.total_weight, 4.0)
    assert close(a.diameter(), math.sqrt(5.0))

    value, flow = ga.solve_emd(a, a)
    assert value == 0.0
    assert close(sum(f for _, _, f in flow), 4.0)

    shift = ga.RigidTransform([[1.0, 0.0], [0.0, 1.0]], [0.5, -1.0])
    b = shift.apply(a)
    value, _ = ga.solve_emd(a, b)
    assert close(value, 1.25)

    theta = math.radians(10.0)
    turn = ga.RigidTransform(
        [[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]], [0.0, 0.0]
    )
    both = ga.compose([turn, shift])
    assert all(close(x, y) for x, y in zip(both.apply_point([1.0, 2.0]), shift.apply_point(turn.apply_point([1.0, 2.0]))))
    assert close(both.determinant(), 1.0)

    result = ga.align(a, b)
    assert result.emd <= 1e-12, result.emd
    trace = result.objective_trace
    assert all(y <= x + 1e-12 for x, y in zip(trace, trace[1:]))

    src, tgt = ga.random_manifold_instance(3, 20, 150, 200, seed=1)
    assert (len(src), len(tgt), src.dim) == (150, 200, 20)
    report = ga.align_compressed(src, tgt, gamma=0.2, seed=3)
    assert report.compressed_sizes == (40, 40)
    assert report.certificates_passed
    assert report.emd_full >= 0.0
    again = ga.align_compressed(src, tgt, gamma=0.2, seed=3)
    assert again.emd_full == report.emd_full

    small, radius = ga.compress(src, 10, seed=0)
    assert len(small) == 10 and close(small.total_weight, src.total_weight)
    centers, assignment, r2 = ga.gonzalez(src, 10, seed=0)
    assert r2 == radius and len(centers) == 10 and len(assignment) == 150

    cube = ga.hypercube_instance(2, 10, 100, seed=4)
    noisy = ga.add_gaussian_noise(cube, 0.01, seed=5)
    assert noisy.weights == cube.weights and noisy != cube

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "set.txt")
        src.write(path, "smoke")
        assert ga.PointSet.read(path) == src
    try:
        ga.PointSet.parse("2 1\n1 0 x\n")
    except ValueError as err:
        assert "line 2" in str(err)
    else:
        raise AssertionError("parse error expected")

    print("pygeoalign smoke test passed")


if __name__ == "__main__":
    main()
