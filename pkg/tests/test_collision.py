"""Tests for the pairwise intersection check."""

import math

import numpy as np
import pytest

from mateforge.collision import OrientedBox, check_intersections, penetration
from mateforge.ir import AssemblyDef, Link, Part
from mateforge.kinematics import Pose, quat_from_axis_angle, quat_to_matrix
from mateforge.solver import build_constraints, pin_joint, solve

UNIT = Part("unit", (1.0, 1.0, 1.0))
TURNED = quat_from_axis_angle((0.0, 0.0, 1.0), math.pi / 4)


def pair(second: Pose) -> tuple[AssemblyDef, dict[str, Pose]]:
    """Two unit cubes, the first at the origin."""
    definition = AssemblyDef((UNIT,), (Link("a", "unit", grounded=True), Link("b", "unit")), ())
    return definition, {"a": Pose(), "b": second}


def inside(points: np.ndarray, pose: Pose, half: np.ndarray) -> np.ndarray:
    """Point-membership oracle for a posed box."""
    local = (points - np.asarray(pose.position)) @ quat_to_matrix(pose.orientation)
    return np.all(np.abs(local) <= half, axis=1)


def overlap_fraction(second: Pose, samples: int, seed: int = 5) -> float:
    """Monte-Carlo estimate of the shared volume over a bounding region."""
    rng = np.random.default_rng(seed)
    points = rng.uniform((-1.0, -1.0, -1.0), (2.5, 1.0, 1.0), size=(samples, 3))
    half = np.full(3, 0.5)
    both = inside(points, Pose(), half) & inside(points, second, half)
    return float(np.mean(both))


class TestPenetration:
    """Tests for the separating-axis test."""

    def test_axis_aligned_overlap(self) -> None:
        """Test unit cubes with centers 0.5 mm apart."""
        diagnostics = check_intersections(*pair(Pose((0.5, 0.0, 0.0))))
        assert len(diagnostics) == 1
        assert str(diagnostics[0].code) == "Intersection"
        assert diagnostics[0].subjects == ("a", "b")
        assert diagnostics[0].data["depth"] == pytest.approx(0.5)
        assert diagnostics[0].data["axis"] == [1, 0, 0]

    def test_touching_is_not_intersecting(self) -> None:
        """Test unit cubes exactly in contact."""
        assert check_intersections(*pair(Pose((1.0, 0.0, 0.0)))) == []

    def test_rotated_cube_clear(self) -> None:
        """Test a 45 degree cube 1.25 mm away."""
        assert check_intersections(*pair(Pose((1.25, 0.0, 0.0), TURNED))) == []

    def test_rotated_cube_corner_overlap(self) -> None:
        """Test that the rotated corner reaches in at 1.2 mm."""
        diagnostics = check_intersections(*pair(Pose((1.2, 0.0, 0.0), TURNED)))
        assert len(diagnostics) == 1
        assert diagnostics[0].data["depth"] == pytest.approx(0.5 * math.sqrt(2) - 0.7, abs=1e-12)

    def test_penetration_is_symmetric(self) -> None:
        """Test that depth does not depend on argument order."""
        first = OrientedBox.from_pose(UNIT, Pose())
        second = OrientedBox.from_pose(UNIT, Pose((0.3, 0.2, -0.1), quat_from_axis_angle((1.0, 1.0, 0.0), 0.6)))
        forward = penetration(first, second)
        backward = penetration(second, first)
        assert forward is not None
        assert backward is not None
        assert forward[0] == pytest.approx(backward[0])

    def test_fixtures_only_touch(self, scissors: AssemblyDef, table: AssemblyDef) -> None:
        """Test that solved fixtures are in contact but never interpenetrate."""
        for degrees in (0.0, 30.0, 60.0):
            outcome = solve(pin_joint(build_constraints(scissors), "hinge", math.radians(degrees)))
            assert check_intersections(scissors, outcome.poses) == []
        assert check_intersections(table, solve(build_constraints(table)).poses) == []


class TestMonteCarloOracle:
    """Tests that compare the separating-axis verdict with point sampling."""

    def test_clear_pair_has_no_shared_points(self) -> None:
        """Test the 1.25 mm case against 100k samples."""
        assert overlap_fraction(Pose((1.25, 0.0, 0.0), TURNED), 100_000) == 0.0

    def test_overlapping_pair_has_shared_points(self) -> None:
        """Test that a clear overlap is seen by the sampler too."""
        assert overlap_fraction(Pose((0.5, 0.0, 0.0), TURNED), 100_000) > 0.0

    @pytest.mark.slow
    def test_clear_pair_million_samples(self) -> None:
        """Test the 1.25 mm case against a million samples."""
        assert overlap_fraction(Pose((1.25, 0.0, 0.0), TURNED), 1_000_000) == 0.0

    @pytest.mark.slow
    def test_random_pairs_agree(self) -> None:
        """Test random placements against the sampler in both directions."""
        rng = np.random.default_rng(17)
        outcomes = {True: 0, False: 0}
        for _ in range(500):
            position = tuple(float(c) for c in rng.uniform(-1.2, 1.2, size=3))
            orientation = quat_from_axis_angle(rng.normal(size=3), float(rng.uniform(0, math.pi)))
            second = Pose(position, orientation)  # type: ignore[arg-type]
            reported = bool(check_intersections(*pair(second)))
            sampled = overlap_fraction(second, 20_000, seed=int(rng.integers(1 << 30)))
            outcomes[reported] += 1
            if sampled > 0.0:
                assert reported, second
            if not reported:
                assert sampled == 0.0, second
        assert outcomes[True] > 0
        assert outcomes[False] > 0
