import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

from bootbandit.arms import enumerate_arms
from bootbandit.design import design_from_levels, generate_initial_design
from bootbandit.environment import sample_valid_surface
from bootbandit.models import ArmSet, HpmConfig, InitialDesign, NoiseModel, ResponseSurface
from bootbandit.numerics import RngStream

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def arms3() -> ArmSet:
    """All 8 arms of a 3-treatment space."""
    return enumerate_arms(3)


@pytest.fixture
def arms7() -> ArmSet:
    """All 128 arms of the 7-treatment space."""
    return enumerate_arms(7)


@pytest.fixture
def factorial3() -> InitialDesign:
    """The 2^3 full factorial as a design."""
    levels = np.array([arm.levels for arm in enumerate_arms(3).arms])
    return design_from_levels(levels)


@pytest.fixture
def design3_32() -> InitialDesign:
    """A 32-run orthogonal-array design for 3 treatments."""
    return generate_initial_design(3, 32, RngStream(7, 3))


@pytest.fixture(scope="session")
def design7_32() -> InitialDesign:
    """The 32-run, 7-treatment design every K=7 test shares."""
    return generate_initial_design(7, 32, RngStream(0, 1))


@pytest.fixture
def temp_dir():
    """Create a temporary output directory."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


def no_triples_hpm() -> HpmConfig:
    """Meta-model with three-way interactions switched off."""
    return HpmConfig(heredity_3way=(0.0, 0.0, 0.0, 0.0))


def make_surface(theta: list[float], n_treatments: int, sigma: float = 0.0) -> ResponseSurface:
    """Surface with explicit coefficients in canonical true-feature order."""
    values = np.array(theta, dtype=np.float64)
    return ResponseSurface(
        n_treatments=n_treatments,
        theta=values,
        active_mask=values != 0.0,
        noise=NoiseModel(sigma_eps=sigma),
    )


def valid_surface(
    seed: int, arms: ArmSet, hpm: HpmConfig | None = None, sigma: float = 0.0
) -> ResponseSurface:
    """A surface with positive optimum drawn from its own stream."""
    surface, _ = sample_valid_surface(
        RngStream(seed, 11), hpm or HpmConfig(), arms, NoiseModel(sigma_eps=sigma), seed
    )
    return surface


def run_cli(*args: str) -> subprocess.CompletedProcess[str]:
    """Run bootbandit CLI command via subprocess (for smoke tests only)."""
    cmd = [sys.executable, "-m", "bootbandit.cli", *args]
    return subprocess.run(cmd, capture_output=True, text=True)


def run_cli_json(*args: str) -> dict:
    """Run bootbandit CLI and parse JSON output."""
    result = run_cli(*args, "-f", "json")
    assert result.returncode == 0, f"CLI failed: {result.stderr}"
    return json.loads(result.stdout)
