from __future__ import annotations

import numpy as np
import pytest
import torch

from diffcf.diffusion import DenoiserOutput


class FakeSchedule:
    """Minimal schedule stand-in with hand-picked alpha_bar values."""

    def __init__(self, alpha_bars: list[float]):
        self._alpha_bars = alpha_bars

    @property
    def num_steps(self) -> int:
        return len(self._alpha_bars)

    def validate_t(self, t: int) -> None:
        from diffcf.errors import ValidationError

        if not 1 <= t <= self.num_steps:
            raise ValidationError(f"timestep {t} outside schedule 1..{self.num_steps}")

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        self.validate_t(t)
        return self._alpha_bars[t - 1]

    def alpha(self, t: int) -> float:
        return self.alpha_bar(t) / self.alpha_bar(t - 1)

    def beta(self, t: int) -> float:
        return 1.0 - self.alpha(t)

    def posterior_sigma(self, t: int) -> float:
        self.validate_t(t)
        a_prev = self.alpha_bar(t - 1)
        a_cur = self.alpha_bar(t)
        return float(np.sqrt(max(self.beta(t) * (1.0 - a_prev) / (1.0 - a_cur), 0.0)))

    def original_index(self, t: int) -> int:
        self.validate_t(t)
        return t


class StubDenoiser:
    """Denoiser stand-in emitting fixed (mu, sigma) regardless of input."""

    def __init__(self, mu: torch.Tensor | None = None, sigma: float = 0.0, mu_from=None):
        self.mu = mu
        self.sigma = sigma
        self.mu_from = mu_from

    def __call__(self, x: torch.Tensor, t: int) -> DenoiserOutput:
        mu = self.mu_from(x, t) if self.mu_from is not None else self.mu
        return DenoiserOutput(mu=mu, sigma=torch.full_like(x, self.sigma))


@pytest.fixture(autouse=True)
def _two_threads():
    torch.set_num_threads(2)


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        outcome = "PASS" if report.passed else "FAIL"
        print(f"\nACCEPTANCE {name}: {outcome}", flush=True)


@pytest.fixture(scope="session")
def fast_assets(tmp_path_factory):
    """Quickly trained (low-quality) checkpoints for mechanics tests."""
    from diffcf.cli import main

    root = tmp_path_factory.mktemp("fast-assets")
    clf = root / "classifier.pt"
    dd = root / "denoiser.pt"
    assert main(["train-classifier", "--epochs", "1", "--seed", "0", "--out", str(clf)]) == 0
    assert main(["train-ddpm", "--iterations", "25", "--seed", "0", "--out", str(dd)]) == 0
    return {"classifier": clf, "denoiser": dd}
