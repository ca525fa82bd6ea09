import numpy as np
import pytest

from cubecalib.calibration import Observation
from cubecalib.errors import CalibError
from cubecalib.extraction import extract_cube_faces
from cubecalib.synth import NoiseSpec, generate_session

NOISY = NoiseSpec(depth_sigma=0.001, outlier_fraction=0.01, quantization=0.001)


def observations(session, params=None):
    out = []
    for (cam, cap), lc in sorted(session.frames.items()):
        try:
            out.append(Observation(cam, cap, extract_cube_faces(lc.cloud, params)))
        except CalibError:
            pass
    return out


def label_agreement(truth, labels, mask):
    """Fraction of ``mask`` points whose extracted face maps to their true face.

    Each extracted label is mapped to the true face holding most of its
    members; excluded points (-1) count as disagreements.
    """
    mapping = {}
    for k in np.unique(labels[labels >= 0]):
        vals, cnt = np.unique(truth[(labels == k) & (truth >= 0)], return_counts=True)
        if len(vals):
            mapping[int(k)] = int(vals[np.argmax(cnt)])
    pred = np.array([mapping.get(int(l), -99) for l in labels])
    return float((pred[mask] == truth[mask]).mean())


@pytest.fixture(scope="session")
def clean_session():
    return generate_session(noise=NoiseSpec.none(), rng_seed=0)


@pytest.fixture(scope="session")
def noisy_session():
    return generate_session(noise=NOISY, rng_seed=0)


@pytest.fixture(scope="session")
def clean_observations(clean_session):
    return observations(clean_session)


@pytest.fixture(scope="session")
def noisy_observations(noisy_session):
    return observations(noisy_session)


# acceptance criterion -> (passed, detail); printed at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
