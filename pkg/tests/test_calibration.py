import pytest

from terrashadow.calibration import (
    MATCH_TOLERANCE_M,
    REFERENCE_CASE,
    calibrate_frames,
    candidate_conventions,
    check_calibrated_convention,
)
from terrashadow.errors import TerrashadowError
from terrashadow.optics import CALIBRATED_CONVENTION


@pytest.fixture(scope="module")
def report():
    return calibrate_frames()


def test_candidate_space():
    cands = candidate_conventions()
    # 2 orders x 2 directions x 24 mounts x 2 world frames x 2 pixel offsets
    assert len(cands) == 384 == len(set(cands))


def test_exactly_one_convention_matches(report):
    assert len(report.matches) == 1
    sel = report.selected
    assert sel.convention == CALIBRATED_CONVENTION
    assert sel.residual_m <= MATCH_TOLERANCE_M
    assert abs(sel.result.hit.altitude_m - REFERENCE_CASE.terrain_elevation_m) <= 1e-3


def test_runner_up_is_clearly_separated(report):
    ranked = sorted(r.residual_m for r in report.candidates)
    assert ranked[0] < 0.05 and ranked[1] > MATCH_TOLERANCE_M


def test_ambiguity_is_an_error(report):
    loose = calibrate_frames(tolerance_m=5.0)
    assert len(loose.matches) > 1
    with pytest.raises(TerrashadowError):
        loose.selected


def test_library_convention_confirmed():
    assert check_calibrated_convention().convention == CALIBRATED_CONVENTION
