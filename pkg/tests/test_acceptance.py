"""Acceptance criteria 1 to 11 at their stated tolerances, one line per criterion."""

import pytest

from ldlab.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("cid", sorted(CRITERIA))
def test_criterion(cid, capsys):
    res = run_criterion(cid)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()
