"""Every module-level invariant, one test per registered check."""

import pytest

from ace_lab.verify import CHECKS


@pytest.mark.parametrize("name,check", CHECKS, ids=[name for name, _ in CHECKS])
def test_invariant(name, check):
    check(quick=False)
