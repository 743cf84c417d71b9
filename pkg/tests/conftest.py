import sys
from pathlib import Path

import pytest
from hypothesis import settings

from repgame.game import builtin_consultant, builtin_product_choice

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("repgame", deadline=None, max_examples=60)
settings.load_profile("repgame")


@pytest.fixture(scope="session")
def pc():
    return builtin_product_choice(mu_commit=0.2, delta=0.9)


@pytest.fixture(scope="session")
def cons():
    return builtin_consultant(p=0.8, q=0.9, r=0.6, mu_commit=0.1, delta=0.9)
