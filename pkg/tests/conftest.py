import numpy as np
import pytest

from rcreml.model import Dataset, Individual


def random_psd(rng, q, singular=False, scale=0.5):
    rank = max(1, q - 1) if singular and q > 1 else q
    a = rng.standard_normal((q, rank))
    return scale * (a @ a.T)


def random_instance(rng, n_individuals=None, p=None, q=None, n_lo=None, n_hi=12,
                    allow_rank_deficient=True, designs=("subset", "equal", "factor")):
    """Random validated dataset plus admissible (D, sigma2).

    Individual 0 always has a full-column-rank X so the pooled design has
    rank p; later individuals may carry a duplicated X column.
    """
    n_individuals = n_individuals or int(rng.integers(1, 6))
    p = p or int(rng.integers(1, 4))
    q = q or int(rng.integers(1, p + 1))
    design = rng.choice([d for d in designs if d != "equal" or q == p])
    individuals = []
    for k in range(n_individuals):
        lo = n_lo if n_lo is not None else max(q + 1, p + 1)
        n_k = int(rng.integers(lo, n_hi + 1))
        x = rng.standard_normal((n_k, p))
        if allow_rank_deficient and k > 0 and p >= 2 and rng.random() < 0.3:
            x[:, -1] = x[:, 0]
        if design == "equal":
            z = x.copy()
        elif design == "subset":
            z = x[:, :q].copy()
        else:
            z = x @ rng.standard_normal((p, q))
        y = rng.standard_normal(n_k)
        individuals.append(Individual(x=x, z=z, y=y, id=str(k)))
    dataset = Dataset(individuals=tuple(individuals))
    d = random_psd(rng, q, singular=rng.random() < 0.25)
    sigma2 = rng.uniform(0.5, 2.0, n_individuals)
    return dataset, d, sigma2


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)
