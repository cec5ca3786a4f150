import numpy as np
import pytest

from ckl.core import DistillationInstance, DocumentEntry


def make_instance(teacher_scores, student_scores, num_positives, query_id="q0"):
    docs = [
        DocumentEntry(f"d{i:02d}", float(t), float(s))
        for i, (t, s) in enumerate(zip(teacher_scores, student_scores))
    ]
    return DistillationInstance(
        query_id=query_id,
        positives=tuple(docs[:num_positives]),
        negatives=tuple(docs[num_positives:]),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_simplex_pair(rng, n):
    return rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
