"""Smoke test for the blocksvd Python extension.

Build the module first, then run with the directory holding blocksvd.so on
PYTHONPATH (see README.md).
"""

import os
import tempfile

import numpy as np

import blocksvd


def dense(u, sigma, v):
    if not sigma:
        return 0.0
    return np.asarray(u) @ np.diag(sigma) @ np.asarray(v).T


def main():
    rng = np.random.default_rng(7)
    b, c, n = 50, 6, 420
    data = rng.standard_normal((n, c))

    store = blocksvd.BlockStore(b, c, xi=1.0)
    store.append_row(data[0].tolist())
    store.append_rows(data[1:].tolist())
    assert store.total_rows == n == len(store)
    assert store.sealed_count == n // b
    print(store)

    for t_s, t_e in [(0, n - 1), (13, 13), (37, 291), (400, 419)]:
        u, sigma, v = store.range_query(t_s, t_e)
        exact = np.linalg.svd(data[t_s : t_e + 1], compute_uv=False)
        assert np.allclose(sigma, exact[: len(sigma)], rtol=1e-9, atol=1e-9)
        assert np.allclose(dense(u, sigma, v), data[t_s : t_e + 1], atol=1e-9)
        err = blocksvd.reconstruction_error(data[t_s : t_e + 1].tolist(), u, sigma, v)
        assert err <= 1e-12, err

    u, sigma, v = blocksvd.thin_svd(data[:10].tolist())
    assert len(u) == 10 and len(v) == c
    u, sigma, v = blocksvd.truncate_rank(u, sigma, v, 0.5)
    assert 1 <= len(sigma) < c

    low = rng.standard_normal((n, 2)) @ rng.standard_normal((2, c))
    lossy = blocksvd.BlockStore(b, c)
    lossy.append_rows(low.tolist())
    assert lossy.byte_size() < lossy.raw_byte_size()

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "store.zsvd")
        store.save(path)
        again = blocksvd.BlockStore.load(path)
        assert again.range_query(5, 300) == store.range_query(5, 300)

    hits = store.search(300, 349, stride=25, top_n=3)
    assert len(hits) == 3
    assert all(0.0 <= s <= 1.0 for _, s in hits)
    assert [s for _, s in hits] == sorted((s for _, s in hits), reverse=True)

    for bad in (lambda: store.range_query(10, 5), lambda: store.append_row([1.0])):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
