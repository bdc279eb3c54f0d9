"""Replica fan-out: deterministic ordering regardless of worker count.

Workers receive (common, replica_index) and own their RNG stream via the
index, so results are independent of scheduling; the dispatcher reassembles
them in replica order (commutative reductions stay deterministic).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def _run_chunk(worker, common, lo, hi):
    return [worker(common, k) for k in range(lo, hi)]


def replica_map(worker, common, n_replicas: int, threads: int = 1) -> list:
    """Apply ``worker(common, k)`` for ``k in range(n_replicas)``, in order."""
    if threads <= 1 or n_replicas <= 1:
        return [worker(common, k) for k in range(n_replicas)]
    chunk = max(1, -(-n_replicas // (4 * threads)))
    spans = [(lo, min(lo + chunk, n_replicas)) for lo in range(0, n_replicas, chunk)]
    out: list = []
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_run_chunk, worker, common, lo, hi) for lo, hi in spans]
        for fut in futures:
            out.extend(fut.result())
    return out
