"""Independent brute-force oracles shared by the race-checker test suites.

Nothing here reuses the package's reachability or matching code paths:
happens-before comes from a dense Floyd-Warshall closure, conflicts from an
all-pairs scan, and synchronization chains from exhaustive enumeration of
sync-op tuples.
"""

import itertools

from bbfs.races import ExecutionTrace, StorageOp, check_properly_synchronized


def hb_closure_oracle(trace):
    """Dense transitive closure (Floyd-Warshall) over po + so."""
    ids = [op.id for op in trace.ops]
    idx = {i: k for k, i in enumerate(ids)}
    n = len(ids)
    adj = [[False] * n for _ in range(n)]
    for seq in trace.per_process.values():
        for a, b in zip(seq, seq[1:]):
            adj[idx[a.id]][idx[b.id]] = True
    for a, b in trace.so_edges:
        adj[idx[a]][idx[b]] = True
    for k in range(n):
        for i in range(n):
            if adj[i][k]:
                for j in range(n):
                    if adj[k][j]:
                        adj[i][j] = True
    return lambda x, y: adj[idx[x]][idx[y]]


def brute_conflicts(trace):
    data = [op for op in trace.ops if op.is_data]
    out = []
    for i in range(len(data)):
        for j in range(i + 1, len(data)):
            a, b = data[i], data[j]
            if (
                a.file == b.file
                and a.start <= b.end
                and b.start <= a.end
                and "write" in (a.kind, b.kind)
            ):
                out.append((a, b) if a.id < b.id else (b, a))
    return sorted(out, key=lambda p: (p[0].id, p[1].id))


def brute_directed_ps(trace, model, hb_fn, x, y):
    def edge(label, a, b):
        if label == "po":
            return a.process == b.process and a.id < b.id
        return hb_fn(a.id, b.id)

    if x.kind == "read" and hb_fn(x.id, y.id):
        return True
    if x.kind != "write":
        return False
    syncs = [op for op in trace.ops if op.kind == "sync"]
    for pattern in model.patterns:
        k = len(pattern.syncs)
        if k == 0:
            if edge(pattern.edges[0], x, y):
                return True
            continue
        for combo in itertools.product(syncs, repeat=k):
            if any(
                c.sync_name != pattern.syncs[i] or c.file != x.file
                for i, c in enumerate(combo)
            ):
                continue
            chain = [x, *combo, y]
            if all(edge(pattern.edges[i], chain[i], chain[i + 1]) for i in range(k + 1)):
                return True
    return False


def brute_verdicts(trace, model):
    hb_fn = hb_closure_oracle(trace)
    out = {}
    for a, b in brute_conflicts(trace):
        ok = brute_directed_ps(trace, model, hb_fn, a, b) or brute_directed_ps(
            trace, model, hb_fn, b, a
        )
        out[(a.id, b.id)] = "properly-synchronized" if ok else "race"
    return out


def checker_verdicts(trace, model):
    return {
        (rep.x.id, rep.y.id) if rep.x.id < rep.y.id else (rep.y.id, rep.x.id): rep.verdict
        for rep in check_properly_synchronized(trace, model)
    }


def random_trace(rng, model, max_procs=3, max_ops=5, files=("f", "g")):
    nproc = rng.randrange(1, max_procs + 1)
    sync_names = sorted(model.sync_ops)
    ops = []
    next_id = 0
    for p in range(nproc):
        for _ in range(rng.randrange(1, max_ops + 1)):
            file = rng.choice(files)
            kind = rng.random()
            if kind < 0.4 or not sync_names:
                start = rng.randrange(16)
                ops.append(StorageOp(next_id, p, "write", file, start, start + rng.randrange(1, 6)))
            elif kind < 0.75:
                start = rng.randrange(16)
                ops.append(StorageOp(next_id, p, "read", file, start, start + rng.randrange(1, 6)))
            else:
                ops.append(StorageOp(next_id, p, "sync", file, sync_name=rng.choice(sync_names)))
            next_id += 1
    edges = []
    for _ in range(rng.randrange(0, 4)):
        if len(ops) < 2:
            continue
        a, b = rng.sample(ops, 2)
        if a.process == b.process:
            continue
        lo, hi = (a, b) if a.id < b.id else (b, a)
        edges.append((lo.id, hi.id))  # forward in id order keeps the DAG acyclic
    return ExecutionTrace(ops, sorted(set(edges)))
