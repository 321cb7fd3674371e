"""Dinic's blocking-flow algorithm on exact integer capacities.

Iterative DFS so that long residual paths (V ~ 1e4 on hub networks) do not
hit the recursion limit.
"""

from __future__ import annotations

from collections import deque


class Dinic:
    def __init__(self, n: int):
        self.n = n
        self.adj: list[list[int]] = [[] for _ in range(n)]
        self.to: list[int] = []
        self.cap: list[int] = []

    def add_edge(self, u: int, v: int, c: int) -> int:
        """Add u->v with capacity c; returns the forward edge id."""
        e = len(self.to)
        self.to += (v, u)
        self.cap += (c, 0)
        self.adj[u].append(e)
        self.adj[v].append(e + 1)
        return e

    def flow_on(self, e: int) -> int:
        # flow pushed along e sits as capacity on its reverse twin
        return self.cap[e ^ 1]

    def _levels(self, s: int, t: int) -> list[int] | None:
        level = [-1] * self.n
        level[s] = 0
        dq = deque([s])
        to, cap, adj = self.to, self.cap, self.adj
        while dq:
            u = dq.popleft()
            for e in adj[u]:
                v = to[e]
                if cap[e] > 0 and level[v] < 0:
                    level[v] = level[u] + 1
                    dq.append(v)
        return level if level[t] >= 0 else None

    def _blocking_flow(self, s: int, t: int, level: list[int]) -> int:
        to, cap, adj = self.to, self.cap, self.adj
        it = [0] * self.n
        total = 0
        path: list[int] = []
        u = s
        while True:
            if u == t:
                push = min(cap[e] for e in path)
                for e in path:
                    cap[e] -= push
                    cap[e ^ 1] += push
                total += push
                # restart from the tail of the first saturated edge
                cut = next(i for i, e in enumerate(path) if cap[e] == 0)
                del path[cut:]
                u = to[path[-1]] if path else s
                continue
            edges = adj[u]
            i = it[u]
            lu = level[u] + 1
            while i < len(edges):
                e = edges[i]
                if cap[e] > 0 and level[to[e]] == lu:
                    break
                i += 1
            it[u] = i
            if i < len(edges):
                e = edges[i]
                path.append(e)
                u = to[e]
                continue
            # dead end: prune u and retreat
            level[u] = -1
            if not path:
                return total
            e = path.pop()
            u = to[e ^ 1]
            it[u] += 1

    def max_flow(self, s: int, t: int) -> int:
        flow = 0
        while True:
            level = self._levels(s, t)
            if level is None:
                return flow
            flow += self._blocking_flow(s, t, level)
