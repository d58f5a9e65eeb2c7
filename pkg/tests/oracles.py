"""Independent reference implementations used only by the tests."""

from functools import lru_cache


class CoverOracle:
    """Minimum set of tree nodes whose leaf sets partition the valid leaves.

    Works purely on leaf bitmasks: every prefix of every leaf is a candidate
    node, and a memoised search picks the smallest exact partition.  The memo
    depends only on the tree, so one oracle answers every revocation subset.
    """

    def __init__(self, leaves):
        self.leaves = sorted(leaves)
        self.index = {leaf: i for i, leaf in enumerate(self.leaves)}
        by_mask = {}
        for leaf in self.leaves:
            for i in range(len(leaf) + 1):
                node = leaf[:i]
                mask = sum(1 << self.index[l] for l in self.leaves if l[:len(node)] == node)
                # nodes on a unary chain share a mask; keep the deepest
                if mask not in by_mask or len(node) > len(by_mask[mask]):
                    by_mask[mask] = node
        self.by_mask = by_mask
        self.masks = sorted(by_mask, reverse=True)
        self.solve = lru_cache(maxsize=None)(self._solve)

    def _solve(self, remaining):
        if remaining == 0:
            return ()
        low = remaining & -remaining
        best = None
        for m in self.masks:
            if m & low and m & remaining == m:
                rest = self.solve(remaining & ~m)
                if best is None or len(rest) + 1 < len(best):
                    best = (m,) + rest
        return best

    def cover(self, revoked):
        valid = 0
        for leaf in self.leaves:
            if leaf not in revoked:
                valid |= 1 << self.index[leaf]
        return sorted(self.by_mask[m] for m in self.solve(valid))


def brute_force_cover(leaves, revoked):
    return CoverOracle(leaves).cover(set(revoked))
