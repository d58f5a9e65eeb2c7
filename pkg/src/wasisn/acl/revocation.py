"""Complete-subtree revocation over the UII hierarchy.

The tree is the identity hierarchy itself, so nodes have any number of
children.  A node is a tuple of path components and each leaf is a full
UII.  Unary chains are collapsed onto their deepest node, because a deeper
node covers the same leaves with a narrower pattern.  The effective root is
therefore the longest common prefix of all leaves.

The cover is the set of maximal subtrees that contain no revoked leaf.  Any
cover has to be built from such clean subtrees, and a clean subtree is
always better replaced by its largest clean ancestor, so this set is the
unique minimal cover.
"""

from ..errors import ParseError, UnknownLeaf
from .hierarchy import EntityUII, as_uii

ROOT = ()


def _key(leaf):
    if isinstance(leaf, EntityUII):
        return tuple(leaf.components)
    if isinstance(leaf, str):
        return tuple(as_uii(leaf).components)
    return tuple(leaf)


class RevocationTree:
    def __init__(self, leaves=(), revoked=()):
        self.leaves = {}  # components -> expiry (ns) or None
        self.revoked = set()
        self._children = None
        for leaf in leaves:
            self.add_leaf(leaf)
        for leaf in revoked:
            self.revoke(leaf)

    def add_leaf(self, leaf, expiry=None):
        """Add (or re-grant) a leaf.  Re-granting lifts an earlier revocation."""
        k = _key(leaf)
        if not k:
            raise ParseError("a leaf needs at least one component")
        if k not in self.leaves:
            for other in self.leaves:
                short, long_ = sorted((k, other), key=len)
                if long_[:len(short)] == short:
                    raise ParseError(f"leaf {k} and {other} would nest inside each other")
        if k not in self.leaves:
            self._children = None
        self.leaves[k] = expiry
        self.revoked.discard(k)
        return k

    def __contains__(self, leaf):
        return _key(leaf) in self.leaves

    def revoke(self, leaf):
        k = _key(leaf)
        if k not in self.leaves:
            raise UnknownLeaf(f"{'/'.join(k)} is not a leaf of this tree")
        self.revoked.add(k)
        return self

    def expire_keys(self, now):
        newly = sorted(
            k for k, exp in self.leaves.items()
            if exp is not None and exp < now and k not in self.revoked
        )
        self.revoked.update(newly)
        return newly

    def is_revoked(self, leaf):
        return _key(leaf) in self.revoked

    @property
    def valid_leaves(self):
        return sorted(k for k in self.leaves if k not in self.revoked)

    def nodes(self):
        out = {ROOT}
        for leaf in self.leaves:
            out.update(leaf[:i] for i in range(1, len(leaf) + 1))
        return sorted(out, key=lambda n: (len(n), n))

    def children(self, node):
        if self._children is None:
            kids = {}
            for leaf in self.leaves:
                for i in range(len(leaf)):
                    kids.setdefault(leaf[:i], set()).add(leaf[:i + 1])
            self._children = {n: sorted(c) for n, c in kids.items()}
        return self._children.get(node, [])

    def leaves_under(self, node):
        return sorted(leaf for leaf in self.leaves if leaf[:len(node)] == node)

    def is_leaf(self, node):
        return node in self.leaves

    def collapse(self, node):
        """Walk down a unary chain to its deepest node."""
        while node not in self.leaves:
            kids = self.children(node)
            if len(kids) != 1:
                break
            node = kids[0]
        return node

    @property
    def root(self):
        return self.collapse(ROOT) if self.leaves else ROOT

    def cover(self):
        if not self.leaves:
            return []
        dirty = set()
        for leaf in self.revoked:
            dirty.update(leaf[:i] for i in range(len(leaf) + 1))
        result = []
        stack = [ROOT]
        while stack:
            node = self.collapse(stack.pop())
            if node not in dirty:
                result.append(node)
            elif node not in self.leaves:
                stack.extend(self.children(node))
        return sorted(result)
