"""Prefix trie over catalog token sequences; every root-to-leaf path is one
item's full ID sequence followed by EOS, so constrained decoding can only
produce real items."""

from __future__ import annotations

from ..errors import ContractViolation
from ..fusion import EOS, TokenSequence


class TrieNode:
    __slots__ = ("children", "item")

    def __init__(self):
        self.children: dict[int, TrieNode] = {}
        self.item: str | None = None


class ItemTrie:
    def __init__(self):
        self.root = TrieNode()
        self.n_items = 0
        self.depth = 0

    def insert(self, tokens: tuple[int, ...], item_id: str) -> None:
        node = self.root
        for t in tokens:
            node = node.children.setdefault(int(t), TrieNode())
        if node.item is not None or node.children:
            raise ContractViolation(
                f"duplicate or prefix-overlapping sequence for item {item_id!r} (collides with {node.item!r})"
            )
        node.item = item_id
        self.n_items += 1
        self.depth = max(self.depth, len(tokens))

    def walk(self, prefix) -> TrieNode | None:
        node = self.root
        for t in prefix:
            node = node.children.get(int(t))
            if node is None:
                return None
        return node

    def accepts(self, tokens) -> bool:
        node = self.walk(tokens)
        return node is not None and node.item is not None

    def leaf_count(self) -> int:
        def count(node: TrieNode) -> int:
            return (1 if node.item is not None else 0) + sum(count(c) for c in node.children.values())

        return count(self.root)

    def sequences(self) -> dict[str, tuple[int, ...]]:
        out: dict[str, tuple[int, ...]] = {}

        def visit(node: TrieNode, path: tuple[int, ...]):
            if node.item is not None:
                out[node.item] = path
            for t in sorted(node.children):
                visit(node.children[t], path + (t,))

        visit(self.root, ())
        return out


def build_item_trie(catalog_tokens: dict[str, TokenSequence | tuple[int, ...]]) -> ItemTrie:
    """Trie accepting exactly the catalog sequences (each extended with EOS)."""
    trie = ItemTrie()
    for item_id, seq in catalog_tokens.items():
        tokens = tuple(seq.tokens) if isinstance(seq, TokenSequence) else tuple(seq)
        trie.insert(tokens + (EOS,), item_id)
    return trie
