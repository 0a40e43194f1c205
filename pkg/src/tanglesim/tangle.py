"""The Tangle: an append-only DAG where every transaction approves two earlier ones."""

import io
from collections import deque
from dataclasses import dataclass
from typing import Optional

GENESIS_ID = 0


class UnknownTransaction(KeyError):
    pass


@dataclass(frozen=True)
class Transaction:
    id: int
    trunk: int
    branch: int
    payload: bytes
    timestamp: float
    is_milestone: bool = False


class Tangle:
    """Ledger state with O(1) tip bookkeeping.

    Tips are kept in a list plus a position index so uniform draws and
    removals are constant time and independent of set iteration order.
    """

    def __init__(self):
        genesis = Transaction(GENESIS_ID, GENESIS_ID, GENESIS_ID, b"", 0.0)
        self.transactions: dict[int, Transaction] = {GENESIS_ID: genesis}
        self._tips = [GENESIS_ID]
        self._tip_pos = {GENESIS_ID: 0}
        self.latest_milestone: Optional[int] = None
        self.milestones: list[int] = []
        self._next_id = 1

    def __len__(self):
        return len(self.transactions)

    def __contains__(self, tx_id):
        return tx_id in self.transactions

    def __getitem__(self, tx_id) -> Transaction:
        try:
            return self.transactions[tx_id]
        except KeyError:
            raise UnknownTransaction(tx_id) from None

    @property
    def genesis(self) -> Transaction:
        return self.transactions[GENESIS_ID]

    @property
    def tip_set(self) -> frozenset:
        return frozenset(self._tips)

    def tips(self) -> list:
        return list(self._tips)

    def _drop_tip(self, tx_id):
        pos = self._tip_pos.pop(tx_id, None)
        if pos is None:
            return
        last = self._tips.pop()
        if last != tx_id:
            self._tips[pos] = last
            self._tip_pos[last] = pos

    def select_tips(self, rng) -> tuple:
        """Two tips drawn uniformly with replacement; the ledger is untouched."""
        tips = self._tips
        n = len(tips)
        return tips[int(rng.random() * n)], tips[int(rng.random() * n)]

    def attach(self, payload, trunk, branch, timestamp, is_milestone=False) -> int:
        if trunk not in self.transactions:
            raise UnknownTransaction(f"unknown trunk {trunk}")
        if branch not in self.transactions:
            raise UnknownTransaction(f"unknown branch {branch}")
        tx_id = self._next_id
        self._next_id += 1
        self.transactions[tx_id] = Transaction(
            tx_id, trunk, branch, bytes(payload), float(timestamp), is_milestone
        )
        self._drop_tip(trunk)
        self._drop_tip(branch)
        self._tip_pos[tx_id] = len(self._tips)
        self._tips.append(tx_id)
        return tx_id

    def issue_milestone(self, timestamp, rng) -> int:
        """Attach a coordinator milestone.

        The trunk is pinned to the previous milestone so each confirmation
        cone contains the last one; the branch comes from tip selection.
        """
        trunk, branch = self.select_tips(rng)
        if self.latest_milestone is not None:
            trunk = self.latest_milestone
        ms = self.attach(b"", trunk, branch, timestamp, is_milestone=True)
        self.latest_milestone = ms
        self.milestones.append(ms)
        return ms

    def ancestors(self, tx_id) -> set:
        """All transactions reachable from ``tx_id`` via approval edges, itself included."""
        seen = {tx_id}
        todo = deque([tx_id])
        txs = self.transactions
        while todo:
            tx = txs[todo.popleft()]
            for parent in (tx.trunk, tx.branch):
                if parent not in seen:
                    seen.add(parent)
                    todo.append(parent)
        return seen

    def is_confirmed(self, tx_id) -> bool:
        if tx_id not in self.transactions:
            raise UnknownTransaction(tx_id)
        if self.latest_milestone is None:
            return False
        return tx_id in self.confirmed_set()

    def confirmed_set(self) -> set:
        if self.latest_milestone is None:
            return set()
        return self.ancestors(self.latest_milestone)

    def dump(self, fh=None) -> str:
        """Debug listing: ``id,trunk,branch,timestamp,is_milestone,payload_len``."""
        out = fh if fh is not None else io.StringIO()
        out.write("id,trunk,branch,timestamp,is_milestone,payload_len\n")
        for tx in self.transactions.values():
            out.write(
                f"{tx.id},{tx.trunk},{tx.branch},{tx.timestamp:.6f},"
                f"{int(tx.is_milestone)},{len(tx.payload)}\n"
            )
        return out.getvalue() if fh is None else ""


def new_tangle() -> Tangle:
    return Tangle()
