"""Shared experience replay and the buffer of saved mechanism snapshots."""

from dataclasses import dataclass

import numpy as np

from .nn.checkpoint import load_arrays, save_arrays


class BufferNotReady(LookupError):
    """Raised when sampling from an empty buffer; callers skip the update."""


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    types: np.ndarray
    done: np.ndarray

    def __len__(self):
        return len(self.states)


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions, sampled uniformly with replacement.

    Storage grows on demand up to ``capacity`` so large nominal capacities
    do not allocate up front.
    """

    FIELDS = ("states", "actions", "rewards", "next_states", "types", "done")

    def __init__(self, capacity, state_dim, n_agents):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.state_dim = state_dim
        self.n_agents = n_agents
        self.size = 0
        self.head = 0  # next write position
        self._alloc(min(self.capacity, 1024))

    def _alloc(self, rows):
        shapes = {
            "states": ((rows, self.state_dim), np.float32),
            "actions": ((rows, self.n_agents), np.int64),
            "rewards": ((rows, self.n_agents), np.float32),
            "next_states": ((rows, self.state_dim), np.float32),
            "types": ((rows, self.n_agents), np.int64),
            "done": ((rows,), np.bool_),
        }
        old = getattr(self, "_data", None)
        self._data = {k: np.zeros(s, dtype=d) for k, (s, d) in shapes.items()}
        if old is not None:
            for k in self.FIELDS:
                self._data[k][: self.size] = old[k][: self.size]

    def __len__(self):
        return self.size

    def push(self, state, actions, rewards, next_state, types, done):
        rows = len(self._data["done"])
        if self.head >= rows and rows < self.capacity:
            self._alloc(min(self.capacity, rows * 2))
        h = self.head
        d = self._data
        d["states"][h] = state
        d["actions"][h] = actions
        d["rewards"][h] = rewards
        d["next_states"][h] = next_state
        d["types"][h] = types
        d["done"][h] = done
        self.head = (h + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def push_transition(self, tr):
        self.push(tr.state, tr.actions, tr.rewards, tr.next_state, tr.types, tr.done)

    def indices(self, batch_size, rng):
        if self.size == 0:
            raise BufferNotReady("replay buffer is empty")
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size, rng_seed):
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        return self.take(self.indices(batch_size, rng))

    def take(self, idx):
        d = self._data
        return Batch(*(d[k][idx] for k in self.FIELDS))

    def ordered(self):
        """All stored transitions, oldest first."""
        if self.size < self.capacity:
            idx = np.arange(self.size)
        else:
            idx = (np.arange(self.size) + self.head) % self.capacity
        return self.take(idx)

    def arrays(self):
        b = self.ordered()
        return {k: getattr(b, k) for k in self.FIELDS}

    def save(self, directory):
        meta = {"capacity": self.capacity, "state_dim": self.state_dim, "n_agents": self.n_agents, "size": self.size}
        save_arrays(directory, self.arrays(), meta)

    @classmethod
    def load(cls, directory):
        arrays, meta = load_arrays(directory)
        buf = cls(meta["capacity"], meta["state_dim"], meta["n_agents"])
        size = meta["size"]
        if size > len(buf._data["done"]):
            buf._alloc(size)
        for k in cls.FIELDS:
            buf._data[k][:size] = arrays[k]
        buf.size = size
        buf.head = size % buf.capacity
        return buf


@dataclass
class Snapshot:
    step: int
    on_path: np.ndarray
    opt_out: np.ndarray
    types: np.ndarray


class EvalPolicyBuffer:
    """Append-only record of mechanism parameters taken at evaluation steps."""

    def __init__(self):
        self.entries = []

    def __len__(self):
        return len(self.entries)

    def append(self, step, on_path_params, opt_out_params, types):
        if self.entries and step <= self.entries[-1].step:
            raise ValueError("snapshots must be appended in increasing step order")
        self.entries.append(
            Snapshot(int(step), np.array(on_path_params, copy=True), np.array(opt_out_params, copy=True), np.array(types, copy=True))
        )

    def truncate(self, step):
        """Drop snapshots taken after ``step`` (used when resuming)."""
        self.entries = [e for e in self.entries if e.step <= step]

    def save(self, directory):
        arrays = {}
        for e in self.entries:
            arrays[f"{e.step}.on_path"] = e.on_path
            arrays[f"{e.step}.opt_out"] = e.opt_out
            arrays[f"{e.step}.types"] = e.types
        save_arrays(directory, arrays, {"steps": [e.step for e in self.entries]})

    @classmethod
    def load(cls, directory):
        arrays, meta = load_arrays(directory)
        buf = cls()
        for s in meta["steps"]:
            buf.append(s, arrays[f"{s}.on_path"], arrays[f"{s}.opt_out"], arrays[f"{s}.types"])
        return buf
