"""Learned dispatch of idle vehicles to anticipated-demand zones.

State features combine the vehicle's own situation with per-zone supply
and demand forecasts; actions pick a target zone from a square
neighborhood around the vehicle. The action-value function is a small
fully connected network implemented here with explicit gradients so its
backprop can be verified against finite differences. One-step TD
training draws minibatches from a bounded replay buffer.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


class DispatchError(ValueError):
    """Raised for layout mismatches and malformed dispatch inputs."""


# ---------------------------------------------------------------------------
# state encoding
# ---------------------------------------------------------------------------

class StateEncoder:
    """Fixed-layout feature vector for one vehicle's dispatch decision.

    Layout: [col, row (scaled), free seats, free trunk (scaled),
    supply grid per step, demand grid per step]. Scales are stored so a
    vector can be decoded back for tests and debugging.
    """

    def __init__(self, width: int, height: int, horizon: int,
                 max_seats: int = 6, max_trunk: int = 8,
                 supply_scale: float = 10.0, demand_scale: float = 5.0):
        if horizon < 1:
            raise DispatchError("forecast horizon must be >= 1")
        self.width = width
        self.height = height
        self.horizon = horizon
        self.n_zones = width * height
        self.max_seats = max_seats
        self.max_trunk = max_trunk
        self.supply_scale = supply_scale
        self.demand_scale = demand_scale

    @property
    def length(self) -> int:
        return 4 + 2 * self.horizon * self.n_zones

    def layout(self) -> dict:
        return {"width": self.width, "height": self.height, "horizon": self.horizon,
                "max_seats": self.max_seats, "max_trunk": self.max_trunk,
                "supply_scale": self.supply_scale, "demand_scale": self.demand_scale}

    def encode(self, zone: int, free_seats: int, free_trunk: int,
               supply: np.ndarray, demand: np.ndarray) -> np.ndarray:
        supply = np.asarray(supply, dtype=float)
        demand = np.asarray(demand, dtype=float)
        if supply.shape != (self.horizon, self.n_zones) or demand.shape != (self.horizon, self.n_zones):
            raise DispatchError(
                f"forecast shape mismatch: want {(self.horizon, self.n_zones)}, "
                f"got supply {supply.shape} demand {demand.shape}")
        row, col = divmod(zone, self.width)
        vec = np.empty(self.length)
        vec[0] = col / max(self.width - 1, 1)
        vec[1] = row / max(self.height - 1, 1)
        vec[2] = free_seats / max(self.max_seats, 1)
        vec[3] = free_trunk / max(self.max_trunk, 1)
        n = self.horizon * self.n_zones
        vec[4:4 + n] = supply.ravel() / self.supply_scale
        vec[4 + n:] = demand.ravel() / self.demand_scale
        return vec

    def decode(self, vec: np.ndarray) -> dict:
        n = self.horizon * self.n_zones
        col = round(vec[0] * max(self.width - 1, 1))
        row = round(vec[1] * max(self.height - 1, 1))
        return {
            "zone": int(row * self.width + col),
            "free_seats": int(round(vec[2] * max(self.max_seats, 1))),
            "free_trunk": int(round(vec[3] * max(self.max_trunk, 1))),
            "supply": vec[4:4 + n].reshape(self.horizon, self.n_zones) * self.supply_scale,
            "demand": vec[4 + n:].reshape(self.horizon, self.n_zones) * self.demand_scale,
        }


class ActionGrid:
    """Square dispatch neighborhood: action index -> target zone offset.

    Offsets run row-major over a (2r+1)^2 block centered on the vehicle,
    so valid actions enumerate target zones in ascending zone-id order.
    """

    def __init__(self, width: int, height: int, radius: int = 3):
        self.width = width
        self.height = height
        self.radius = radius
        self.offsets = [(dr, dc)
                        for dr in range(-radius, radius + 1)
                        for dc in range(-radius, radius + 1)]

    @property
    def n_actions(self) -> int:
        return len(self.offsets)

    def valid_mask(self, zone: int) -> np.ndarray:
        row, col = divmod(zone, self.width)
        mask = np.zeros(self.n_actions, dtype=bool)
        for i, (dr, dc) in enumerate(self.offsets):
            r, c = row + dr, col + dc
            mask[i] = 0 <= r < self.height and 0 <= c < self.width
        return mask

    def target_zone(self, zone: int, action: int) -> int:
        row, col = divmod(zone, self.width)
        dr, dc = self.offsets[action]
        r, c = row + dr, col + dc
        if not (0 <= r < self.height and 0 <= c < self.width):
            raise DispatchError(f"action {action} leaves the grid from zone {zone}")
        return r * self.width + c


# ---------------------------------------------------------------------------
# Q function
# ---------------------------------------------------------------------------

@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    next_mask: np.ndarray


class ReplayBuffer:
    """Bounded FIFO store of transitions; oldest entries evict first."""

    def __init__(self, capacity: int = 5000):
        self.buf: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.buf)

    def push(self, tr: Transition) -> None:
        self.buf.append(tr)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        idx = rng.integers(0, len(self.buf), size=batch_size)
        return [self.buf[int(i)] for i in idx]


class QFunction:
    """Fully connected action-value network with hand-rolled backprop.

    tanh hidden layers, linear output, Adam updates. ``predict`` is
    deterministic given the parameters.
    """

    def __init__(self, n_features: int, n_actions: int, hidden: tuple[int, ...] = (64, 64),
                 lr: float = 1e-3, seed: int = 0):
        self.n_features = n_features
        self.n_actions = n_actions
        self.hidden = tuple(hidden)
        self.lr = lr
        rng = np.random.default_rng(seed)
        dims = [n_features, *self.hidden, n_actions]
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for din, dout in zip(dims, dims[1:]):
            scale = 1.0 / np.sqrt(din)
            self.weights.append(rng.uniform(-scale, scale, size=(din, dout)))
            self.biases.append(np.zeros(dout))
        self._adam_m = [np.zeros_like(p) for p in self._params()]
        self._adam_v = [np.zeros_like(p) for p in self._params()]
        self._adam_t = 0

    # -- parameter plumbing -------------------------------------------
    def _params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self._params()])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p in self._params():
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self._params())

    # -- forward / backward -------------------------------------------
    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        h = np.atleast_2d(x)
        acts = [h]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < len(self.weights) - 1:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Q-values for one state (1-D in, 1-D out) or a batch (2-D)."""
        out, _ = self._forward(x)
        return out[0] if np.ndim(x) == 1 else out

    def loss_and_grad(self, states: np.ndarray, actions: np.ndarray,
                      targets: np.ndarray) -> tuple[float, list[np.ndarray]]:
        """Mean squared error on the chosen actions and its parameter gradient."""
        out, acts = self._forward(states)
        n = out.shape[0]
        picked = out[np.arange(n), actions]
        err = picked - targets
        loss = float(np.mean(err ** 2))
        dout = np.zeros_like(out)
        dout[np.arange(n), actions] = 2.0 * err / n
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        delta = dout
        for i in range(len(self.weights) - 1, -1, -1):
            a_in = acts[i]
            grads[2 * i] = a_in.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - acts[i] ** 2)
        return loss, grads

    def apply_grads(self, grads: list[np.ndarray]) -> None:
        self._adam_t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        for p, g, m, v in zip(self._params(), grads, self._adam_m, self._adam_v):
            m[...] = b1 * m + (1 - b1) * g
            v[...] = b2 * v + (1 - b2) * g ** 2
            mhat = m / (1 - b1 ** self._adam_t)
            vhat = v / (1 - b2 ** self._adam_t)
            p -= self.lr * mhat / (np.sqrt(vhat) + eps)

    def train_step(self, batch: list[Transition], gamma: float) -> float:
        """One gradient step on the one-step TD objective; returns pre-step loss."""
        if not batch:
            raise DispatchError("train_step needs a nonempty batch")
        states = np.stack([t.state for t in batch])
        actions = np.array([t.action for t in batch])
        rewards = np.array([t.reward for t in batch])
        next_states = np.stack([t.next_state for t in batch])
        next_q = self.predict(next_states)
        masked = np.where(np.stack([t.next_mask for t in batch]), next_q, -np.inf)
        targets = rewards + gamma * masked.max(axis=1)
        loss, grads = self.loss_and_grad(states, actions, targets)
        self.apply_grads(grads)
        return loss

    # -- persistence ----------------------------------------------------
    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for i in range(len(self.weights)):
            self.weights[i][...] = arrays[f"w{i}"]
            self.biases[i][...] = arrays[f"b{i}"]


def train_step(q: QFunction, batch: list[Transition], gamma: float) -> float:
    return q.train_step(batch, gamma)


# ---------------------------------------------------------------------------
# action selection, rewards, ranking
# ---------------------------------------------------------------------------

def select_action(q: QFunction, state: np.ndarray, mask: np.ndarray,
                  epsilon: float = 0.0, rng: np.random.Generator | None = None) -> int:
    """Epsilon-greedy action over the valid neighborhood.

    Greedy ties resolve to the first valid action, which by the
    ActionGrid layout is the lowest target zone id.
    """
    if not (0.0 <= epsilon <= 1.0):
        raise DispatchError("epsilon must lie in [0, 1]")
    valid = np.flatnonzero(mask)
    if len(valid) == 0:
        raise DispatchError("no valid actions")
    if epsilon > 0.0 and rng is not None and rng.random() < epsilon:
        return int(rng.choice(valid))
    values = q.predict(state)
    best = valid[0]
    best_v = values[best]
    for a in valid[1:]:
        if values[a] > best_v + 1e-12:
            best_v = values[a]
            best = a
    return int(best)


@dataclass
class RewardWeights:
    """Linear reward combination and discount for the dispatch learner."""

    service: float = 1.0       # weight on orders carried (passengers + packages)
    detour: float = 0.1        # penalty per detour/hop minute
    delay: float = 0.1         # penalty per weighted extra travel minute
    profit: float = 0.5        # reward per unit profit
    activation: float = 1.0    # penalty for newly activating a vehicle
    gamma: float = 0.95
    urgency_passenger: float = 1.0
    urgency_goods: float = 0.5
    printed_signs: bool = False  # flips profit/activation back to the raw form

    def validate(self) -> None:
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")


@dataclass
class StepSummary:
    """Per-vehicle accounting for one step, input to the reward."""

    passengers: int = 0          # passengers being carried
    packages: int = 0            # packages being carried
    detour_min: float = 0.0      # minutes spent hopping / detouring for extras
    extra_time_min: float = 0.0  # urgency-weighted extra travel minutes over solo service
    profit: float = 0.0          # earnings minus fuel this step
    activated: bool = False      # vehicle entered the market this step


def compute_reward(summary: StepSummary, weights: RewardWeights) -> tuple[float, dict]:
    """Weighted reward and its per-term breakdown for metric logging."""
    served = weights.service * (summary.passengers + summary.packages)
    detour = -weights.detour * summary.detour_min
    delay = -weights.delay * summary.extra_time_min
    act = 1.0 if summary.activated else 0.0
    if weights.printed_signs:
        profit = -weights.profit * summary.profit
        activation = weights.activation * act
    else:
        profit = weights.profit * summary.profit
        activation = -weights.activation * act
    parts = {"served": served, "detour": detour, "delay": delay,
             "profit": profit, "activation": activation}
    return served + detour + delay + profit + activation, parts


@dataclass
class HotspotRanking:
    """Zones ordered by expected value; the top-k set rides surcharge-free."""

    order: list[int]
    top: set[int] = field(default_factory=set)

    def __post_init__(self):
        self._rank = {z: i for i, z in enumerate(self.order)}

    @property
    def n_zones(self) -> int:
        return len(self.order)

    def rank_of(self, zone: int) -> int:
        return self._rank[zone]

    def is_hot(self, zone: int) -> bool:
        return zone in self.top


def rank_zones(q, encoder: StateEncoder, action_grid: ActionGrid,
               free_seats: int, free_trunk: int, supply: np.ndarray,
               demand: np.ndarray, top_k: int) -> HotspotRanking:
    """Order all zones by their best achievable Q-value for a template vehicle.

    A probe state is evaluated from every zone; ranking ties break on the
    lower zone id. The first ``top_k`` zones become the hot set.
    """
    states = np.stack([encoder.encode(z, free_seats, free_trunk, supply, demand)
                       for z in range(encoder.n_zones)])
    values = q.predict(states)
    scores = np.empty(encoder.n_zones)
    for z in range(encoder.n_zones):
        mask = action_grid.valid_mask(z)
        scores[z] = values[z][mask].max()
    order = sorted(range(encoder.n_zones), key=lambda z: (-scores[z], z))
    return HotspotRanking(order=order, top=set(order[:top_k]))


def demand_ranking(demand: np.ndarray, top_k: int) -> HotspotRanking:
    """Forecast-only zone ranking used when no Q-function is available."""
    totals = np.asarray(demand).sum(axis=0)
    order = sorted(range(len(totals)), key=lambda z: (-totals[z], z))
    return HotspotRanking(order=order, top=set(order[:top_k]))


# ---------------------------------------------------------------------------
# dispatch policies
# ---------------------------------------------------------------------------

class DqnPolicy:
    """Greedy (or epsilon-greedy while training) policy over the Q-network."""

    name = "dqn"

    def __init__(self, q: QFunction, encoder: StateEncoder, action_grid: ActionGrid):
        self.q = q
        self.encoder = encoder
        self.grid = action_grid

    def choose(self, zone: int, free_seats: int, free_trunk: int, supply, demand,
               epsilon: float, rng: np.random.Generator) -> tuple[int, np.ndarray, int]:
        state = self.encoder.encode(zone, free_seats, free_trunk, supply, demand)
        mask = self.grid.valid_mask(zone)
        action = select_action(self.q, state, mask, epsilon, rng)
        return self.grid.target_zone(zone, action), state, action


class RandomPolicy:
    """Uniform choice over the valid dispatch neighborhood."""

    name = "random"

    def __init__(self, action_grid: ActionGrid):
        self.grid = action_grid

    def choose(self, zone: int, free_seats: int, free_trunk: int, supply, demand,
               epsilon: float, rng: np.random.Generator) -> tuple[int, None, int]:
        valid = np.flatnonzero(self.grid.valid_mask(zone))
        action = int(rng.choice(valid))
        return self.grid.target_zone(zone, action), None, action


class NearestDemandPolicy:
    """Head for the neighborhood zone with the highest forecast demand."""

    name = "nearest-demand"

    def __init__(self, action_grid: ActionGrid):
        self.grid = action_grid

    def choose(self, zone: int, free_seats: int, free_trunk: int, supply, demand,
               epsilon: float, rng: np.random.Generator) -> tuple[int, None, int]:
        totals = np.asarray(demand).sum(axis=0)
        valid = np.flatnonzero(self.grid.valid_mask(zone))
        best = valid[0]
        best_v = totals[self.grid.target_zone(zone, best)]
        for a in valid[1:]:
            v = totals[self.grid.target_zone(zone, a)]
            if v > best_v + 1e-12:
                best_v = v
                best = a
        return self.grid.target_zone(zone, int(best)), None, int(best)


def dispatch_idle(vehicles: list, policy, supply: np.ndarray, demand: np.ndarray,
                  epsilon: float, rng: np.random.Generator) -> dict[int, tuple[int, object, int]]:
    """Choose a dispatch target per vehicle, independently of the others.

    Returns {vehicle id: (target zone, state or None, action index)}.
    Decisions only read shared snapshots, so ordering cannot change any
    single vehicle's choice (randomness is consumed in vehicle-id order).
    """
    out = {}
    for v in sorted(vehicles, key=lambda v: v.id):
        out[v.id] = policy.choose(v.location, v.free_seats, v.free_trunk,
                                  supply, demand, epsilon, rng)
    return out
