"""Topology generation and random channel-gain realizations.

Propagation model: distance-based path loss with exponent alpha, log-normal
shadowing (dB), and optional unit-mean Rayleigh (exponential power) fading.
All gains are linear power gains normalized so that the reference distance
has unit gain and the receiver noise variance is 1.
"""

from dataclasses import dataclass

import numpy as np

FADING_RAYLEIGH = "rayleigh"
FADING_NONE = "none"


@dataclass(frozen=True)
class PropagationParams:
    path_loss_exponent: float = 3.5
    shadowing_std_db: float = 5.8
    reference_distance_km: float = 1.0
    fading: str = FADING_RAYLEIGH

    def __post_init__(self):
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be > 0")
        if self.shadowing_std_db < 0:
            raise ValueError("shadowing_std_db must be >= 0")
        if self.reference_distance_km <= 0:
            raise ValueError("reference_distance_km must be > 0")
        if self.fading not in (FADING_RAYLEIGH, FADING_NONE):
            raise ValueError(f"unknown fading model: {self.fading!r}")


@dataclass(frozen=True)
class Topology:
    """K source nodes and the per-user destinations on a square area (km).

    destination_positions may contain identical rows when users share a
    destination.
    """

    node_positions: np.ndarray         # (K, 2)
    destination_positions: np.ndarray  # (K, 2)
    area_side: float = 1.0

    def __post_init__(self):
        nodes = np.asarray(self.node_positions, dtype=float)
        dests = np.asarray(self.destination_positions, dtype=float)
        object.__setattr__(self, "node_positions", nodes)
        object.__setattr__(self, "destination_positions", dests)
        if nodes.ndim != 2 or nodes.shape[1] != 2 or nodes.shape[0] < 1:
            raise ValueError("node_positions must have shape (K, 2) with K >= 1")
        if dests.shape != nodes.shape:
            raise ValueError("destination_positions must match node_positions shape")
        for arr in (nodes, dests):
            if np.any(arr < 0) or np.any(arr > self.area_side):
                raise ValueError("all coordinates must lie in [0, area_side]^2")
        K = nodes.shape[0]
        internode = _pairwise_dist(nodes, nodes)
        if np.any(internode[~np.eye(K, dtype=bool)] <= 0):
            raise ValueError("distinct nodes must have strictly positive distance")
        if np.any(_pairwise_dist(nodes, dests) <= 0):
            raise ValueError("every node-destination distance must be strictly positive")

    @property
    def num_users(self) -> int:
        return self.node_positions.shape[0]

    def internode_distances(self) -> np.ndarray:
        """(K, K) matrix, entry (i, j) = distance node i -> node j (diag 0)."""
        return _pairwise_dist(self.node_positions, self.node_positions)

    def node_to_dest_distances(self) -> np.ndarray:
        """(K, K) matrix, entry (j, i) = distance node j -> destination of user i."""
        return _pairwise_dist(self.node_positions, self.destination_positions)


@dataclass(frozen=True)
class ChannelRealization:
    """One fading draw: linear power gains for all directed links.

    internode_gain[i, j]    phase-1 link source i -> node j (diagonal 0)
    node_to_dest_gain[j, i] phase-2 link node j -> destination of user i;
                            diagonal (i, i) is user i's direct link.
    """

    internode_gain: np.ndarray
    node_to_dest_gain: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.internode_gain, dtype=float)
        g = np.asarray(self.node_to_dest_gain, dtype=float)
        object.__setattr__(self, "internode_gain", f)
        object.__setattr__(self, "node_to_dest_gain", g)
        if f.shape != g.shape or f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise ValueError("gain matrices must be square and of equal shape")
        if np.any(f < 0) or np.any(g < 0):
            raise ValueError("gains must be nonnegative")
        if np.any(np.diag(f) != 0):
            raise ValueError("internode_gain diagonal must be exactly 0")

    @property
    def num_users(self) -> int:
        return self.internode_gain.shape[0]


def _pairwise_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def path_gain(distance_km, params: PropagationParams,
              shadowing_db=0.0, fading_power=1.0):
    """Linear power gain of one link.

    gain = (d / d_ref)^(-alpha) * 10^(shadowing_db / 10) * fading_power
    """
    distance_km = np.asarray(distance_km, dtype=float)
    if np.any(distance_km <= 0):
        raise ValueError("distance must be strictly positive")
    pl = (distance_km / params.reference_distance_km) ** (-params.path_loss_exponent)
    return pl * 10.0 ** (np.asarray(shadowing_db, dtype=float) / 10.0) * fading_power


def sample_realization(topology: Topology, params: PropagationParams,
                       seed) -> ChannelRealization:
    """Draw one channel realization; a pure function of (topology, params, seed).

    Draw order (fixed for reproducibility): internode shadowing (K, K),
    node-to-dest shadowing (K, K), then, if Rayleigh fading is enabled,
    internode fading (K, K) and node-to-dest fading (K, K). Shadowing is
    Normal(0, std^2) in dB; fading power is Exponential(mean 1). All directed
    links are independent; internode diagonal entries are forced to 0.
    """
    rng = np.random.default_rng(seed)
    K = topology.num_users
    sh_f = rng.normal(0.0, params.shadowing_std_db, size=(K, K))
    sh_g = rng.normal(0.0, params.shadowing_std_db, size=(K, K))
    if params.fading == FADING_RAYLEIGH:
        fad_f = rng.exponential(1.0, size=(K, K))
        fad_g = rng.exponential(1.0, size=(K, K))
    else:
        fad_f = np.ones((K, K))
        fad_g = np.ones((K, K))

    d_f = topology.internode_distances()
    d_g = topology.node_to_dest_distances()
    # off-diagonal only for internode links; diagonal is unused and set to 0
    f = np.zeros((K, K))
    off = ~np.eye(K, dtype=bool)
    f[off] = path_gain(d_f[off], params, sh_f[off], fad_f[off])
    g = path_gain(d_g, params, sh_g, fad_g)
    return ChannelRealization(internode_gain=f, node_to_dest_gain=g)


def paper_toy_topology() -> Topology:
    """4-user benchmark layout: shared destination at the origin."""
    nodes = np.array([[0.2, 0.5], [0.4, 0.3], [0.5, 0.8], [0.8, 0.6]])
    dests = np.zeros((4, 2))
    return Topology(node_positions=nodes, destination_positions=dests, area_side=1.0)


def random_topology(K: int, area_side: float, seed,
                    shared_destination=None) -> Topology:
    """Uniform random node placement on the square.

    shared_destination: (x, y) to place one common destination for all users;
    None draws an independent uniform destination per user. Degenerate
    (zero-distance) layouts are redrawn.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(seed)
    while True:
        nodes = rng.uniform(0.0, area_side, size=(K, 2))
        if shared_destination is not None:
            dests = np.tile(np.asarray(shared_destination, dtype=float), (K, 1))
        else:
            dests = rng.uniform(0.0, area_side, size=(K, 2))
        try:
            return Topology(node_positions=nodes, destination_positions=dests,
                            area_side=area_side)
        except ValueError:
            continue
