"""Dynamic network structures: nodes, links, networks, and network sets.

Networks may overlap (share nodes); links belong to exactly one network.
Every element carries a state bag of named scalar attributes. The whole
system deep-clones with identical ids and states, which is what lets a
simulation branch one random initial condition into several independently
mutated copies. Ids are never reused after deletion, and neighbor
iteration is always in ascending node id, so simulations over these
structures are reproducible.
"""

from __future__ import annotations

import re
from typing import Iterable, Mapping, Optional

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class NetError(KeyError):
    """Unknown id, membership violation, or disallowed operation."""


def _check_state(state: Optional[Mapping]) -> dict:
    out = dict(state or {})
    for key, value in out.items():
        if not (isinstance(key, str) and _NAME_RE.match(key)):
            raise NetError(f"bad attribute name {key!r}")
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise NetError(f"bad attribute value for {key!r}: {value!r}")
    return out


class Node:
    __slots__ = ("id", "state", "membership")

    def __init__(self, node_id: int, state: dict):
        self.id = node_id
        self.state = state
        self.membership: set = set()  # net ids containing this node


class Link:
    __slots__ = ("id", "src", "dst", "directed", "state", "owner")

    def __init__(self, link_id: int, src: int, dst: int, directed: bool, state: dict, owner: int):
        self.id = link_id
        self.src = src
        self.dst = dst
        self.directed = directed
        self.state = state
        self.owner = owner


class Network:
    __slots__ = ("id", "members", "links", "state", "adj")

    def __init__(self, net_id: int, state: dict):
        self.id = net_id
        self.members: set = set()
        self.links: set = set()
        self.state = state
        self.adj: dict = {}  # node id -> set of incident link ids (this net)


class NetworkSet:
    """Container for overlapping networks with one shared id allocator;
    single-threaded by design (one run unit mutates it at a time)."""

    def __init__(self, allow_self_loops: bool = False):
        self.allow_self_loops = allow_self_loops
        self._next_id = 1
        self.nodes: dict = {}
        self.links: dict = {}
        self.nets: dict = {}

    def _alloc(self) -> int:
        out = self._next_id
        self._next_id += 1
        return out

    # -- lookups ---------------------------------------------------------

    def _net(self, net_id: int) -> Network:
        try:
            return self.nets[net_id]
        except KeyError:
            raise NetError(f"unknown network {net_id}") from None

    def _node(self, node_id: int) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise NetError(f"unknown node {node_id}") from None

    def _link(self, link_id: int) -> Link:
        try:
            return self.links[link_id]
        except KeyError:
            raise NetError(f"unknown link {link_id}") from None

    # -- construction ----------------------------------------------------

    def new_network(self, state: Optional[Mapping] = None) -> int:
        net = Network(self._alloc(), _check_state(state))
        self.nets[net.id] = net
        return net.id

    def add_node(self, net_id: int, state: Optional[Mapping] = None) -> int:
        net = self._net(net_id)
        node = Node(self._alloc(), _check_state(state))
        self.nodes[node.id] = node
        node.membership.add(net.id)
        net.members.add(node.id)
        net.adj[node.id] = set()
        return node.id

    def enroll_node(self, net_id: int, node_id: int) -> None:
        """Add an existing node to another network (overlap)."""
        net = self._net(net_id)
        node = self._node(node_id)
        node.membership.add(net.id)
        net.members.add(node.id)
        net.adj.setdefault(node.id, set())

    def add_link(
        self,
        net_id: int,
        src: int,
        dst: int,
        directed: bool = False,
        state: Optional[Mapping] = None,
    ) -> int:
        net = self._net(net_id)
        if src not in net.members:
            raise NetError(f"node {src} is not a member of network {net_id}")
        if dst not in net.members:
            raise NetError(f"node {dst} is not a member of network {net_id}")
        if src == dst and not self.allow_self_loops:
            raise NetError("self-loops are disabled (allow_self_loops=False)")
        link = Link(self._alloc(), src, dst, directed, _check_state(state), net.id)
        self.links[link.id] = link
        net.links.add(link.id)
        net.adj[src].add(link.id)
        net.adj[dst].add(link.id)
        return link.id

    # -- removal ---------------------------------------------------------

    def remove_link(self, link_id: int) -> None:
        link = self._link(link_id)
        net = self._net(link.owner)
        net.links.discard(link_id)
        net.adj[link.src].discard(link_id)
        net.adj[link.dst].discard(link_id)
        del self.links[link_id]

    def remove_node(self, net_id: int, node_id: int) -> None:
        """Remove from one network, cascading that network's incident
        links; the node survives in the store while any other network
        still contains it."""
        net = self._net(net_id)
        node = self._node(node_id)
        if node_id not in net.members:
            raise NetError(f"node {node_id} is not a member of network {net_id}")
        for link_id in sorted(net.adj.get(node_id, ())):
            self.remove_link(link_id)
        del net.adj[node_id]
        net.members.discard(node_id)
        node.membership.discard(net_id)
        if not node.membership:
            del self.nodes[node_id]

    def remove_network(self, net_id: int) -> None:
        net = self._net(net_id)
        for node_id in sorted(net.members):
            self.remove_node(net_id, node_id)
        del self.nets[net_id]

    # -- merge and clone -------------------------------------------------

    def merge(self, targets: Iterable[int]) -> int:
        """New network holding the union of the targets' members and fresh
        copies of all their links (parallel links are kept). Targets are
        left untouched."""
        target_ids = list(targets)
        if len(target_ids) < 2:
            raise NetError("merge needs at least 2 networks")
        if len(set(target_ids)) != len(target_ids):
            raise NetError("duplicate merge targets")
        nets = [self._net(t) for t in target_ids]
        merged_id = self.new_network()
        merged = self.nets[merged_id]
        for net in nets:
            for node_id in sorted(net.members):
                if node_id not in merged.members:
                    self.enroll_node(merged_id, node_id)
        for net in nets:
            for link_id in sorted(net.links):
                link = self.links[link_id]
                self.add_link(merged_id, link.src, link.dst, link.directed, dict(link.state))
        return merged_id

    def clone(self) -> "NetworkSet":
        """Deep, fully independent copy: identical ids, states, and
        topology; mutations never cross between the copies."""
        out = NetworkSet(self.allow_self_loops)
        out._next_id = self._next_id
        for node_id, node in self.nodes.items():
            copy = Node(node_id, dict(node.state))
            copy.membership = set(node.membership)
            out.nodes[node_id] = copy
        for link_id, link in self.links.items():
            out.links[link_id] = Link(link_id, link.src, link.dst, link.directed, dict(link.state), link.owner)
        for net_id, net in self.nets.items():
            copy = Network(net_id, dict(net.state))
            copy.members = set(net.members)
            copy.links = set(net.links)
            copy.adj = {n: set(s) for n, s in net.adj.items()}
            out.nets[net_id] = copy
        return out

    # -- queries ---------------------------------------------------------

    def networks(self) -> list:
        return sorted(self.nets)

    def members(self, net_id: int) -> list:
        return sorted(self._net(net_id).members)

    def net_links(self, net_id: int) -> list:
        return sorted(self._net(net_id).links)

    def membership(self, node_id: int) -> set:
        return set(self._node(node_id).membership)

    def incident_links(self, net_id: int, node_id: int) -> list:
        """Link ids touching the node within one network, ascending."""
        net = self._net(net_id)
        if node_id not in net.members:
            raise NetError(f"node {node_id} is not a member of network {net_id}")
        return sorted(net.adj.get(node_id, ()))

    def neighbors(self, net_id: int, node_id: int) -> list:
        """Adjacent nodes by any link, ascending node id, deduplicated."""
        out = set()
        for link_id in self.incident_links(net_id, node_id):
            link = self.links[link_id]
            out.add(link.dst if link.src == node_id else link.src)
        return sorted(out)

    def out_neighbors(self, net_id: int, node_id: int) -> list:
        """Targets of directed links from the node plus undirected
        neighbors, ascending node id."""
        out = set()
        for link_id in self.incident_links(net_id, node_id):
            link = self.links[link_id]
            if link.directed:
                if link.src == node_id:
                    out.add(link.dst)
            else:
                out.add(link.dst if link.src == node_id else link.src)
        return sorted(out)

    def degree(self, net_id: int, node_id: int) -> int:
        """Undirected incident links plus directed out-links, so per
        network: sum(degree) = 2*|undirected| + |directed|."""
        total = 0
        for link_id in self.incident_links(net_id, node_id):
            link = self.links[link_id]
            if link.directed:
                total += 1 if link.src == node_id else 0
            else:
                total += 2 if link.src == link.dst else 1
        return total

    # -- state access ----------------------------------------------------

    def node_state(self, node_id: int, key: str):
        return self._node(node_id).state[key]

    def set_node_state(self, node_id: int, key: str, value) -> None:
        self._node(node_id).state.update(_check_state({key: value}))

    def link_state(self, link_id: int, key: str):
        return self._link(link_id).state[key]

    def set_link_state(self, link_id: int, key: str, value) -> None:
        self._link(link_id).state.update(_check_state({key: value}))

    def net_state(self, net_id: int, key: str):
        return self._net(net_id).state[key]

    def set_net_state(self, net_id: int, key: str, value) -> None:
        self._net(net_id).state.update(_check_state({key: value}))

    # -- canonical serialization ------------------------------------------

    def to_text(self) -> str:
        """Canonical dump used for structural diffs: one element per line,
        ids ascending, attributes sorted by name."""

        def bag(state: dict) -> str:
            parts = []
            for key in sorted(state):
                value = state[key]
                text = f'"{value}"' if isinstance(value, str) else repr(value) if isinstance(value, float) else str(value)
                parts.append(f"{key}={text}")
            return (" " + " ".join(parts)) if parts else ""

        lines = []
        for node_id in sorted(self.nodes):
            lines.append(f"node {node_id}{bag(self.nodes[node_id].state)}")
        for link_id in sorted(self.links):
            link = self.links[link_id]
            kind = "d" if link.directed else "u"
            lines.append(f"link {link_id} {link.src} {link.dst} {kind} {link.owner}{bag(link.state)}")
        for net_id in sorted(self.nets):
            net = self.nets[net_id]
            members = ",".join(str(n) for n in sorted(net.members))
            lines.append(f"net {net_id} members={members}{bag(net.state)}")
        return "\n".join(lines) + "\n"
