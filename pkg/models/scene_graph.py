"""
Scene Graph Model

Layered household representation: floors contain rooms, rooms contain items
and agents (agents live in the item layer), semantic edges relate nodes at a
given timestep. Models are frozen; invariants across nodes are checked by
core.scene_graph.validate_hierarchy rather than on construction so that
invalid graphs can still be inspected.

Schema (JSON document):
    graph_id: Graph identifier
    timestep: Snapshot index t (>= 0, sequences start at 1)
    floors: [{id}]
    rooms: [{id, parent_floor, neighbors[]}]
    items: [{id, parent_room, category, accessible, states{}, affordable_actions[]}]
    agents: [{id, kind, parent_room, current_action, holding[]}]
    edges: [{source, target, relation}]
"""

from enum import Enum
from typing import Dict, Iterator, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field


class AgentKind(str, Enum):
    ROBOT = "robot"
    HUMAN = "human"


class FloorNode(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str


class RoomNode(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    parent_floor: str
    neighbors: Tuple[str, ...] = ()


class ItemNode(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    parent_room: str
    category: str
    accessible: bool = True
    states: Dict[str, str] = Field(default_factory=dict)
    affordable_actions: Tuple[str, ...] = ()

    def __hash__(self) -> int:
        return hash((self.id, self.parent_room, self.category))


class AgentNode(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    kind: AgentKind
    parent_room: str
    current_action: Optional[str] = None
    holding: Tuple[str, ...] = ()

    @property
    def is_robot(self) -> bool:
        return self.kind == AgentKind.ROBOT

    @property
    def is_human(self) -> bool:
        return self.kind == AgentKind.HUMAN


class SemanticEdge(BaseModel):
    model_config = ConfigDict(frozen=True)

    source: str
    target: str
    relation: str
    timestep: int = 0


class SceneGraph(BaseModel):
    model_config = ConfigDict(frozen=True)

    graph_id: str
    timestep: int = Field(ge=0)
    floors: Tuple[FloorNode, ...] = ()
    rooms: Tuple[RoomNode, ...] = ()
    items: Tuple[ItemNode, ...] = ()
    agents: Tuple[AgentNode, ...] = ()
    edges: Tuple[SemanticEdge, ...] = ()

    def __hash__(self) -> int:
        return hash((self.graph_id, self.timestep))

    def node_ids(self) -> List[str]:
        """All node identifiers in layer order (duplicates preserved)."""
        return (
            [floor.id for floor in self.floors]
            + [room.id for room in self.rooms]
            + [item.id for item in self.items]
            + [agent.id for agent in self.agents]
        )

    def room(self, room_id: str) -> Optional[RoomNode]:
        return next((room for room in self.rooms if room.id == room_id), None)

    def item(self, item_id: str) -> Optional[ItemNode]:
        return next((item for item in self.items if item.id == item_id), None)

    def agent(self, agent_id: str) -> Optional[AgentNode]:
        return next((agent for agent in self.agents if agent.id == agent_id), None)

    def humans(self) -> List[AgentNode]:
        return sorted((a for a in self.agents if a.is_human), key=lambda a: a.id)

    def items_in(self, room_id: str) -> List[ItemNode]:
        return [item for item in self.items if item.parent_room == room_id]


class SnapshotSequence(BaseModel):
    """Time-indexed snapshots SG_1 .. SG_tn of the same household."""

    model_config = ConfigDict(frozen=True)

    snapshots: Tuple[SceneGraph, ...] = ()

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self) -> Iterator[SceneGraph]:
        return iter(self.snapshots)

    @property
    def horizon(self) -> int:
        return self.snapshots[-1].timestep if self.snapshots else 0

    @property
    def latest(self) -> Optional[SceneGraph]:
        return self.snapshots[-1] if self.snapshots else None


class InteractionHistory(BaseModel):
    """Union of a human's incident edges and touched items over t = 1..tn."""

    model_config = ConfigDict(frozen=True)

    human_id: str
    horizon: int = 0
    edge_events: Tuple[Tuple[int, SemanticEdge], ...] = ()
    item_events: Tuple[Tuple[int, str], ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.edge_events and not self.item_events
