//! The view-graph data model: cameras as vertices (optionally annotated with
//! a gravity direction), relative-rotation measurements as edges.
//!
//! A constructed graph is immutable in practice and shareable across threads;
//! construction is single-threaded.

use crate::geometry::{gravity_alignment, Rotation3, UnitVector3};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use thiserror::Error;

pub type VertexId = u64;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("vertex {0} already exists")]
    DuplicateVertex(VertexId),
    #[error("edge ({0}, {1}) already exists")]
    DuplicateEdge(VertexId, VertexId),
    #[error("self-loop on vertex {0}")]
    SelfLoop(VertexId),
    #[error("edge endpoint {0} does not exist")]
    MissingVertex(VertexId),
    #[error("kappa must be positive, got {0}")]
    NonPositiveKappa(f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// A camera. `alignment` caches the gravity-alignment rotation and is present
/// exactly when `gravity` is.
#[derive(Debug, Clone)]
pub struct Vertex {
    pub id: VertexId,
    pub gravity: Option<UnitVector3>,
    pub alignment: Option<Rotation3>,
}

/// A relative-rotation measurement. `rel` maps frame `src` to frame `dst`;
/// the reverse measurement is its inverse. `kappa` is a precision weight.
#[derive(Debug, Clone)]
pub struct Edge {
    pub src: VertexId,
    pub dst: VertexId,
    pub rel: Rotation3,
    pub kappa: f64,
}

impl Edge {
    /// The measurement oriented to map frame `from` to the other endpoint.
    pub fn oriented_from(&self, from: VertexId) -> Rotation3 {
        if from == self.src {
            self.rel
        } else {
            debug_assert_eq!(from, self.dst);
            self.rel.transpose()
        }
    }

    pub fn other(&self, v: VertexId) -> VertexId {
        if v == self.src {
            self.dst
        } else {
            self.src
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentFilter {
    All,
    GravityOnly,
}

#[derive(Debug, Clone, Default)]
pub struct PoseGraph {
    vertices: BTreeMap<VertexId, Vertex>,
    edges: Vec<Edge>,
    pairs: HashSet<(VertexId, VertexId)>,
    adjacency: HashMap<VertexId, Vec<usize>>,
}

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(
        &mut self,
        id: VertexId,
        gravity: Option<UnitVector3>,
    ) -> Result<(), GraphError> {
        if self.vertices.contains_key(&id) {
            return Err(GraphError::DuplicateVertex(id));
        }
        let alignment = gravity.as_ref().map(gravity_alignment);
        self.vertices.insert(
            id,
            Vertex {
                id,
                gravity,
                alignment,
            },
        );
        Ok(())
    }

    /// Replaces the gravity annotation (and cached alignment) of a vertex.
    pub fn set_gravity(
        &mut self,
        id: VertexId,
        gravity: Option<UnitVector3>,
    ) -> Result<(), GraphError> {
        let v = self
            .vertices
            .get_mut(&id)
            .ok_or(GraphError::MissingVertex(id))?;
        v.alignment = gravity.as_ref().map(gravity_alignment);
        v.gravity = gravity;
        Ok(())
    }

    pub fn add_edge(
        &mut self,
        src: VertexId,
        dst: VertexId,
        rel: Rotation3,
        kappa: f64,
    ) -> Result<(), GraphError> {
        if src == dst {
            return Err(GraphError::SelfLoop(src));
        }
        if !self.vertices.contains_key(&src) {
            return Err(GraphError::MissingVertex(src));
        }
        if !self.vertices.contains_key(&dst) {
            return Err(GraphError::MissingVertex(dst));
        }
        if !(kappa > 0.0) {
            return Err(GraphError::NonPositiveKappa(kappa));
        }
        let key = (src.min(dst), src.max(dst));
        if !self.pairs.insert(key) {
            return Err(GraphError::DuplicateEdge(src, dst));
        }
        let idx = self.edges.len();
        self.edges.push(Edge {
            src,
            dst,
            rel,
            kappa,
        });
        self.adjacency.entry(src).or_default().push(idx);
        self.adjacency.entry(dst).or_default().push(idx);
        Ok(())
    }

    pub fn vertex(&self, id: VertexId) -> Option<&Vertex> {
        self.vertices.get(&id)
    }

    /// Vertices in ascending id order.
    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.values()
    }

    pub fn vertex_ids(&self) -> Vec<VertexId> {
        self.vertices.keys().copied().collect()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Neighbors of `id` with the connecting edges, in edge insertion order.
    pub fn neighbors(&self, id: VertexId) -> Vec<(VertexId, &Edge)> {
        self.adjacency
            .get(&id)
            .map(|idxs| {
                idxs.iter()
                    .map(|&e| {
                        let edge = &self.edges[e];
                        (edge.other(id), edge)
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn has_full_gravity(&self) -> bool {
        self.vertices.values().all(|v| v.gravity.is_some())
    }

    /// Maximal connected components of the (filtered) vertex set, ordered by
    /// smallest contained id. Under `GravityOnly`, vertices without gravity
    /// are excluded and edges count only when both endpoints have gravity.
    pub fn connected_components(&self, filter: ComponentFilter) -> Vec<BTreeSet<VertexId>> {
        let passes = |id: VertexId| match filter {
            ComponentFilter::All => true,
            ComponentFilter::GravityOnly => self.vertices[&id].gravity.is_some(),
        };
        let mut seen: BTreeSet<VertexId> = BTreeSet::new();
        let mut out = Vec::new();
        for &start in self.vertices.keys() {
            if !passes(start) || seen.contains(&start) {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut queue = VecDeque::from([start]);
            seen.insert(start);
            while let Some(v) = queue.pop_front() {
                comp.insert(v);
                if let Some(idxs) = self.adjacency.get(&v) {
                    for &e in idxs {
                        let other = self.edges[e].other(v);
                        if passes(other) && seen.insert(other) {
                            queue.push_back(other);
                        }
                    }
                }
            }
            out.push(comp);
        }
        // BTreeMap iteration already yields components in order of their
        // smallest id, but make the contract explicit.
        out.sort_by_key(|c| *c.iter().next().unwrap());
        out
    }

    /// The subgraph induced by `keep` (edges with both endpoints retained).
    pub fn induced_subgraph(&self, keep: &BTreeSet<VertexId>) -> PoseGraph {
        let mut g = PoseGraph::new();
        for (&id, v) in &self.vertices {
            if keep.contains(&id) {
                g.add_vertex(id, v.gravity).expect("fresh graph");
            }
        }
        for e in &self.edges {
            if keep.contains(&e.src) && keep.contains(&e.dst) {
                g.add_edge(e.src, e.dst, e.rel, e.kappa).expect("unique");
            }
        }
        g
    }
}
