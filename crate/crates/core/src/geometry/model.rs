use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Positions, Vec3, VertexId};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("duplicate vertex id {0}")]
    DuplicateVertex(VertexId),
    #[error("vertex ids must be dense from 0; missing {0}")]
    SparseIds(VertexId),
    #[error("{0} references unknown vertex {1}")]
    UnknownVertex(&'static str, VertexId),
    #[error("edge {0}-{1} has zero length")]
    ZeroLengthEdge(VertexId, VertexId),
    #[error("face must have at least 3 vertices")]
    DegenerateFace,
    #[error("non-finite position for vertex {0}")]
    NonFinite(VertexId),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
}

/// Shared wireframe document: vertex positions (meters), edges and faces.
#[derive(Debug, Clone, PartialEq)]
pub struct WireframeModel {
    pub vertices: Positions<f64>,
    pub edges: Vec<[VertexId; 2]>,
    pub faces: Vec<Vec<VertexId>>,
}

#[derive(Serialize, Deserialize)]
struct VertexRecord {
    id: VertexId,
    pos: Vec3<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    vertices: Vec<VertexRecord>,
    #[serde(default)]
    edges: Vec<[VertexId; 2]>,
    #[serde(default)]
    faces: Vec<Vec<VertexId>>,
}

impl WireframeModel {
    /// Validates ids, references and edge lengths.
    pub fn new(
        vertices: Positions<f64>,
        edges: Vec<[VertexId; 2]>,
        faces: Vec<Vec<VertexId>>,
    ) -> Result<Self, ModelError> {
        for (i, (&id, p)) in vertices.iter().enumerate() {
            if id.0 as usize != i {
                return Err(ModelError::SparseIds(VertexId(i as u32)));
            }
            if !p.is_finite() {
                return Err(ModelError::NonFinite(id));
            }
        }
        for &[a, b] in &edges {
            for v in [a, b] {
                if !vertices.contains_key(&v) {
                    return Err(ModelError::UnknownVertex("edge", v));
                }
            }
            if vertices[&a] == vertices[&b] {
                return Err(ModelError::ZeroLengthEdge(a, b));
            }
        }
        for face in &faces {
            if face.len() < 3 {
                return Err(ModelError::DegenerateFace);
            }
            if let Some(v) = face.iter().find(|v| !vertices.contains_key(v)) {
                return Err(ModelError::UnknownVertex("face", *v));
            }
        }
        Ok(Self { vertices, edges, faces })
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        let file: ModelFile = serde_json::from_str(s)?;
        Self::from_file_repr(file)
    }

    fn from_file_repr(file: ModelFile) -> Result<Self, ModelError> {
        let mut vertices = BTreeMap::new();
        for rec in file.vertices {
            if vertices.insert(rec.id, rec.pos).is_some() {
                return Err(ModelError::DuplicateVertex(rec.id));
            }
        }
        Self::new(vertices, file.edges, file.faces)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    fn file_repr(&self) -> ModelFile {
        ModelFile {
            vertices: self.vertices.iter().map(|(&id, &pos)| VertexRecord { id, pos }).collect(),
            edges: self.edges.clone(),
            faces: self.faces.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.file_repr()).expect("model serializes")
    }

    pub fn vertex_ids(&self) -> BTreeSet<VertexId> {
        self.vertices.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, id: VertexId) -> bool {
        self.vertices.contains_key(&id)
    }

    /// Same topology with new positions.
    pub fn with_positions(&self, vertices: Positions<f64>) -> Self {
        Self { vertices, edges: self.edges.clone(), faces: self.faces.clone() }
    }
}

impl Serialize for WireframeModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.file_repr().serialize(s)
    }
}

impl<'de> Deserialize<'de> for WireframeModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let file = ModelFile::deserialize(d)?;
        Self::from_file_repr(file).map_err(serde::de::Error::custom)
    }
}
