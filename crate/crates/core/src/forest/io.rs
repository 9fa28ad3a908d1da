use serde::{Deserialize, Serialize};

use super::{Forest, ForestError, Node};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NodeJson {
    pub id: String,
    #[serde(default)]
    pub latent: bool,
}

/// Wire form: `{"nodes":[{"id":"1","latent":false},...],"edges":[["1","a"],...]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ForestJson {
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<(String, String)>,
}

impl From<&Forest> for ForestJson {
    fn from(f: &Forest) -> Self {
        ForestJson {
            nodes: f.nodes().iter().map(|n| NodeJson { id: n.id.clone(), latent: n.latent }).collect(),
            edges: f.edge_ids().into_iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        }
    }
}

impl TryFrom<ForestJson> for Forest {
    type Error = ForestError;

    fn try_from(j: ForestJson) -> Result<Self, Self::Error> {
        let nodes = j.nodes.into_iter().map(|n| Node { id: n.id, latent: n.latent }).collect();
        Forest::new(nodes, &j.edges)
    }
}

impl Forest {
    pub fn from_json(s: &str) -> Result<Forest, ForestError> {
        let j: ForestJson = serde_json::from_str(s).map_err(|e| ForestError::Json(e.to_string()))?;
        Forest::try_from(j)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ForestJson::from(self)).expect("forest json")
    }
}
