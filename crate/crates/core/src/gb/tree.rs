use serde::{Deserialize, Serialize};

use super::efb::BundleLayout;
use crate::decimal;
use crate::error::{Error, Result};

/// Binary regression tree. Rows go left when `x[feature] < threshold`;
/// missing values follow `default_left`.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        weight: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        default_left: bool,
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn leaf(weight: f64) -> Self {
        TreeNode::Leaf { weight }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight } => return *weight,
                TreeNode::Split { feature, threshold, default_left, left, right, .. } => {
                    let v = row[*feature];
                    let go_left = if v.is_nan() { *default_left } else { v < *threshold };
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.num_leaves() + right.num_leaves(),
        }
    }

    fn flatten(&self, out: &mut Vec<NodeRecord>) -> usize {
        let id = out.len();
        match self {
            TreeNode::Leaf { weight } => out.push(NodeRecord::Leaf { weight: *weight }),
            TreeNode::Split { feature, threshold, default_left, gain, left, right } => {
                out.push(NodeRecord::Leaf { weight: 0.0 });
                let l = left.flatten(out);
                let r = right.flatten(out);
                out[id] = NodeRecord::Split {
                    feature: *feature,
                    threshold: *threshold,
                    default_left: *default_left,
                    gain: *gain,
                    left: l,
                    right: r,
                };
            }
        }
        id
    }

    fn rebuild(nodes: &[NodeRecord], id: usize, depth: usize) -> Result<TreeNode> {
        let bad = || Error::Config(format!("malformed tree record at node {id}"));
        if depth > nodes.len() {
            return Err(bad());
        }
        match nodes.get(id).ok_or_else(bad)? {
            NodeRecord::Leaf { weight } => Ok(TreeNode::Leaf { weight: *weight }),
            NodeRecord::Split { feature, threshold, default_left, gain, left, right } => {
                if *left <= id || *right <= id {
                    return Err(bad());
                }
                Ok(TreeNode::Split {
                    feature: *feature,
                    threshold: *threshold,
                    default_left: *default_left,
                    gain: *gain,
                    left: Box::new(Self::rebuild(nodes, *left, depth + 1)?),
                    right: Box::new(Self::rebuild(nodes, *right, depth + 1)?),
                })
            }
        }
    }
}

/// Serialized node; children refer to positions in the same array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum NodeRecord {
    Split {
        feature: usize,
        #[serde(with = "decimal::scalar")]
        threshold: f64,
        default_left: bool,
        #[serde(with = "decimal::scalar")]
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        #[serde(with = "decimal::scalar")]
        weight: f64,
    },
}

impl Serialize for TreeNode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut nodes = Vec::new();
        self.flatten(&mut nodes);
        nodes.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TreeNode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let nodes = Vec::<NodeRecord>::deserialize(d)?;
        TreeNode::rebuild(&nodes, 0, 0).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleKind {
    /// Exact-greedy, depth-wise trees.
    Exact,
    /// Histogram, leaf-wise trees with GOSS and feature bundling.
    Histogram,
}

/// `prediction = base_score + η · Σ tree(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    #[serde(with = "decimal::scalar")]
    pub base_score: f64,
    #[serde(with = "decimal::scalar")]
    pub learning_rate: f64,
    pub kind: EnsembleKind,
    pub n_features: usize,
    /// Present when histogram training merged sparse features; trees then
    /// split on the bundled columns.
    pub layout: Option<BundleLayout>,
    pub trees: Vec<TreeNode>,
}

impl Ensemble {
    fn model_row<'a>(&self, row: &'a [f64]) -> std::borrow::Cow<'a, [f64]> {
        match &self.layout {
            Some(layout) => std::borrow::Cow::Owned(layout.encode_row(row)),
            None => std::borrow::Cow::Borrowed(row),
        }
    }

    /// Output of a single tree for a raw feature row.
    pub fn tree_output(&self, tree: &TreeNode, row: &[f64]) -> f64 {
        tree.predict(&self.model_row(row))
    }

    /// Raw outputs of every tree, in order.
    pub fn tree_outputs(&self, row: &[f64]) -> Vec<f64> {
        let r = self.model_row(row);
        self.trees.iter().map(|t| t.predict(&r)).collect()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.tree_outputs(row).iter().sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ensemble serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("ensemble document: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tree() -> TreeNode {
        TreeNode::Split {
            feature: 1,
            threshold: 0.5,
            default_left: false,
            gain: 3.25,
            left: Box::new(TreeNode::leaf(-1.0)),
            right: Box::new(TreeNode::Split {
                feature: 0,
                threshold: 2.0,
                default_left: true,
                gain: 0.1,
                left: Box::new(TreeNode::leaf(0.1)),
                right: Box::new(TreeNode::leaf(0.7)),
            }),
        }
    }

    #[test]
    fn routing_and_missing_values() {
        let t = sample_tree();
        assert_eq!(t.predict(&[0.0, 0.0]), -1.0);
        assert_eq!(t.predict(&[1.0, 0.5]), 0.1);
        assert_eq!(t.predict(&[3.0, 1.0]), 0.7);
        assert_eq!(t.predict(&[f64::NAN, 1.0]), 0.1);
        assert_eq!(t.predict(&[0.0, f64::NAN]), 0.1);
        assert_eq!(t.depth(), 2);
        assert_eq!(t.num_leaves(), 3);
    }

    #[test]
    fn json_round_trip() {
        let ens = Ensemble {
            base_score: 1.0 / 3.0,
            learning_rate: 0.05,
            kind: EnsembleKind::Exact,
            n_features: 2,
            layout: None,
            trees: vec![sample_tree(), TreeNode::leaf(1e-300)],
        };
        let back = Ensemble::from_json(&ens.to_json()).unwrap();
        assert_eq!(back, ens);
    }

    #[test]
    fn malformed_tree_rejected() {
        let text = r#"{"base_score":"0.0","learning_rate":"0.1","kind":"exact","n_features":1,"layout":null,
            "trees":[[{"feature":0,"threshold":"1.0","default_left":true,"gain":"1.0","left":0,"right":0}]]}"#;
        assert!(Ensemble::from_json(text).is_err());
    }
}
