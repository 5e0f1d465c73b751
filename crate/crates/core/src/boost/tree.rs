use serde::{Deserialize, Serialize};

/// One node of a regression tree. Trees are stored in preorder, so a split's
/// left child is always the next node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: u32,
        /// Samples with `x[feature] < threshold` go left.
        threshold: f64,
        gain: f64,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Index of the leaf `x` routes to.
    pub fn route(&self, x: &[f32]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    right,
                    ..
                } => {
                    i = if f64::from(x[feature as usize]) < threshold {
                        i + 1
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn leaf_value(&self, x: &[f32]) -> f64 {
        match self.nodes[self.route(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("route ends at a leaf"),
        }
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> (usize, usize) {
            // Returns (depth, index one past this subtree).
            match nodes[i] {
                Node::Leaf { .. } => (0, i + 1),
                Node::Split { .. } => {
                    let (dl, end_l) = walk(nodes, i + 1);
                    let (dr, end_r) = walk(nodes, end_l);
                    (1 + dl.max(dr), end_r)
                }
            }
        }
        walk(&self.nodes, 0).0
    }

    /// Checks the preorder layout: every split's right child starts right
    /// after its left subtree and every node is reachable exactly once.
    pub fn is_well_formed(&self, n_features: usize) -> bool {
        fn walk(nodes: &[Node], i: usize, nf: usize) -> Option<usize> {
            match *nodes.get(i)? {
                Node::Leaf { value } => value.is_finite().then_some(i + 1),
                Node::Split {
                    feature,
                    threshold,
                    right,
                    ..
                } => {
                    if feature as usize >= nf || threshold.is_nan() {
                        return None;
                    }
                    let end_l = walk(nodes, i + 1, nf)?;
                    if end_l != right as usize {
                        return None;
                    }
                    walk(nodes, end_l, nf)
                }
            }
        }
        walk(&self.nodes, 0, n_features) == Some(self.nodes.len())
    }
}

/// Binary builder node used during fitting, converted to preorder at the end.
#[derive(Debug, Clone)]
pub(crate) enum Draft {
    Split {
        feature: u32,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

pub(crate) fn to_preorder(drafts: &[Draft]) -> RegressionTree {
    fn emit(drafts: &[Draft], i: usize, out: &mut Vec<Node>) {
        match drafts[i] {
            Draft::Leaf(value) => out.push(Node::Leaf { value }),
            Draft::Split {
                feature,
                threshold,
                gain,
                left,
                right,
            } => {
                let at = out.len();
                out.push(Node::Leaf { value: 0.0 });
                emit(drafts, left, out);
                let r = out.len() as u32;
                emit(drafts, right, out);
                out[at] = Node::Split {
                    feature,
                    threshold,
                    gain,
                    right: r,
                };
            }
        }
    }
    let mut nodes = Vec::with_capacity(drafts.len());
    emit(drafts, 0, &mut nodes);
    RegressionTree { nodes }
}
