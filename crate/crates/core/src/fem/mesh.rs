use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positions closer than this (relative to the local element width) to a node are
/// treated as lying on it.
const NODE_SNAP: f64 = 1e-12;

/// Which element owns a point that lies exactly on an interior node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSide {
    Left,
    #[default]
    Right,
}

/// Nodes of a 1D mesh on [0, 1]; element `e` spans `nodes[e]..nodes[e + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    nodes: Vec<f64>,
}

impl Mesh1D {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidMesh("need at least two nodes".into()));
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(Error::InvalidMesh("mesh must start at 0 and end at 1".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidMesh("node positions must be strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn uniform(elements: usize) -> Result<Self> {
        if elements == 0 {
            return Err(Error::InvalidMesh("need at least one element".into()));
        }
        let n = elements as f64;
        Self::new((0..=elements).map(|i| i as f64 / n).collect())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn element_width(&self, e: usize) -> f64 {
        self.nodes[e + 1] - self.nodes[e]
    }

    pub fn min_element_width(&self) -> f64 {
        (0..self.element_count()).map(|e| self.element_width(e)).fold(f64::INFINITY, f64::min)
    }

    /// Element containing `x` and the local coordinate `t` in [0, 1] within it.
    pub fn locate(&self, x: f64, side: NodeSide) -> Result<(usize, f64)> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("position {x} lies outside the mesh [0, 1]")));
        }
        let last = self.element_count() - 1;
        // first node strictly greater than x
        let upper = self.nodes.partition_point(|&n| n <= x);
        let mut e = upper.saturating_sub(1).min(last);
        let h = self.element_width(e);
        // snap onto nearby nodes so that roundoff cannot flip the element choice
        if e < last && (self.nodes[e + 1] - x) <= NODE_SNAP * h {
            e += 1;
        }
        let on_left_node = (x - self.nodes[e]).abs() <= NODE_SNAP * self.element_width(e);
        if on_left_node && e > 0 && side == NodeSide::Left {
            return Ok((e - 1, 1.0));
        }
        if on_left_node {
            return Ok((e, 0.0));
        }
        let t = (x - self.nodes[e]) / self.element_width(e);
        Ok((e, t.clamp(0.0, 1.0)))
    }

    /// Index of the node at `x`, if `x` is (numerically) a node.
    pub fn node_at(&self, x: f64) -> Option<usize> {
        let (e, t) = self.locate(x, NodeSide::Right).ok()?;
        if t == 0.0 {
            Some(e)
        } else if t == 1.0 {
            Some(e + 1)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_meshes() {
        assert!(Mesh1D::new(vec![0.0]).is_err());
        assert!(Mesh1D::new(vec![0.0, 0.5]).is_err());
        assert!(Mesh1D::new(vec![0.0, 0.6, 0.4, 1.0]).is_err());
        assert!(Mesh1D::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(Mesh1D::uniform(0).is_err());
    }

    #[test]
    fn locate_follows_node_convention() {
        let mesh = Mesh1D::uniform(4).unwrap();
        assert_eq!(mesh.locate(0.0, NodeSide::Right).unwrap(), (0, 0.0));
        assert_eq!(mesh.locate(0.0, NodeSide::Left).unwrap(), (0, 0.0));
        assert_eq!(mesh.locate(0.5, NodeSide::Right).unwrap(), (2, 0.0));
        assert_eq!(mesh.locate(0.5, NodeSide::Left).unwrap(), (1, 1.0));
        assert_eq!(mesh.locate(1.0, NodeSide::Right).unwrap(), (3, 1.0));
        let (e, t) = mesh.locate(0.375, NodeSide::Right).unwrap();
        assert_eq!(e, 1);
        assert!((t - 0.5).abs() < 1e-15);
        assert!(mesh.locate(1.01, NodeSide::Right).is_err());
    }

    #[test]
    fn node_lookup_snaps() {
        let mesh = Mesh1D::uniform(10).unwrap();
        assert_eq!(mesh.node_at(0.3), Some(3));
        assert_eq!(mesh.node_at(0.7), Some(7));
        assert_eq!(mesh.node_at(0.35), None);
        assert_eq!(mesh.node_at(1.0), Some(10));
    }
}
