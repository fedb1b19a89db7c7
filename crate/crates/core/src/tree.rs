//! Breadth-first unrolling of a graph neighbourhood into a rooted tree.
//!
//! Cycles are not cut: a vertex reached again is added as a fresh node, so
//! the same graph vertex can occupy several positions. A tree built with
//! depth `d` expands nodes whose depth is `< d`, which places its leaves at
//! most `d` hops from the target; `d = 0` gives the target alone.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};

/// Default cap on the number of nodes in a single unrolled tree.
pub const DEFAULT_NODE_LIMIT: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub vertex: VertexId,
    pub depth: usize,
    pub children: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnrollTree {
    nodes: Vec<TreeNode>,
    target: VertexId,
    depth_limit: usize,
}

impl UnrollTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn target(&self) -> VertexId {
        self.target
    }

    pub fn depth_limit(&self) -> usize {
        self.depth_limit
    }

    /// Node ids ordered so that every child precedes its parent; the root
    /// (node 0) comes last.
    pub fn postorder(&self) -> Vec<usize> {
        // BFS numbering gives parent < child, so descending ids suffice.
        (0..self.nodes.len()).rev().collect()
    }

    /// Node ids at exactly `depth`, in BFS order.
    pub fn layer(&self, depth: usize) -> impl Iterator<Item = &TreeNode> + '_ {
        self.nodes.iter().filter(move |n| n.depth == depth)
    }

    /// One line per node: `node_id TAB external_id TAB depth`, indented by depth.
    pub fn render(&self, g: &Graph) -> String {
        let mut out = String::new();
        for (id, n) in self.nodes.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}{}\t{}\t{}",
                "  ".repeat(n.depth),
                id,
                g.external_id(n.vertex),
                n.depth
            );
        }
        out
    }
}

/// Unrolls `g` around `target` to depth `d` with the default node cap.
pub fn build_tree(g: &Graph, target: VertexId, d: usize) -> Result<UnrollTree> {
    build_tree_with_limit(g, target, d, DEFAULT_NODE_LIMIT)
}

pub fn build_tree_with_limit(g: &Graph, target: VertexId, d: usize, node_limit: usize) -> Result<UnrollTree> {
    assert!(target.index() < g.vertex_count(), "target {target} not in graph");
    let mut nodes = vec![TreeNode {
        vertex: target,
        depth: 0,
        children: Vec::new(),
    }];
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        let depth = nodes[id].depth;
        if depth >= d {
            continue;
        }
        let vertex = nodes[id].vertex;
        for &w in g.out_neighbors(vertex) {
            let child = nodes.len();
            if child >= node_limit {
                return Err(Error::TreeTooLarge {
                    target: target.index(),
                    depth: d,
                    limit: node_limit,
                });
            }
            nodes.push(TreeNode {
                vertex: w,
                depth: depth + 1,
                children: Vec::new(),
            });
            nodes[id].children.push(child);
            queue.push_back(child);
        }
    }
    Ok(UnrollTree {
        nodes,
        target,
        depth_limit: d,
    })
}
