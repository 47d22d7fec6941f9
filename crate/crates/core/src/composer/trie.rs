use std::collections::BTreeMap;

use super::TagSignature;
use crate::tagger::ConceptId;

/// Prefix tree over sorted tag subsets. A node's count is the number of
/// images whose common tags include the path from the root to that node.
#[derive(Debug, Default)]
pub(super) struct SubsetTrie {
    nodes: Vec<Node>,
}

#[derive(Debug, Default)]
struct Node {
    count: u32,
    children: Vec<(ConceptId, u32)>,
}

impl SubsetTrie {
    pub(super) fn new() -> Self {
        SubsetTrie {
            nodes: vec![Node::default()],
        }
    }

    /// Adds one to every nonempty subset of `sorted_tags`. Subsets are
    /// visited as increasing sequences, so each appears exactly once.
    pub(super) fn add_powerset(&mut self, sorted_tags: &[ConceptId]) {
        debug_assert!(sorted_tags.windows(2).all(|w| w[0] < w[1]));
        self.visit(0, sorted_tags);
    }

    fn visit(&mut self, node: usize, rest: &[ConceptId]) {
        for (j, &tag) in rest.iter().enumerate() {
            let child = self.child(node, tag);
            self.nodes[child].count += 1;
            self.visit(child, &rest[j + 1..]);
        }
    }

    fn child(&mut self, node: usize, tag: ConceptId) -> usize {
        match self.nodes[node].children.binary_search_by_key(&tag, |&(t, _)| t) {
            Ok(pos) => self.nodes[node].children[pos].1 as usize,
            Err(pos) => {
                let id = self.nodes.len();
                self.nodes.push(Node::default());
                self.nodes[node].children.insert(pos, (tag, id as u32));
                id
            }
        }
    }

    /// Every subset counted at least `min_count` times. Supersets never
    /// outnumber their subsets, so a node below the threshold prunes its
    /// whole subtree.
    pub(super) fn collect(&self, min_count: u32) -> BTreeMap<TagSignature, u32> {
        let mut out = BTreeMap::new();
        let mut path = Vec::new();
        self.collect_from(0, min_count, &mut path, &mut out);
        out
    }

    fn collect_from(
        &self,
        node: usize,
        min_count: u32,
        path: &mut Vec<ConceptId>,
        out: &mut BTreeMap<TagSignature, u32>,
    ) {
        for &(tag, child) in &self.nodes[node].children {
            let count = self.nodes[child as usize].count;
            if count < min_count {
                continue;
            }
            path.push(tag);
            out.insert(TagSignature(path.clone()), count);
            self.collect_from(child as usize, min_count, path, out);
            path.pop();
        }
    }
}
