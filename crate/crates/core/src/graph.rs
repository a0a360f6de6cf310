//! Small graph utilities shared by validation and normal-tree construction.

use std::collections::VecDeque;

/// Disjoint-set forest with path halving and union by rank.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Joins the sets of `a` and `b`. Returns false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    /// Connected components as sorted lists of members, ordered by smallest member.
    pub fn components(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let r = self.find(i);
            by_root[r].push(i);
        }
        let mut comps: Vec<Vec<usize>> = by_root.into_iter().filter(|c| !c.is_empty()).collect();
        comps.sort_by_key(|c| c[0]);
        comps
    }
}

/// Path between `from` and `to` in a forest given as `(u, v)` edges.
/// Returns edge indices along the path, or `None` when they are not connected.
pub fn forest_path(n: usize, edges: &[(usize, usize)], from: usize, to: usize) -> Option<Vec<usize>> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, &(u, v)) in edges.iter().enumerate() {
        adj[u].push((v, i));
        adj[v].push((u, i));
    }
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(u) = queue.pop_front() {
        if u == to {
            let mut path = Vec::new();
            let mut cur = to;
            while let Some((p, e)) = prev[cur] {
                path.push(e);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for &(v, e) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                prev[v] = Some((u, e));
                queue.push_back(v);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_find_detects_cycles() {
        let mut ds = DisjointSet::new(4);
        assert!(ds.union(0, 1));
        assert!(ds.union(1, 2));
        assert!(!ds.union(0, 2));
        assert!(!ds.same(0, 3));
        assert_eq!(ds.components(), vec![vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn path_in_forest() {
        let edges = [(0, 1), (1, 2), (3, 4)];
        assert_eq!(forest_path(5, &edges, 0, 2), Some(vec![0, 1]));
        assert_eq!(forest_path(5, &edges, 2, 2), Some(vec![]));
        assert_eq!(forest_path(5, &edges, 0, 4), None);
    }
}
