use serde::Serialize;

use super::NetworkCase;

/// Outcome of the radial-topology check over in-service branches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TopologyReport {
    pub connected: bool,
    /// No in-service loop.
    pub acyclic: bool,
    pub components: usize,
    pub in_service_branches: usize,
    /// First in-service branch (0-based) that closes a loop, if any.
    pub loop_branch: Option<usize>,
}

impl TopologyReport {
    /// Connected and loop-free: a spanning tree rooted at the slack bus.
    pub fn is_tree(&self) -> bool {
        self.connected && self.acyclic
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
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
}

pub fn validate_radial(case: &NetworkCase) -> TopologyReport {
    let n = case.bus_count();
    let mut set = DisjointSet::new(n);
    let mut components = n;
    let mut loop_branch = None;
    let mut in_service = 0;
    for (k, br) in case.branches().iter().enumerate() {
        if !br.in_service {
            continue;
        }
        in_service += 1;
        if set.union(br.from, br.to) {
            components -= 1;
        } else if loop_branch.is_none() {
            loop_branch = Some(k);
        }
    }
    TopologyReport {
        connected: components == 1,
        acyclic: loop_branch.is_none(),
        components,
        in_service_branches: in_service,
        loop_branch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_model::{builtin_ieee33, BranchRecord};

    #[test]
    fn ieee33_is_a_tree() {
        let case = builtin_ieee33();
        let report = validate_radial(&case);
        assert!(report.is_tree());
        assert_eq!(report.in_service_branches, 32);
    }

    #[test]
    fn tie_branch_closes_a_loop() {
        let case = builtin_ieee33();
        let (a, b) = (case.bus_index(8).unwrap(), case.bus_index(21).unwrap());
        let looped = case
            .with_branches(|br| br.push(BranchRecord::new(a, b, 2.0, 2.0)))
            .unwrap();
        let report = validate_radial(&looped);
        assert!(report.connected);
        assert!(!report.acyclic);
        assert!(!report.is_tree());
        assert_eq!(report.loop_branch, Some(32));
    }

    #[test]
    fn removing_branch_disconnects() {
        let case = builtin_ieee33();
        let (a, b) = (case.bus_index(5).unwrap(), case.bus_index(6).unwrap());
        let cut = case
            .with_branches(|br| br.retain(|x| !(x.from == a && x.to == b)))
            .unwrap();
        let report = validate_radial(&cut);
        assert!(!report.connected);
        assert_eq!(report.components, 2);
        assert!(!report.is_tree());
    }

    #[test]
    fn out_of_service_branch_is_ignored() {
        let case = builtin_ieee33();
        let opened = case.with_branches(|br| br[4].in_service = false).unwrap();
        assert!(!validate_radial(&opened).connected);
    }
}
