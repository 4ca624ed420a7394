//! Binary sum tree over non-negative leaf weights.
//!
//! Internal nodes are always recomputed from their two children rather than
//! patched with deltas, so every node equals the sum of its children up to a
//! single rounding.

#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    len: usize,
    size: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(len: usize) -> Self {
        Self::from_leaves(&vec![0.0; len])
    }

    pub fn from_leaves(leaves: &[f64]) -> Self {
        assert!(!leaves.is_empty(), "sum tree needs at least one leaf");
        let len = leaves.len();
        let size = len.next_power_of_two();
        let mut nodes = vec![0.0; 2 * size];
        nodes[size..size + len].copy_from_slice(leaves);
        for k in (1..size).rev() {
            nodes[k] = nodes[2 * k] + nodes[2 * k + 1];
        }
        Self { len, size, nodes }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn leaf(&self, i: usize) -> f64 {
        self.nodes[self.size + i]
    }

    /// All nodes in heap order; index 0 is unused and index 1 is the root.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn set(&mut self, i: usize, value: f64) {
        debug_assert!(value >= 0.0 && value.is_finite());
        let mut k = self.size + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative-weight interval contains `mass`, for `mass` in `[0, total)`.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut k = 1;
        while k < self.size {
            let left = self.nodes[2 * k];
            let right = self.nodes[2 * k + 1];
            if mass < left || right <= 0.0 {
                k *= 2;
            } else {
                mass -= left;
                k = 2 * k + 1;
            }
        }
        (k - self.size).min(self.len - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_leaf() {
        let t = SumTree::from_leaves(&[2.5]);
        assert_eq!(t.total(), 2.5);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(2.4), 0);
    }

    #[test]
    fn find_walks_prefix_sums() {
        let t = SumTree::from_leaves(&[1.0, 0.0, 2.0, 3.0, 4.0]);
        assert_eq!(t.total(), 10.0);
        assert_eq!(t.find(0.5), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(2.99), 2);
        assert_eq!(t.find(3.0), 3);
        assert_eq!(t.find(9.999), 4);
        // rounding past the end still lands on a weighted leaf
        assert_eq!(t.find(10.0), 4);
    }

    #[test]
    fn set_keeps_parents_consistent() {
        let mut t = SumTree::from_leaves(&[1.0, 2.0, 3.0]);
        t.set(1, 10.0);
        assert_eq!(t.total(), 14.0);
        assert_eq!(t, SumTree::from_leaves(&[1.0, 10.0, 3.0]));
    }
}
