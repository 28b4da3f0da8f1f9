use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{Error, Result};

const NIL: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node {
    /// Sum of squared entries below this node. For a leaf, `value * value`.
    weight: f64,
    /// Signed entry; meaningful on leaves only.
    value: f64,
    children: [u32; 2],
}

/// A real vector stored as a pruned binary tree of squared magnitudes.
///
/// Leaves keep the signed entry and its square; each interior node keeps the
/// sum of its children's weights. Only subtrees containing a nonzero entry are
/// materialized, so a vector with `w` nonzeros costs `O(w log n)` nodes.
///
/// Reads, writes and `l2` samples walk a single root-to-leaf path; the norm is
/// read off the root.
pub struct SampleVector {
    len: usize,
    depth: u32,
    nodes: Vec<Node>,
    free: Vec<u32>,
    root: u32,
    nnz: usize,
    touches: AtomicU64,
}

impl Clone for SampleVector {
    fn clone(&self) -> Self {
        Self {
            len: self.len,
            depth: self.depth,
            nodes: self.nodes.clone(),
            free: self.free.clone(),
            root: self.root,
            nnz: self.nnz,
            touches: AtomicU64::new(self.touches.load(Ordering::Relaxed)),
        }
    }
}

impl std::fmt::Debug for SampleVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SampleVector")
            .field("len", &self.len)
            .field("nnz", &self.nnz)
            .field("norm2", &self.norm2())
            .finish()
    }
}

impl SampleVector {
    /// An all-zero vector of length `len`.
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidParameter { name: "len", reason: "vector length must be positive".into() });
        }
        let depth = len.next_power_of_two().trailing_zeros();
        Ok(Self { len, depth, nodes: Vec::new(), free: Vec::new(), root: NIL, nnz: 0, touches: AtomicU64::new(0) })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let mut v = Self::new(values.len())?;
        for (i, &x) in values.iter().enumerate() {
            if x != 0.0 {
                v.set(i, x)?;
            }
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.nnz == 0
    }

    /// Number of nonzero entries.
    pub fn nnz(&self) -> usize {
        self.nnz
    }

    /// Tree height: `ceil(log2(len))`.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Number of materialized tree nodes.
    pub fn node_count(&self) -> usize {
        self.nodes.len() - self.free.len()
    }

    /// Cumulative count of node reads and writes performed by `get`, `set`
    /// and `sample`.
    pub fn node_touches(&self) -> u64 {
        self.touches.load(Ordering::Relaxed)
    }

    pub fn reset_touches(&self) {
        self.touches.store(0, Ordering::Relaxed);
    }

    fn touch(&self, n: u64) {
        self.touches.fetch_add(n, Ordering::Relaxed);
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len {
            Err(Error::IndexOutOfRange { index: i, len: self.len })
        } else {
            Ok(())
        }
    }

    #[inline]
    fn branch(&self, i: usize, level: u32) -> usize {
        // level 0 is the root; the leaf sits at `depth`.
        (i >> (self.depth - 1 - level)) & 1
    }

    fn weight_of(&self, id: u32) -> f64 {
        if id == NIL {
            0.0
        } else {
            self.nodes[id as usize].weight
        }
    }

    fn alloc(&mut self) -> u32 {
        let node = Node { weight: 0.0, value: 0.0, children: [NIL, NIL] };
        match self.free.pop() {
            Some(id) => {
                self.nodes[id as usize] = node;
                id
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as u32
            }
        }
    }

    fn release(&mut self, id: u32) {
        self.free.push(id);
    }

    /// Squared norm, read from the root.
    pub fn norm2(&self) -> f64 {
        self.weight_of(self.root)
    }

    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    /// Reads entry `i`.
    pub fn get(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        let mut id = self.root;
        let mut touched = 0;
        for level in 0..self.depth {
            if id == NIL {
                break;
            }
            touched += 1;
            id = self.nodes[id as usize].children[self.branch(i, level)];
        }
        if id != NIL {
            touched += 1;
        }
        self.touch(touched.max(1));
        Ok(if id == NIL { 0.0 } else { self.nodes[id as usize].value })
    }

    /// Overwrites entry `i` with `value`.
    ///
    /// Ancestors are recomputed as the sum of their two children, so interior
    /// weights never accumulate drift from repeated deltas. Setting an entry to
    /// zero prunes every node left without a nonzero descendant.
    pub fn set(&mut self, i: usize, value: f64) -> Result<()> {
        self.check_index(i)?;
        if !value.is_finite() {
            return Err(Error::InvalidParameter {
                name: "value",
                reason: format!("entry must be finite, got {value}"),
            });
        }
        if value == 0.0 {
            self.clear(i);
            return Ok(());
        }

        let mut path = Vec::with_capacity(self.depth as usize + 1);
        if self.root == NIL {
            self.root = self.alloc();
        }
        let mut id = self.root;
        path.push(id);
        for level in 0..self.depth {
            let b = self.branch(i, level);
            let mut child = self.nodes[id as usize].children[b];
            if child == NIL {
                child = self.alloc();
                self.nodes[id as usize].children[b] = child;
            }
            id = child;
            path.push(id);
        }

        let leaf = &mut self.nodes[id as usize];
        if leaf.value == 0.0 {
            self.nnz += 1;
        }
        leaf.value = value;
        leaf.weight = value * value;

        let mut touched = path.len() as u64;
        for &node in path.iter().rev().skip(1) {
            let [l, r] = self.nodes[node as usize].children;
            self.nodes[node as usize].weight = self.weight_of(l) + self.weight_of(r);
            // one of the two children is on the path; the other is a read
            touched += 1;
        }
        self.touch(touched);
        Ok(())
    }

    /// Adds `delta` to entry `i`.
    pub fn add(&mut self, i: usize, delta: f64) -> Result<()> {
        let current = self.get(i)?;
        self.set(i, current + delta)
    }

    fn clear(&mut self, i: usize) {
        let mut path = Vec::with_capacity(self.depth as usize + 1);
        let mut id = self.root;
        for level in 0..self.depth {
            if id == NIL {
                break;
            }
            path.push(id);
            id = self.nodes[id as usize].children[self.branch(i, level)];
        }
        if id == NIL {
            self.touch(path.len().max(1) as u64);
            return;
        }
        path.push(id);
        let mut touched = path.len() as u64;
        self.nnz -= 1;

        // Walk up, dropping the emptied leaf and any ancestor left childless.
        let mut removed = true;
        self.release(id);
        for depth in (0..path.len() - 1).rev() {
            let node = path[depth];
            let b = self.branch(i, depth as u32);
            if removed {
                self.nodes[node as usize].children[b] = NIL;
            }
            let [l, r] = self.nodes[node as usize].children;
            touched += 1;
            if l == NIL && r == NIL {
                self.release(node);
                removed = true;
            } else {
                removed = false;
                self.nodes[node as usize].weight = self.weight_of(l) + self.weight_of(r);
            }
        }
        if removed {
            self.root = NIL;
        }
        self.touch(touched);
    }

    /// Draws `i` with probability `v_i^2 / ||v||^2`.
    ///
    /// One uniform in `[0, ||v||^2)` steers a single root-to-leaf walk, so the
    /// random stream consumed per draw does not depend on the vector length.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let total = self.norm2();
        if self.root == NIL || total <= 0.0 {
            return Err(Error::UndefinedDistribution("sampling from the zero vector"));
        }
        let mut u = rng.random::<f64>() * total;
        let mut id = self.root;
        let mut index = 0usize;
        let mut touched = 1u64;
        for _ in 0..self.depth {
            let [l, r] = self.nodes[id as usize].children;
            touched += 2;
            let wl = self.weight_of(l);
            let go_right = if l == NIL || wl <= 0.0 {
                true
            } else if r == NIL || self.weight_of(r) <= 0.0 {
                false
            } else {
                u >= wl
            };
            if go_right {
                if l != NIL {
                    u -= wl;
                }
                id = r;
                index = (index << 1) | 1;
            } else {
                id = l;
                index <<= 1;
            }
        }
        self.touch(touched);
        if index >= self.len {
            return Err(Error::Internal("sample walked past the vector length"));
        }
        Ok(index)
    }

    /// Probability that `sample` returns `i`, computed as the product of the
    /// branch probabilities along the path to leaf `i`.
    pub fn walk_probability(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        if self.root == NIL {
            return Err(Error::UndefinedDistribution("sampling from the zero vector"));
        }
        let mut id = self.root;
        let mut p = 1.0;
        for level in 0..self.depth {
            let node = &self.nodes[id as usize];
            let child = node.children[self.branch(i, level)];
            if child == NIL {
                return Ok(0.0);
            }
            p *= self.weight_of(child) / node.weight;
            id = child;
        }
        Ok(p)
    }

    /// Nonzero entries in increasing index order.
    pub fn nonzeros(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz);
        if self.root != NIL {
            self.collect(self.root, 0, 0, &mut out);
        }
        out
    }

    fn collect(&self, id: u32, level: u32, prefix: usize, out: &mut Vec<(usize, f64)>) {
        let node = &self.nodes[id as usize];
        if level == self.depth {
            out.push((prefix, node.value));
            return;
        }
        for (b, &child) in node.children.iter().enumerate() {
            if child != NIL {
                self.collect(child, level + 1, (prefix << 1) | b, out);
            }
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for (i, x) in self.nonzeros() {
            out[i] = x;
        }
        out
    }

    /// Recomputes every interior weight bottom-up from the leaves.
    pub fn rebuild(&mut self) {
        if self.root != NIL {
            self.rebuild_from(self.root, 0);
        }
    }

    fn rebuild_from(&mut self, id: u32, level: u32) -> f64 {
        if level == self.depth {
            let node = &mut self.nodes[id as usize];
            node.weight = node.value * node.value;
            return node.weight;
        }
        let [l, r] = self.nodes[id as usize].children;
        let mut w = 0.0;
        if l != NIL {
            w += self.rebuild_from(l, level + 1);
        }
        if r != NIL {
            w += self.rebuild_from(r, level + 1);
        }
        self.nodes[id as usize].weight = w;
        w
    }

    /// Walks the whole tree and checks that every interior weight matches the
    /// sum of its children within `rel_tol`, and every leaf weight is exactly
    /// its value squared.
    pub fn is_consistent(&self, rel_tol: f64) -> bool {
        self.root == NIL || self.consistent_from(self.root, 0, rel_tol)
    }

    fn consistent_from(&self, id: u32, level: u32, rel_tol: f64) -> bool {
        let node = &self.nodes[id as usize];
        if level == self.depth {
            return node.weight == node.value * node.value && node.value != 0.0;
        }
        let [l, r] = node.children;
        if l == NIL && r == NIL {
            return false;
        }
        let sum = self.weight_of(l) + self.weight_of(r);
        let ok = (node.weight - sum).abs() <= rel_tol * sum.abs().max(f64::MIN_POSITIVE);
        ok && (l == NIL || self.consistent_from(l, level + 1, rel_tol))
            && (r == NIL || self.consistent_from(r, level + 1, rel_tol))
    }
}
