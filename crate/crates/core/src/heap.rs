//! Indexed binary min-heap over node ids with in-place key updates.

use std::cmp::Ordering;

const ABSENT: usize = usize::MAX;

/// Min-heap of `(key, node)` with at most one live entry per node.
///
/// Ordering is by key, then by node id, so pops are deterministic.
#[derive(Debug, Clone)]
pub struct WavefrontHeap {
    entries: Vec<(f64, usize)>,
    pos: Vec<usize>,
}

#[inline]
fn less(a: &(f64, usize), b: &(f64, usize)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.1 < b.1,
    }
}

impl WavefrontHeap {
    /// Empty heap able to hold node ids in `0..capacity`.
    pub fn new(capacity: usize) -> Self {
        WavefrontHeap {
            entries: Vec::new(),
            pos: vec![ABSENT; capacity],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.pos[node] != ABSENT
    }

    pub fn key(&self, node: usize) -> Option<f64> {
        match self.pos[node] {
            ABSENT => None,
            i => Some(self.entries[i].0),
        }
    }

    pub fn peek(&self) -> Option<(f64, usize)> {
        self.entries.first().copied()
    }

    /// Inserts `node` or moves its entry to `key`, in either direction.
    pub fn set(&mut self, node: usize, key: f64) {
        match self.pos[node] {
            ABSENT => {
                self.entries.push((key, node));
                let i = self.entries.len() - 1;
                self.pos[node] = i;
                self.sift_up(i);
            }
            i => {
                let old = self.entries[i].0;
                self.entries[i].0 = key;
                if key < old {
                    self.sift_up(i);
                } else {
                    self.sift_down(i);
                }
            }
        }
    }

    /// Lowers the key of a live entry; larger keys are ignored.
    pub fn decrease_key(&mut self, node: usize, key: f64) {
        let i = self.pos[node];
        assert!(i != ABSENT, "decrease_key on node {node} which is not in the heap");
        if key < self.entries[i].0 {
            self.entries[i].0 = key;
            self.sift_up(i);
        }
    }

    pub fn pop(&mut self) -> Option<(f64, usize)> {
        if self.entries.is_empty() {
            return None;
        }
        let top = self.entries.swap_remove(0);
        self.pos[top.1] = ABSENT;
        if !self.entries.is_empty() {
            self.pos[self.entries[0].1] = 0;
            self.sift_down(0);
        }
        Some(top)
    }

    /// Drops the entry for `node` if present, returning its key.
    pub fn remove(&mut self, node: usize) -> Option<f64> {
        let i = self.pos[node];
        if i == ABSENT {
            return None;
        }
        let gone = self.entries.swap_remove(i);
        self.pos[node] = ABSENT;
        if i < self.entries.len() {
            let moved = self.entries[i].1;
            self.pos[moved] = i;
            self.sift_up(i);
            if self.pos[moved] == i {
                self.sift_down(i);
            }
        }
        Some(gone.0)
    }

    pub fn clear(&mut self) {
        for &(_, n) in &self.entries {
            self.pos[n] = ABSENT;
        }
        self.entries.clear();
    }

    fn swap(&mut self, i: usize, j: usize) {
        self.entries.swap(i, j);
        self.pos[self.entries[i].1] = i;
        self.pos[self.entries[j].1] = j;
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if less(&self.entries[i], &self.entries[parent]) {
                self.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.entries.len();
        loop {
            let l = 2 * i + 1;
            if l >= n {
                break;
            }
            let r = l + 1;
            let child = if r < n && less(&self.entries[r], &self.entries[l]) { r } else { l };
            if less(&self.entries[child], &self.entries[i]) {
                self.swap(i, child);
                i = child;
            } else {
                break;
            }
        }
    }

    #[cfg(test)]
    fn check(&self) {
        for i in 1..self.entries.len() {
            assert!(!less(&self.entries[i], &self.entries[(i - 1) / 2]));
        }
        for (i, e) in self.entries.iter().enumerate() {
            assert_eq!(self.pos[e.1], i);
        }
        let live = self.pos.iter().filter(|&&p| p != ABSENT).count();
        assert_eq!(live, self.entries.len());
    }
}
