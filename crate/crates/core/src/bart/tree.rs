//! Arena-backed binary regression tree used by the sampler.

/// A node of a regression tree. Split variable `p` (one past the last
/// covariate) denotes the treatment indicator.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf { mu: f64 },
    Internal { split_var: usize, split_cut: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Slot {
    node: TreeNode,
    parent: Option<usize>,
    depth: u32,
    live: bool,
}

/// Binary tree; a point goes left when `x[split_var] <= split_cut`.
#[derive(Debug, Clone)]
pub struct Tree {
    slots: Vec<Slot>,
    free: Vec<usize>,
}

pub const ROOT: usize = 0;

impl Tree {
    pub fn new(mu: f64) -> Self {
        Tree {
            slots: vec![Slot { node: TreeNode::Leaf { mu }, parent: None, depth: 0, live: true }],
            free: Vec::new(),
        }
    }

    /// Upper bound on node ids, for sizing per-node scratch buffers.
    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.slots[id].node
    }

    pub fn depth_of(&self, id: usize) -> u32 {
        self.slots[id].depth
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.slots[id].parent
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        matches!(self.slots[id].node, TreeNode::Leaf { .. })
    }

    pub fn is_live_leaf(&self, id: usize) -> bool {
        self.slots[id].live && self.is_leaf(id)
    }

    pub fn mu(&self, id: usize) -> f64 {
        match self.slots[id].node {
            TreeNode::Leaf { mu } => mu,
            TreeNode::Internal { .. } => panic!("node {id} is not a leaf"),
        }
    }

    pub fn set_mu(&mut self, id: usize, value: f64) {
        match &mut self.slots[id].node {
            TreeNode::Leaf { mu } => *mu = value,
            TreeNode::Internal { .. } => panic!("node {id} is not a leaf"),
        }
    }

    fn live_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().enumerate().filter(|(_, s)| s.live).map(|(i, _)| i)
    }

    pub fn leaves(&self) -> Vec<usize> {
        self.live_ids().filter(|&i| self.is_leaf(i)).collect()
    }

    pub fn num_leaves(&self) -> usize {
        self.live_ids().filter(|&i| self.is_leaf(i)).count()
    }

    /// Internal nodes whose children are both leaves.
    pub fn nog_nodes(&self) -> Vec<usize> {
        self.live_ids().filter(|&i| self.is_nog(i)).collect()
    }

    pub fn is_nog(&self, id: usize) -> bool {
        match self.slots[id].node {
            TreeNode::Internal { left, right, .. } => self.is_leaf(left) && self.is_leaf(right),
            TreeNode::Leaf { .. } => false,
        }
    }

    pub fn is_root_only(&self) -> bool {
        self.is_leaf(ROOT)
    }

    pub fn num_internal(&self) -> usize {
        self.live_ids().filter(|&i| !self.is_leaf(i)).count()
    }

    /// Depth of the deepest leaf (root-only tree has depth 0).
    pub fn depth(&self) -> u32 {
        self.live_ids().map(|i| self.slots[i].depth).max().unwrap_or(0)
    }

    pub fn children(&self, id: usize) -> Option<(usize, usize)> {
        match self.slots[id].node {
            TreeNode::Internal { left, right, .. } => Some((left, right)),
            TreeNode::Leaf { .. } => None,
        }
    }

    /// Leaf reached by a point whose coordinate `v` is `value(v)`.
    pub fn find_leaf(&self, value: impl Fn(usize) -> f64) -> usize {
        let mut id = ROOT;
        loop {
            match self.slots[id].node {
                TreeNode::Leaf { .. } => return id,
                TreeNode::Internal { split_var, split_cut, left, right } => {
                    id = if value(split_var) <= split_cut { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, value: impl Fn(usize) -> f64) -> f64 {
        self.mu(self.find_leaf(value))
    }

    fn alloc(&mut self, slot: Slot) -> usize {
        match self.free.pop() {
            Some(id) => {
                self.slots[id] = slot;
                id
            }
            None => {
                self.slots.push(slot);
                self.slots.len() - 1
            }
        }
    }

    /// Splits leaf `id`, returning the new (left, right) leaves.
    pub fn grow(&mut self, id: usize, split_var: usize, split_cut: f64, mu_left: f64, mu_right: f64) -> (usize, usize) {
        assert!(self.is_leaf(id), "grow on internal node {id}");
        let depth = self.slots[id].depth + 1;
        let left = self.alloc(Slot { node: TreeNode::Leaf { mu: mu_left }, parent: Some(id), depth, live: true });
        let right = self.alloc(Slot { node: TreeNode::Leaf { mu: mu_right }, parent: Some(id), depth, live: true });
        self.slots[id].node = TreeNode::Internal { split_var, split_cut, left, right };
        (left, right)
    }

    /// Collapses a node whose children are both leaves.
    pub fn prune(&mut self, id: usize, mu: f64) {
        let (left, right) = self.children(id).expect("prune on leaf");
        assert!(self.is_leaf(left) && self.is_leaf(right), "prune on non-nog node {id}");
        for c in [left, right] {
            self.slots[c].live = false;
            self.free.push(c);
        }
        self.slots[id].node = TreeNode::Leaf { mu };
    }

    /// Replaces the split rule of an internal node.
    pub fn set_rule(&mut self, id: usize, var: usize, cut: f64) {
        match &mut self.slots[id].node {
            TreeNode::Internal { split_var, split_cut, .. } => {
                *split_var = var;
                *split_cut = cut;
            }
            TreeNode::Leaf { .. } => panic!("set_rule on leaf {id}"),
        }
    }

    /// Checks arena consistency: parents, depths and binary structure.
    pub fn is_well_formed(&self) -> bool {
        let mut seen = vec![false; self.slots.len()];
        let mut stack = vec![ROOT];
        while let Some(id) = stack.pop() {
            if !self.slots[id].live || seen[id] {
                return false;
            }
            seen[id] = true;
            match self.slots[id].node {
                TreeNode::Leaf { mu } => {
                    if !mu.is_finite() {
                        return false;
                    }
                }
                TreeNode::Internal { left, right, .. } => {
                    for c in [left, right] {
                        if self.slots[c].parent != Some(id) || self.slots[c].depth != self.slots[id].depth + 1 {
                            return false;
                        }
                        stack.push(c);
                    }
                }
            }
        }
        self.live_ids().all(|i| seen[i])
    }
}
