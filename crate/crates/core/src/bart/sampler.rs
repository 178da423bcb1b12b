//! Bayesian backfitting MCMC over the sum-of-trees model.
//!
//! Each sweep visits every tree in turn: the tree's current contribution is
//! removed from the fit, a GROW / PRUNE / CHANGE proposal is accepted or
//! rejected with a Metropolis-Hastings step that integrates the leaf values
//! out, then the leaf values are redrawn from their normal full conditionals
//! and the contribution is added back. A sweep ends with a draw of the noise
//! variance.
//!
//! Alongside the observed-arm fit the sampler tracks the forest evaluated
//! with the treatment indicator flipped, so counterfactual draws come from
//! the same posterior sample at no extra tree traversal.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::conjugate::{draw_leaf_mu, leaf_log_marginal, SigmaPosterior};
use super::tree::{Tree, ROOT};

const PROB_CHANGE: f64 = 0.2;
const PROB_GROW_GIVEN_NOT_CHANGE: f64 = 0.5;

/// Fixed prior quantities on the standardized outcome scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prior {
    pub alpha: f64,
    pub beta: f64,
    /// Leaf prior standard deviation.
    pub sigma_mu: f64,
    pub nu: f64,
    pub lambda: f64,
    pub min_leaf: usize,
}

impl Prior {
    /// Prior probability that a node at `depth` is internal.
    pub fn split_prob(&self, depth: u32) -> f64 {
        self.alpha * (1.0 + depth as f64).powf(-self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Grow,
    Prune,
    Change,
}

/// Counters of proposed / accepted moves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MoveStats {
    pub proposed: [u64; 3],
    pub accepted: [u64; 3],
}

pub struct Sampler {
    /// Covariate columns followed by the treatment column.
    cols: Vec<Vec<f64>>,
    /// Sorted distinct values of each column, and each unit's index into them.
    distinct: Vec<Vec<f64>>,
    ranks: Vec<Vec<u32>>,
    /// Scratch space for collecting the distinct values present in a node.
    stamp: Vec<u64>,
    stamp_gen: u64,
    scratch: Vec<u32>,
    rank_n: Vec<usize>,
    rank_s: Vec<f64>,
    z_col: usize,
    y: Vec<f64>,
    prior: Prior,
    trees: Vec<Tree>,
    leaf_of: Vec<Vec<usize>>,
    cf_leaf_of: Vec<Vec<usize>>,
    fit: Vec<f64>,
    cf_fit: Vec<f64>,
    sigma: f64,
    resid: Vec<f64>,
    /// Unit count and residual sum per node of the tree being updated.
    node_n: Vec<usize>,
    node_s: Vec<f64>,
    /// Leaf values of the tree being updated, indexed by node id.
    mu_tab: Vec<f64>,
    rng: ChaCha8Rng,
    stats: MoveStats,
}

impl Sampler {
    /// `cols` holds covariate columns; `z` is appended as the last split variable.
    pub fn new(mut cols: Vec<Vec<f64>>, z: &[u8], y: Vec<f64>, num_trees: usize, prior: Prior, sigma0: f64, rng: ChaCha8Rng) -> Self {
        let n = y.len();
        let z_col = cols.len();
        cols.push(z.iter().map(|&v| v as f64).collect());
        let mean = y.iter().sum::<f64>() / n as f64;
        let mu0 = mean / num_trees as f64;
        let trees = vec![Tree::new(mu0); num_trees];
        let fit = vec![mean; n];
        let mut distinct = Vec::with_capacity(cols.len());
        let mut ranks = Vec::with_capacity(cols.len());
        for col in &cols {
            let mut d = col.clone();
            d.sort_by(f64::total_cmp);
            d.dedup();
            ranks.push(col.iter().map(|v| d.partition_point(|u| u < v) as u32).collect());
            distinct.push(d);
        }
        let widest = distinct.iter().map(Vec::len).max().unwrap_or(0);
        Sampler {
            cols,
            distinct,
            ranks,
            stamp: vec![0; widest],
            stamp_gen: 0,
            scratch: Vec::with_capacity(widest),
            rank_n: vec![0; widest],
            rank_s: vec![0.0; widest],
            z_col,
            y,
            prior,
            leaf_of: vec![vec![ROOT; n]; num_trees],
            cf_leaf_of: vec![vec![ROOT; n]; num_trees],
            trees,
            cf_fit: fit.clone(),
            fit,
            sigma: sigma0,
            resid: vec![0.0; n],
            node_n: Vec::new(),
            node_s: Vec::new(),
            mu_tab: Vec::new(),
            rng,
            stats: MoveStats::default(),
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Forest evaluated at each unit's observed covariates and treatment.
    pub fn fit(&self) -> &[f64] {
        &self.fit
    }

    /// Forest evaluated at each unit's covariates with the treatment flipped.
    pub fn counterfactual_fit(&self) -> &[f64] {
        &self.cf_fit
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn move_stats(&self) -> MoveStats {
        self.stats
    }

    pub fn tree_depths(&self) -> Vec<u32> {
        self.trees.iter().map(Tree::depth).collect()
    }

    fn cf_value(&self, i: usize, v: usize) -> f64 {
        if v == self.z_col {
            1.0 - self.cols[v][i]
        } else {
            self.cols[v][i]
        }
    }

    /// Largest absolute gap between the tracked fits and a from-scratch
    /// evaluation of every tree, over both the observed and flipped points.
    pub fn max_identity_discrepancy(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n() {
            let obs: f64 = self.trees.iter().map(|t| t.predict(|v| self.cols[v][i])).sum();
            let cf: f64 = self.trees.iter().map(|t| t.predict(|v| self.cf_value(i, v))).sum();
            worst = worst.max((obs - self.fit[i]).abs()).max((cf - self.cf_fit[i]).abs());
        }
        worst
    }

    /// Checks leaf bookkeeping and structure of every tree.
    pub fn trees_consistent(&self) -> bool {
        self.trees.iter().enumerate().all(|(j, t)| {
            t.is_well_formed()
                && (0..self.n()).all(|i| {
                    t.find_leaf(|v| self.cols[v][i]) == self.leaf_of[j][i]
                        && t.find_leaf(|v| self.cf_value(i, v)) == self.cf_leaf_of[j][i]
                })
                && t.leaves().iter().all(|&l| self.leaf_of[j].iter().filter(|&&x| x == l).count() >= self.prior.min_leaf || t.is_root_only())
        })
    }

    /// One full backfitting pass followed by a noise-variance draw.
    pub fn sweep(&mut self) {
        for j in 0..self.trees.len() {
            self.update_tree(j);
        }
        self.draw_sigma();
    }

    fn draw_sigma(&mut self) {
        let ssr: f64 = self.y.iter().zip(&self.fit).map(|(y, f)| (y - f) * (y - f)).sum();
        let post = SigmaPosterior::new(self.prior.nu, self.prior.lambda, self.n(), ssr);
        self.sigma = post.draw_variance(&mut self.rng).sqrt();
    }

    fn load_mu(&mut self, j: usize) {
        let tree = &self.trees[j];
        self.mu_tab.clear();
        self.mu_tab.extend((0..tree.capacity()).map(|id| if tree.is_live_leaf(id) { tree.mu(id) } else { f64::NAN }));
    }

    fn update_tree(&mut self, j: usize) {
        let n = self.n();
        self.load_mu(j);
        let cap = self.trees[j].capacity();
        self.node_n.clear();
        self.node_n.resize(cap, 0);
        self.node_s.clear();
        self.node_s.resize(cap, 0.0);
        {
            let (leaf_of, cf_leaf_of) = (&self.leaf_of[j][..n], &self.cf_leaf_of[j][..n]);
            let (y, fit, cf_fit, resid) = (&self.y[..n], &mut self.fit[..n], &mut self.cf_fit[..n], &mut self.resid[..n]);
            for i in 0..n {
                let l = leaf_of[i];
                let own = self.mu_tab[l];
                let r = y[i] - fit[i] + own;
                resid[i] = r;
                fit[i] -= own;
                cf_fit[i] -= self.mu_tab[cf_leaf_of[i]];
                self.node_n[l] += 1;
                self.node_s[l] += r;
            }
        }

        let mv = if self.trees[j].is_root_only() {
            Move::Grow
        } else if self.rng.random::<f64>() < PROB_CHANGE {
            Move::Change
        } else if self.rng.random::<f64>() < PROB_GROW_GIVEN_NOT_CHANGE {
            Move::Grow
        } else {
            Move::Prune
        };
        let k = mv as usize;
        self.stats.proposed[k] += 1;
        let accepted = match mv {
            Move::Grow => self.propose_grow(j),
            Move::Prune => self.propose_prune(j),
            Move::Change => self.propose_change(j),
        };
        if accepted {
            self.stats.accepted[k] += 1;
        }

        self.draw_leaves(j);

        self.load_mu(j);
        let (leaf_of, cf_leaf_of) = (&self.leaf_of[j][..n], &self.cf_leaf_of[j][..n]);
        let (fit, cf_fit) = (&mut self.fit[..n], &mut self.cf_fit[..n]);
        for i in 0..n {
            fit[i] += self.mu_tab[leaf_of[i]];
            cf_fit[i] += self.mu_tab[cf_leaf_of[i]];
        }
    }

    /// Records the sufficient statistics of a node created or changed by a move.
    fn set_node_stats(&mut self, id: usize, (count, sum): (usize, f64)) {
        if id >= self.node_n.len() {
            self.node_n.resize(id + 1, 0);
            self.node_s.resize(id + 1, 0.0);
        }
        self.node_n[id] = count;
        self.node_s[id] = sum;
    }

    fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    fn tau2(&self) -> f64 {
        self.prior.sigma_mu * self.prior.sigma_mu
    }

    fn lml(&self, n: usize, sum: f64) -> f64 {
        leaf_log_marginal(n, sum, self.sigma2(), self.tau2())
    }

    /// Probability of proposing GROW from a tree with or without internal nodes.
    fn p_grow(root_only: bool) -> f64 {
        if root_only {
            1.0
        } else {
            (1.0 - PROB_CHANGE) * PROB_GROW_GIVEN_NOT_CHANGE
        }
    }

    fn p_prune() -> f64 {
        (1.0 - PROB_CHANGE) * (1.0 - PROB_GROW_GIVEN_NOT_CHANGE)
    }

    /// Draws a cut uniformly among the distinct values of `var` held by units
    /// in `nodes`, the largest excluded, and returns it with the (count,
    /// residual sum) on each side of `x[var] <= cut`.
    fn draw_cut(&mut self, j: usize, nodes: &[usize], var: usize) -> Option<(f64, (usize, f64), (usize, f64))> {
        self.stamp_gen += 1;
        let g = self.stamp_gen;
        let leaf_of = &self.leaf_of[j];
        let ranks = &self.ranks[var];
        self.scratch.clear();
        for i in 0..leaf_of.len() {
            if nodes.contains(&leaf_of[i]) {
                let r = ranks[i] as usize;
                if self.stamp[r] != g {
                    self.stamp[r] = g;
                    self.scratch.push(r as u32);
                    self.rank_n[r] = 0;
                    self.rank_s[r] = 0.0;
                }
                self.rank_n[r] += 1;
                self.rank_s[r] += self.resid[i];
            }
        }
        if self.scratch.len() < 2 {
            return None;
        }
        let k = self.rng.random_range(0..self.scratch.len() - 1);
        let (_, &mut cut_rank, _) = self.scratch.select_nth_unstable(k);
        let (mut left, mut right) = ((0, 0.0), (0, 0.0));
        for &r in &self.scratch {
            let side = if r <= cut_rank { &mut left } else { &mut right };
            side.0 += self.rank_n[r as usize];
            side.1 += self.rank_s[r as usize];
        }
        Some((self.distinct[var][cut_rank as usize], left, right))
    }

    fn propose_grow(&mut self, j: usize) -> bool {
        let leaves = self.trees[j].leaves();
        let leaf = leaves[self.rng.random_range(0..leaves.len())];
        let var = self.rng.random_range(0..self.cols.len());
        let Some((cut, (nl, sl), (nr, sr))) = self.draw_cut(j, &[leaf], var) else {
            return false;
        };
        if nl < self.prior.min_leaf || nr < self.prior.min_leaf {
            return false;
        }

        let tree = &self.trees[j];
        let root_only = tree.is_root_only();
        let depth = tree.depth_of(leaf);
        let parent_was_nog = tree.parent(leaf).is_some_and(|p| tree.is_nog(p));
        let nog_after = tree.nog_nodes().len() + 1 - usize::from(parent_was_nog);

        let ps = self.prior.split_prob(depth);
        let pc = self.prior.split_prob(depth + 1);
        let log_prior = ps.ln() + 2.0 * (1.0 - pc).ln() - (1.0 - ps).ln();
        let log_proposal = (Self::p_prune() / nog_after as f64).ln() - (Self::p_grow(root_only) / leaves.len() as f64).ln();
        let log_lik = self.lml(nl, sl) + self.lml(nr, sr) - self.lml(nl + nr, sl + sr);

        if !self.accept(log_prior + log_proposal + log_lik) {
            return false;
        }
        let (left, right) = self.trees[j].grow(leaf, var, cut, 0.0, 0.0);
        self.set_node_stats(left, (nl, sl));
        self.set_node_stats(right, (nr, sr));
        for i in 0..self.n() {
            if self.leaf_of[j][i] == leaf {
                self.leaf_of[j][i] = if self.cols[var][i] <= cut { left } else { right };
            }
            if self.cf_leaf_of[j][i] == leaf {
                self.cf_leaf_of[j][i] = if self.cf_value(i, var) <= cut { left } else { right };
            }
        }
        true
    }

    fn propose_prune(&mut self, j: usize) -> bool {
        let tree = &self.trees[j];
        let nogs = tree.nog_nodes();
        let node = nogs[self.rng.random_range(0..nogs.len())];
        let (left, right) = tree.children(node).expect("nog node has children");
        let depth = tree.depth_of(node);
        let leaves_after = tree.num_leaves() - 1;
        let root_only_after = node == ROOT;

        let (nl, sl, nr, sr) = (self.node_n[left], self.node_s[left], self.node_n[right], self.node_s[right]);

        let ps = self.prior.split_prob(depth);
        let pc = self.prior.split_prob(depth + 1);
        let log_prior = (1.0 - ps).ln() - ps.ln() - 2.0 * (1.0 - pc).ln();
        let log_proposal = (Self::p_grow(root_only_after) / leaves_after as f64).ln() - (Self::p_prune() / nogs.len() as f64).ln();
        let log_lik = self.lml(nl + nr, sl + sr) - self.lml(nl, sl) - self.lml(nr, sr);

        if !self.accept(log_prior + log_proposal + log_lik) {
            return false;
        }
        self.trees[j].prune(node, 0.0);
        self.set_node_stats(node, (nl + nr, sl + sr));
        for i in 0..self.n() {
            if self.leaf_of[j][i] == left || self.leaf_of[j][i] == right {
                self.leaf_of[j][i] = node;
            }
            if self.cf_leaf_of[j][i] == left || self.cf_leaf_of[j][i] == right {
                self.cf_leaf_of[j][i] = node;
            }
        }
        true
    }

    /// Redraws the rule of a node whose children are both leaves. The move is
    /// symmetric and the rule prior cancels, leaving the likelihood ratio.
    fn propose_change(&mut self, j: usize) -> bool {
        let nogs = self.trees[j].nog_nodes();
        let node = nogs[self.rng.random_range(0..nogs.len())];
        let (left, right) = self.trees[j].children(node).expect("nog node has children");
        let var = self.rng.random_range(0..self.cols.len());
        let Some((cut, (nl, sl), (nr, sr))) = self.draw_cut(j, &[left, right], var) else {
            return false;
        };
        if nl < self.prior.min_leaf || nr < self.prior.min_leaf {
            return false;
        }
        let (ol, osl, or, osr) = (self.node_n[left], self.node_s[left], self.node_n[right], self.node_s[right]);
        let log_lik = self.lml(nl, sl) + self.lml(nr, sr) - self.lml(ol, osl) - self.lml(or, osr);
        if !self.accept(log_lik) {
            return false;
        }
        self.trees[j].set_rule(node, var, cut);
        self.set_node_stats(left, (nl, sl));
        self.set_node_stats(right, (nr, sr));
        for i in 0..self.n() {
            let l = self.leaf_of[j][i];
            if l == left || l == right {
                self.leaf_of[j][i] = if self.cols[var][i] <= cut { left } else { right };
            }
            let c = self.cf_leaf_of[j][i];
            if c == left || c == right {
                self.cf_leaf_of[j][i] = if self.cf_value(i, var) <= cut { left } else { right };
            }
        }
        true
    }

    fn accept(&mut self, log_ratio: f64) -> bool {
        log_ratio >= 0.0 || self.rng.random::<f64>().ln() < log_ratio
    }

    fn draw_leaves(&mut self, j: usize) {
        let (sigma2, tau2) = (self.sigma2(), self.tau2());
        for leaf in self.trees[j].leaves() {
            let mu = draw_leaf_mu(&mut self.rng, self.node_n[leaf], self.node_s[leaf], sigma2, tau2);
            self.trees[j].set_mu(leaf, mu);
        }
    }
}
