//! Shallow regression trees describing where a discard rule bites.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::data::Group;
use crate::error::{Error, Result};
use crate::support::{sd_ratio_stat, CounterfactualUncertainty};

pub const DEFAULT_MAX_DEPTH: usize = 3;
pub const DEFAULT_MIN_LEAF: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseKind {
    /// Counterfactual sd minus the 1 sd rule's cutoff.
    OneSdMargin,
    /// Squared counterfactual-to-observed sd ratio.
    RatioStat,
    /// Distance of the score beyond the comparison group's extreme score.
    PropensityMargin,
}

impl ResponseKind {
    pub fn name(self) -> &'static str {
        match self {
            ResponseKind::OneSdMargin => "1sd-margin",
            ResponseKind::RatioStat => "ratio-stat",
            ResponseKind::PropensityMargin => "ps-margin",
        }
    }
}

/// A per-unit statistic over the focal group.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileResponse {
    /// Indices of the focal units, in increasing order.
    pub units: Vec<usize>,
    pub values: Vec<f64>,
    pub kind: ResponseKind,
}

impl ProfileResponse {
    /// Covariate rows of the focal units, aligned with `values`.
    pub fn rows_of(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.units.len(), x.ncols(), |r, c| x[(self.units[r], c)])
    }
}

fn finite(units: Vec<usize>, values: Vec<f64>, kind: ResponseKind) -> Result<ProfileResponse> {
    if units.is_empty() {
        return Err(Error::EmptyFocalGroup);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::ConfigInvalid(format!("{} has non-finite values", kind.name())));
    }
    Ok(ProfileResponse { units, values, kind })
}

/// `s_cf - (max observed sd + sd of observed sds)`; positive means discarded.
pub fn one_sd_margin(cu: &CounterfactualUncertainty, a: Group) -> Result<ProfileResponse> {
    let units = cu.focal_units(a);
    let cutoff = cu.max_observed(a) + cu.spread(a);
    let values = units.iter().map(|&i| cu.sd(i, a.other()) - cutoff).collect();
    finite(units, values, ResponseKind::OneSdMargin)
}

pub fn ratio_stat(cu: &CounterfactualUncertainty, a: Group) -> Result<ProfileResponse> {
    let units = cu.focal_units(a);
    let values = units.iter().map(|&i| sd_ratio_stat(cu.sd(i, a.other()), cu.sd(i, a))).collect();
    finite(units, values, ResponseKind::RatioStat)
}

/// For treated focal units, the score minus the largest control score; for
/// control focal units, the smallest treated score minus the score.
pub fn propensity_margin(pscores: &[f64], z: &[u8], a: Group) -> Result<ProfileResponse> {
    let comparison: Vec<f64> = (0..z.len()).filter(|&i| z[i] != a.z()).map(|i| pscores[i]).collect();
    if comparison.is_empty() {
        return Err(Error::EmptyComparisonGroup);
    }
    let units: Vec<usize> = (0..z.len()).filter(|&i| z[i] == a.z()).collect();
    let values = match a {
        Group::Treated => {
            let hi = comparison.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            units.iter().map(|&i| pscores[i] - hi).collect()
        }
        Group::Control => {
            let lo = comparison.iter().copied().fold(f64::INFINITY, f64::min);
            units.iter().map(|&i| lo - pscores[i]).collect()
        }
    };
    finite(units, values, ResponseKind::PropensityMargin)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub var: usize,
    pub cut: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileNode {
    pub n: usize,
    pub mean: f64,
    pub sse: f64,
    pub depth: usize,
    pub split: Option<Split>,
}

/// Nodes in creation order; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTree {
    pub nodes: Vec<ProfileNode>,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl ProfileTree {
    pub fn root(&self) -> &ProfileNode {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Leaf reached by covariate row `x`.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut id = 0;
        while let Some(s) = self.nodes[id].split {
            id = if x[s.var] <= s.cut { s.left } else { s.right };
        }
        id
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].split.is_none()).collect()
    }
}

/// Leaf id of every row of `x`.
pub fn node_assignments(tree: &ProfileTree, x: &DMatrix<f64>) -> Vec<usize> {
    (0..x.nrows())
        .map(|r| {
            let row: Vec<f64> = x.row(r).iter().copied().collect();
            tree.leaf_of(&row)
        })
        .collect()
}

fn mean_sse(y: &[f64], rows: &[usize]) -> (f64, f64) {
    let m = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
    (m, rows.iter().map(|&i| (y[i] - m).powi(2)).sum())
}

/// Best `(gain, var, cut)` over midpoints between consecutive distinct values.
/// Earlier variables and lower cuts win ties.
pub fn best_split(x: &DMatrix<f64>, y: &[f64], rows: &[usize], min_leaf: usize) -> Option<(f64, usize, f64)> {
    let (mean, sse) = mean_sse(y, rows);
    let n = rows.len();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut sorted = rows.to_vec();
    for var in 0..x.ncols() {
        sorted.sort_by(|&a, &b| x[(a, var)].total_cmp(&x[(b, var)]));
        let (mut s, mut ss) = (0.0, 0.0);
        let total: f64 = sorted.iter().map(|&i| y[i] - mean).sum();
        let total_sq: f64 = sorted.iter().map(|&i| (y[i] - mean).powi(2)).sum();
        for k in 0..n - 1 {
            let v = y[sorted[k]] - mean;
            s += v;
            ss += v * v;
            let nl = k + 1;
            let (lo, hi) = (x[(sorted[k], var)], x[(sorted[k + 1], var)]);
            if nl < min_leaf || n - nl < min_leaf || lo == hi {
                continue;
            }
            let sse_l = ss - s * s / nl as f64;
            let sr = total - s;
            let sse_r = (total_sq - ss) - sr * sr / (n - nl) as f64;
            let gain = sse - sse_l - sse_r;
            if best.is_none_or(|b| gain > b.0) {
                let mid = 0.5 * (lo + hi);
                best = Some((gain, var, if mid < hi { mid } else { lo }));
            }
        }
    }
    best.filter(|b| sse > 0.0 && b.0 > 1e-12 * sse)
}

/// Greedy least-squares regression tree of the response on `x_focal`.
pub fn fit_cart(x_focal: &DMatrix<f64>, response: &ProfileResponse, max_depth: usize, min_leaf: usize) -> Result<ProfileTree> {
    let y = &response.values;
    assert_eq!(x_focal.nrows(), y.len(), "rows and response differ in length");
    if min_leaf == 0 {
        return Err(Error::ConfigInvalid("min_leaf must be positive".into()));
    }
    if y.len() < 2 * min_leaf {
        return Err(Error::TooFewRows(y.len()));
    }
    let all: Vec<usize> = (0..y.len()).collect();
    let (mean, sse) = mean_sse(y, &all);
    let mut nodes = vec![ProfileNode { n: all.len(), mean, sse, depth: 0, split: None }];
    let mut stack = vec![(0usize, all)];
    while let Some((id, rows)) = stack.pop() {
        if nodes[id].depth >= max_depth {
            continue;
        }
        let Some((_, var, cut)) = best_split(x_focal, y, &rows, min_leaf) else { continue };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x_focal[(i, var)] <= cut);
        let depth = nodes[id].depth + 1;
        let (left, right) = (nodes.len(), nodes.len() + 1);
        for part in [&l, &r] {
            let (m, s) = mean_sse(y, part);
            nodes.push(ProfileNode { n: part.len(), mean: m, sse: s, depth, split: None });
        }
        nodes[id].split = Some(Split { var, cut, left, right });
        stack.push((right, r));
        stack.push((left, l));
    }
    Ok(ProfileTree { nodes, max_depth, min_leaf })
}

/// `v` rounded to four significant digits.
pub fn sig4(v: f64) -> String {
    if v == 0.0 {
        return "0.000".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.3e}").parse().unwrap();
    let mag = rounded.abs().log10().floor() as i32;
    if !(-5..15).contains(&mag) {
        return format!("{rounded:.3e}");
    }
    let decimals = (3 - mag).max(0) as usize;
    format!("{rounded:.decimals$}")
}

/// Indented text rendering; children sit two spaces deeper than their parent.
pub fn render_tree(t: &ProfileTree, names: &[String]) -> String {
    fn walk(t: &ProfileTree, names: &[String], id: usize, prefix: &str, indent: usize, out: &mut String) {
        let node = &t.nodes[id];
        let _ = writeln!(out, "{:indent$}{prefix}n={} mean={}", "", node.n, sig4(node.mean), indent = indent);
        if let Some(s) = node.split {
            let name = names.get(s.var).cloned().unwrap_or_else(|| format!("X{}", s.var + 1));
            walk(t, names, s.left, &format!("{name} <= {}: ", sig4(s.cut)), indent + 2, out);
            walk(t, names, s.right, &format!("{name} > {}: ", sig4(s.cut)), indent + 2, out);
        }
    }
    let mut out = String::new();
    walk(t, names, 0, "", 0, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Seed, Stream};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn response(values: Vec<f64>) -> ProfileResponse {
        ProfileResponse { units: (0..values.len()).collect(), values, kind: ResponseKind::OneSdMargin }
    }

    fn names(p: usize) -> Vec<String> {
        crate::data::Dataset::default_names(p)
    }

    #[test]
    fn margin_hand_example() {
        let cu = CounterfactualUncertainty::new(vec![1.0, 3.0], vec![1.0, 1.2], vec![1, 1]);
        let m = one_sd_margin(&cu, Group::Treated).unwrap();
        assert!((m.values[1] - 1.658579).abs() < 1e-6);
        assert!((m.values[0] + 0.341421).abs() < 1e-6);
        let report = crate::support::discard_one_sd(&cu, Group::Treated).unwrap();
        for (k, &i) in m.units.iter().enumerate() {
            assert_eq!(m.values[k] > 0.0, report.discard[i]);
        }
    }

    #[test]
    fn margin_zero_at_threshold() {
        let cu = CounterfactualUncertainty::new(vec![1.0, 1.0], vec![1.0, 1.0], vec![1, 1]);
        let m = one_sd_margin(&cu, Group::Treated).unwrap();
        assert_eq!(m.values, vec![0.0, 0.0]);
    }

    #[test]
    fn propensity_margin_sides() {
        let ps = [0.9, 0.2, 0.5, 0.7, 0.1];
        let z = [1, 0, 1, 0, 0];
        let t = propensity_margin(&ps, &z, Group::Treated).unwrap();
        assert_eq!(t.units, vec![0, 2]);
        assert!((t.values[0] - 0.2).abs() < 1e-12 && (t.values[1] + 0.2).abs() < 1e-12);
        let c = propensity_margin(&ps, &z, Group::Control).unwrap();
        assert_eq!(c.units, vec![1, 3, 4]);
        assert!((c.values[2] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn perfect_split_on_indicator() {
        let mut rng = Seed(3).rng(Stream::Dgp);
        let x = DMatrix::from_fn(200, 3, |_, _| StandardNormal.sample(&mut rng));
        let y: Vec<f64> = (0..200).map(|i| f64::from(u8::from(x[(i, 0)] > 0.0))).collect();
        let t = fit_cart(&x, &response(y), 3, 10).unwrap();
        let s = t.root().split.unwrap();
        assert_eq!(s.var, 0);
        assert!(s.cut.abs() < 0.2);
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn constant_response_single_node() {
        let x = DMatrix::from_fn(40, 2, |i, j| (i * (j + 1)) as f64);
        let t = fit_cart(&x, &response(vec![2.5; 40]), 3, 10).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(render_tree(&t, &names(2)), "n=40 mean=2.500\n");
        assert!(matches!(fit_cart(&x.rows(0, 19).into_owned(), &response(vec![1.0; 19]), 3, 10), Err(Error::TooFewRows(19))));
    }

    #[test]
    fn root_split_matches_exhaustive_oracle() {
        for s in 0..20 {
            let mut rng = Seed(100 + s).rng(Stream::Dgp);
            let x = DMatrix::from_fn(50, 3, |_, _| (rng.random::<f64>() * 10.0).round() / 2.0);
            let y: Vec<f64> = (0..50).map(|i| x[(i, 1)].sin() + x[(i, 2)] * 0.3 + rng.random::<f64>()).collect();
            let t = fit_cart(&x, &response(y.clone()), 1, 10).unwrap();
            // brute force: every var, every observed value as a "<=" threshold
            let mut best = (f64::INFINITY, 0, 0.0);
            for var in 0..3 {
                let mut vals: Vec<f64> = x.column(var).iter().copied().collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                for w in vals.windows(2) {
                    let cut = 0.5 * (w[0] + w[1]);
                    let (l, r): (Vec<usize>, Vec<usize>) = (0..50).partition(|&i| x[(i, var)] <= cut);
                    if l.len() < 10 || r.len() < 10 {
                        continue;
                    }
                    let sse = |idx: &[usize]| {
                        let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
                        idx.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
                    };
                    let total = sse(&l) + sse(&r);
                    if total < best.0 - 1e-9 {
                        best = (total, var, cut);
                    }
                }
            }
            let sp = t.root().split.unwrap();
            assert_eq!((sp.var, sp.cut), (best.1, best.2), "seed {s}");
        }
    }

    #[test]
    fn affine_invariance_and_sse_decrease() {
        let mut rng = Seed(9).rng(Stream::Dgp);
        let x = DMatrix::from_fn(120, 4, |_, _| StandardNormal.sample(&mut rng));
        let y: Vec<f64> = (0..120).map(|i| x[(i, 2)] * x[(i, 3)] + 0.1 * x[(i, 0)]).collect();
        let a = fit_cart(&x, &response(y.clone()), 3, 10).unwrap();
        let b = fit_cart(&x, &response(y.iter().map(|v| 5.0 - 3.0 * v).collect()), 3, 10).unwrap();
        let shape = |t: &ProfileTree| t.nodes.iter().map(|n| (n.n, n.split.map(|s| (s.var, s.cut)))).collect::<Vec<_>>();
        assert_eq!(shape(&a), shape(&b));
        assert!(a.depth() <= 3);
        for n in &a.nodes {
            if let Some(s) = n.split {
                assert!(a.nodes[s.left].sse + a.nodes[s.right].sse < n.sse);
                assert_eq!(a.nodes[s.left].n + a.nodes[s.right].n, n.n);
            } else {
                assert!(n.n >= 10);
            }
        }
        let leaves = node_assignments(&a, &x);
        assert!(leaves.iter().all(|l| a.nodes[*l].split.is_none()));
    }

    #[test]
    fn render_depth_one() {
        let x = DMatrix::from_fn(40, 1, |i, _| i as f64);
        let y: Vec<f64> = (0..40).map(|i| if i < 20 { 0.0 } else { 1.0 }).collect();
        let t = fit_cart(&x, &response(y), 3, 10).unwrap();
        assert_eq!(render_tree(&t, &names(1)), "n=40 mean=0.5000\n  x1 <= 19.50: n=20 mean=0.000\n  x1 > 19.50: n=20 mean=1.000\n");
    }

    #[test]
    fn sig4_formats() {
        assert_eq!(sig4(1.23456), "1.235");
        assert_eq!(sig4(-0.000123456), "-0.0001235");
        assert_eq!(sig4(12346.0), "12350");
        assert_eq!(sig4(9.99996), "10.00");
        assert_eq!(sig4(0.0), "0.000");
    }

    #[test]
    fn render_is_injective_over_corpus() {
        let mut seen = std::collections::HashMap::new();
        for s in 0..100u64 {
            let mut rng = Seed(s).rng(Stream::Dgp);
            let n = 20 + (s as usize % 30);
            let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>());
            let y: Vec<f64> = (0..n).map(|i| x[(i, (s % 2) as usize)] + rng.random::<f64>() * 0.1).collect();
            let t = fit_cart(&x, &response(y), 2, 5).unwrap();
            let text = render_tree(&t, &names(2));
            let shape: Vec<_> = t.nodes.iter().map(|n| (n.n, sig4(n.mean), n.split.map(|sp| (sp.var, sp.cut.to_bits())))).collect();
            if let Some(prev) = seen.insert(text, shape.clone()) {
                assert_eq!(prev, shape);
            }
        }
        assert!(seen.len() > 90);
    }
}
