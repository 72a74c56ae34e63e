//! Adaptive hierarchical sparse grid with piecewise-linear hat functions.
//!
//! Points live on the canonical box `[-1, 1]^N` and are mapped affinely onto
//! the user domain. The one-dimensional rule is the equidistant hat rule:
//! level 0 holds the two boundary points `{-1, +1}`, level `l >= 1` adds the
//! odd-indexed points `i * 2^(1-l) - 1`. Multi-dimensional nodes are tensor
//! products, and the grid level of a node is the sum of its level vector.
//!
//! Every grid carries any number of named output channels. Each channel holds
//! one hierarchical surplus per node for a prefix of the node list: nodes are
//! only ever appended, so the frontier (the most recent batch) is always the
//! tail and a channel is "complete" once its prefix covers every node.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel holding the surrogate of the output of interest.
pub const QOI_CHANNEL: &str = "qoi";
/// Channel holding the surrogate of the linear-solver iteration count.
pub const ITERATIONS_CHANNEL: &str = "iterations";

/// Evaluate the 1D hat function of `(level, index)` at canonical `y`.
pub fn hat_eval(level: u32, index: u32, y: f64) -> Result<f64> {
    check_1d(level, index)?;
    Ok(hat(level, index, y))
}

#[inline]
fn hat(level: u32, index: u32, y: f64) -> f64 {
    let h = spacing(level);
    let center = f64::from(index) * h - 1.0;
    (1.0 - ((y - center) / h).abs()).max(0.0)
}

#[inline]
fn spacing(level: u32) -> f64 {
    // 2^(1 - level)
    2.0f64.powi(1 - level as i32)
}

fn check_1d(level: u32, index: u32) -> Result<()> {
    let ok = if level == 0 {
        index <= 1
    } else {
        level < 31 && index % 2 == 1 && index < (1u32 << level)
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "invalid hierarchical pair (level {level}, index {index})"
        )))
    }
}

/// Multi-index identity of a sparse-grid point: per-dimension level and index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub level: Vec<u32>,
    pub index: Vec<u32>,
}

impl NodeId {
    pub fn new(level: Vec<u32>, index: Vec<u32>) -> Result<Self> {
        if level.len() != index.len() || level.is_empty() {
            return Err(Error::Domain(format!(
                "level/index length mismatch ({} vs {})",
                level.len(),
                index.len()
            )));
        }
        for (&l, &i) in level.iter().zip(&index) {
            check_1d(l, i)?;
        }
        Ok(NodeId { level, index })
    }

    pub fn dim(&self) -> usize {
        self.level.len()
    }

    /// Sum of the level vector; the grid level at which the node appears.
    pub fn total_level(&self) -> u32 {
        self.level.iter().sum()
    }

    /// Canonical coordinates in `[-1, 1]^N`.
    pub fn coords(&self) -> Vec<f64> {
        self.level
            .iter()
            .zip(&self.index)
            .map(|(&l, &i)| f64::from(i) * spacing(l) - 1.0)
            .collect()
    }

    /// Tensor-product hat function at canonical point `y`.
    pub fn basis_eval(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.dim() {
            return Err(Error::Domain(format!(
                "point has {} coordinates, node has {}",
                y.len(),
                self.dim()
            )));
        }
        Ok(self.basis(y))
    }

    #[inline]
    fn basis(&self, y: &[f64]) -> f64 {
        let mut value = 1.0;
        for ((&l, &i), &yn) in self.level.iter().zip(&self.index).zip(y) {
            value *= hat(l, i, yn);
            if value == 0.0 {
                break;
            }
        }
        value
    }

    /// Children under the 1D rule applied to one dimension at a time.
    ///
    /// Both level-0 points share the single level-1 child at 0; the result is
    /// deduplicated and returned in node order.
    pub fn children(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(2 * self.dim());
        for n in 0..self.dim() {
            let (l, i) = (self.level[n], self.index[n]);
            let kids: &[(u32, u32)] = if l == 0 {
                &[(1, 1)]
            } else {
                &[(l + 1, 2 * i - 1), (l + 1, 2 * i + 1)]
            };
            for &(cl, ci) in kids {
                let mut child = self.clone();
                child.level[n] = cl;
                child.index[n] = ci;
                out.push(child);
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

impl Ord for NodeId {
    /// Lexicographic on (total level, level vector, index vector).
    fn cmp(&self, other: &Self) -> Ordering {
        self.total_level()
            .cmp(&other.total_level())
            .then_with(|| self.level.cmp(&other.level))
            .then_with(|| self.index.cmp(&other.index))
    }
}

impl PartialOrd for NodeId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A grid point: identity plus cached canonical coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub coords: Vec<f64>,
}

/// Knobs for classic refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementPolicy {
    /// Surplus threshold; nodes with `|surplus| >= tau` are refined.
    pub tau: f64,
    /// Channel whose surpluses drive refinement.
    pub channel: String,
    /// Total node budget.
    pub max_points: usize,
}

impl RefinementPolicy {
    pub fn new(tau: f64, channel: impl Into<String>, max_points: usize) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {tau}")));
        }
        if max_points == 0 {
            return Err(Error::Config("max_points must be at least 1".into()));
        }
        Ok(RefinementPolicy {
            tau,
            channel: channel.into(),
            max_points,
        })
    }
}

/// Result of one refinement step.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    /// The new frontier, in node order. Empty signals convergence.
    pub new_nodes: Vec<NodeId>,
    /// Set when the budget cut the candidate set short.
    pub budget_exhausted: bool,
}

/// Adaptive hierarchical sparse grid.
#[derive(Debug, Clone)]
pub struct HierGrid {
    dim: usize,
    domain: Vec<[f64; 2]>,
    nodes: Vec<Node>,
    lookup: HashMap<NodeId, usize>,
    surpluses: BTreeMap<String, Vec<f64>>,
    frontier_start: usize,
    level: u32,
}

impl HierGrid {
    /// An empty grid over `domain` (one closed interval per dimension).
    pub fn new(domain: Vec<[f64; 2]>) -> Result<Self> {
        if domain.is_empty() {
            return Err(Error::Domain("grid needs at least one dimension".into()));
        }
        for (n, &[lo, hi]) in domain.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Domain(format!(
                    "dimension {n}: interval [{lo}, {hi}] is empty or unbounded"
                )));
            }
        }
        Ok(HierGrid {
            dim: domain.len(),
            domain,
            nodes: Vec::new(),
            lookup: HashMap::new(),
            surpluses: BTreeMap::new(),
            frontier_start: 0,
            level: 0,
        })
    }

    /// The canonical box `[-1, 1]^dim`.
    pub fn canonical(dim: usize) -> Result<Self> {
        Self::new(vec![[-1.0, 1.0]; dim])
    }

    /// Full (non-adaptive) sparse grid with every node of total level
    /// `<= level`. All nodes form the initial frontier.
    pub fn full(domain: Vec<[f64; 2]>, level: u32) -> Result<Self> {
        let mut grid = Self::new(domain)?;
        let dim = grid.dim;
        let mut ids = Vec::new();
        for levels in level_vectors(dim, level) {
            let ranges: Vec<Vec<u32>> = levels
                .iter()
                .map(|&l| {
                    if l == 0 {
                        vec![0, 1]
                    } else {
                        (1..(1u32 << l)).step_by(2).collect()
                    }
                })
                .collect();
            for index in cartesian(&ranges) {
                ids.push(NodeId {
                    level: levels.clone(),
                    index,
                });
            }
        }
        ids.sort();
        grid.push_nodes(ids);
        grid.level = level;
        Ok(grid)
    }

    fn push_nodes(&mut self, ids: Vec<NodeId>) {
        self.frontier_start = self.nodes.len();
        for id in ids {
            debug_assert!(!self.lookup.contains_key(&id));
            self.lookup.insert(id.clone(), self.nodes.len());
            let coords = id.coords();
            self.nodes.push(Node { id, coords });
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &[[f64; 2]] {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Level of the most recent refinement (or of the initial full grid).
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn frontier(&self) -> &[Node] {
        &self.nodes[self.frontier_start..]
    }

    pub fn frontier_start(&self) -> usize {
        self.frontier_start
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.lookup.contains_key(id)
    }

    pub fn position(&self, id: &NodeId) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn channels(&self) -> impl Iterator<Item = &str> {
        self.surpluses.keys().map(String::as_str)
    }

    /// Surpluses of `channel` for the prefix of nodes that has been fitted.
    pub fn surpluses(&self, channel: &str) -> Option<&[f64]> {
        self.surpluses.get(channel).map(Vec::as_slice)
    }

    /// Map a canonical point onto the physical domain.
    pub fn to_physical(&self, canonical: &[f64]) -> Vec<f64> {
        canonical
            .iter()
            .zip(&self.domain)
            .map(|(&c, &[lo, hi])| lo + 0.5 * (c + 1.0) * (hi - lo))
            .collect()
    }

    /// Map a physical point onto the canonical box.
    pub fn to_canonical(&self, physical: &[f64]) -> Vec<f64> {
        physical
            .iter()
            .zip(&self.domain)
            .map(|(&y, &[lo, hi])| 2.0 * (y - lo) / (hi - lo) - 1.0)
            .collect()
    }

    /// Physical coordinates of node `k`.
    pub fn physical_coords(&self, k: usize) -> Vec<f64> {
        self.to_physical(&self.nodes[k].coords)
    }

    /// Fit the frontier surpluses of `channel` from sample values keyed by node.
    ///
    /// Every earlier node must already carry a surplus on this channel. Calling
    /// again with the same values recomputes the same frontier surpluses.
    pub fn compute_surpluses(
        &mut self,
        channel: &str,
        values: &HashMap<NodeId, f64>,
    ) -> Result<()> {
        let ordered = self
            .frontier()
            .iter()
            .map(|node| {
                values.get(&node.id).copied().ok_or_else(|| {
                    Error::IncompleteData(format!(
                        "no '{channel}' value for frontier node {:?}/{:?}",
                        node.id.level, node.id.index
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.compute_surpluses_ordered(channel, &ordered)
    }

    /// As [`compute_surpluses`](Self::compute_surpluses) with values given in
    /// frontier order.
    pub fn compute_surpluses_ordered(&mut self, channel: &str, values: &[f64]) -> Result<()> {
        let start = self.frontier_start;
        if values.len() != self.nodes.len() - start {
            return Err(Error::IncompleteData(format!(
                "expected {} frontier values for '{channel}', got {}",
                self.nodes.len() - start,
                values.len()
            )));
        }
        let mut coeffs = self.surpluses.remove(channel).unwrap_or_default();
        if coeffs.len() < start {
            let have = coeffs.len();
            self.surpluses.insert(channel.to_owned(), coeffs);
            return Err(Error::IncompleteData(format!(
                "channel '{channel}' has {have} surpluses but {start} non-frontier nodes"
            )));
        }
        coeffs.truncate(start);
        // Hierarchical basis functions vanish at every node of equal or lower
        // total level other than their own, so the system is triangular in
        // node order.
        for (k, &value) in (start..self.nodes.len()).zip(values) {
            let y = &self.nodes[k].coords;
            let interp: f64 = self.nodes[..k]
                .iter()
                .zip(&coeffs)
                .map(|(node, &c)| c * node.id.basis(y))
                .sum();
            coeffs.push(value - interp);
        }
        self.surpluses.insert(channel.to_owned(), coeffs);
        Ok(())
    }

    /// Evaluate the surrogate of `channel` at a physical point.
    ///
    /// Only nodes that already carry a surplus contribute, so this also works
    /// while the frontier is still unfitted.
    pub fn eval_surrogate(&self, channel: &str, y: &[f64]) -> Result<f64> {
        if y.len() != self.dim {
            return Err(Error::Domain(format!(
                "point has {} coordinates, grid has {}",
                y.len(),
                self.dim
            )));
        }
        let coeffs = self
            .surpluses
            .get(channel)
            .ok_or_else(|| Error::Domain(format!("unknown channel '{channel}'")))?;
        let canonical = self.to_canonical(y);
        Ok(self.eval_canonical(coeffs, &canonical))
    }

    fn eval_canonical(&self, coeffs: &[f64], y: &[f64]) -> f64 {
        self.nodes
            .iter()
            .zip(coeffs)
            .map(|(node, &c)| c * node.id.basis(y))
            .sum()
    }

    /// Largest absolute frontier surplus on `channel`: the error indicator
    /// compared against the refinement tolerance.
    pub fn error_indicator(&self, channel: &str) -> Result<f64> {
        let coeffs = self.complete_channel(channel)?;
        Ok(coeffs[self.frontier_start..]
            .iter()
            .fold(0.0, |acc: f64, c| acc.max(c.abs())))
    }

    fn complete_channel(&self, channel: &str) -> Result<&[f64]> {
        let coeffs = self
            .surpluses
            .get(channel)
            .ok_or_else(|| Error::Domain(format!("unknown channel '{channel}'")))?;
        if coeffs.len() != self.nodes.len() {
            return Err(Error::IncompleteData(format!(
                "channel '{channel}' has {} of {} surpluses",
                coeffs.len(),
                self.nodes.len()
            )));
        }
        Ok(coeffs)
    }

    /// Classic refinement: add every missing child of each frontier node whose
    /// driving-channel surplus meets `tau`. Children are added in node order
    /// until `max_points` is reached.
    pub fn refine(&mut self, policy: &RefinementPolicy) -> Result<RefineOutcome> {
        let coeffs = self.complete_channel(&policy.channel)?;
        let mut candidates: HashSet<NodeId> = HashSet::new();
        for (node, &c) in self.nodes[self.frontier_start..]
            .iter()
            .zip(&coeffs[self.frontier_start..])
        {
            if c.abs() >= policy.tau {
                for child in node.id.children() {
                    if !self.lookup.contains_key(&child) {
                        candidates.insert(child);
                    }
                }
            }
        }
        let mut new_nodes: Vec<NodeId> = candidates.into_iter().collect();
        new_nodes.sort();
        let room = policy.max_points.saturating_sub(self.nodes.len());
        let budget_exhausted = new_nodes.len() > room;
        new_nodes.truncate(room);
        if !new_nodes.is_empty() {
            self.push_nodes(new_nodes.clone());
            self.level += 1;
        }
        Ok(RefineOutcome {
            new_nodes,
            budget_exhausted,
        })
    }

    /// Mean of the surrogate under the uniform density on the domain.
    pub fn integrate_surrogate(&self, channel: &str) -> Result<f64> {
        let coeffs = self.complete_channel(channel)?;
        Ok(self
            .nodes
            .iter()
            .zip(coeffs)
            .map(|(node, &c)| {
                // Hat integral over the canonical interval of length 2.
                let weight: f64 = node
                    .id
                    .level
                    .iter()
                    .map(|&l| if l == 0 { 0.5 } else { 0.5 * spacing(l) })
                    .product();
                c * weight
            })
            .sum())
    }

    /// Serialisable snapshot of the grid.
    pub fn to_document(&self) -> GridDocument {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(k, node)| NodeRecord {
                level: node.id.level.clone(),
                index: node.id.index.clone(),
                coords: self.physical_coords(k),
                surpluses: self
                    .surpluses
                    .iter()
                    .filter_map(|(name, c)| c.get(k).map(|&v| (name.clone(), v)))
                    .collect(),
            })
            .collect();
        GridDocument {
            dim: self.dim,
            domain: self.domain.clone(),
            frontier_start: self.frontier_start,
            level: self.level,
            nodes,
        }
    }

    /// Rebuild a grid from a snapshot. Coordinates are recomputed from the
    /// multi-indices; surpluses must form a prefix per channel.
    pub fn from_document(doc: &GridDocument) -> Result<Self> {
        let mut grid = Self::new(doc.domain.clone())?;
        if grid.dim != doc.dim {
            return Err(Error::Config(format!(
                "document dim {} does not match {} domain intervals",
                doc.dim,
                doc.domain.len()
            )));
        }
        let mut ids = Vec::with_capacity(doc.nodes.len());
        for rec in &doc.nodes {
            let id = NodeId::new(rec.level.clone(), rec.index.clone())?;
            if id.dim() != grid.dim {
                return Err(Error::Config("node dimension mismatch".into()));
            }
            if grid.lookup.contains_key(&id) {
                return Err(Error::Config(format!(
                    "duplicate node {:?}/{:?}",
                    id.level, id.index
                )));
            }
            grid.lookup.insert(id.clone(), ids.len());
            ids.push(id);
        }
        grid.lookup.clear();
        grid.push_nodes(ids);
        if doc.frontier_start > grid.nodes.len() {
            return Err(Error::Config("frontier_start beyond node count".into()));
        }
        grid.frontier_start = doc.frontier_start;
        grid.level = doc.level;
        for (k, rec) in doc.nodes.iter().enumerate() {
            for (name, &value) in &rec.surpluses {
                let coeffs = grid.surpluses.entry(name.clone()).or_default();
                if coeffs.len() != k {
                    return Err(Error::Config(format!(
                        "channel '{name}' surpluses are not a node prefix"
                    )));
                }
                coeffs.push(value);
            }
        }
        Ok(grid)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_document())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_document(&serde_json::from_str(&text)?)
    }
}

/// JSON form of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDocument {
    pub dim: usize,
    pub domain: Vec<[f64; 2]>,
    #[serde(default)]
    pub frontier_start: usize,
    #[serde(default)]
    pub level: u32,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub level: Vec<u32>,
    pub index: Vec<u32>,
    pub coords: Vec<f64>,
    pub surpluses: BTreeMap<String, f64>,
}

/// All level vectors of length `dim` with entry sum `<= max_total`.
fn level_vectors(dim: usize, max_total: u32) -> Vec<Vec<u32>> {
    fn rec(dim: usize, budget: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        for l in 0..=budget {
            prefix.push(l);
            rec(dim, budget - l, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, max_total, &mut Vec::with_capacity(dim), &mut out);
    out
}

fn cartesian(ranges: &[Vec<u32>]) -> Vec<Vec<u32>> {
    ranges.iter().fold(vec![Vec::new()], |acc, range| {
        acc.into_iter()
            .flat_map(|prefix| {
                range.iter().map(move |&v| {
                    let mut next = prefix.clone();
                    next.push(v);
                    next
                })
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit_1d(level: u32, f: impl Fn(f64) -> f64) -> HierGrid {
        let mut grid = HierGrid::full(vec![[-1.0, 1.0]], level).unwrap();
        let values: Vec<f64> = grid.frontier().iter().map(|n| f(n.coords[0])).collect();
        grid.compute_surpluses_ordered(QOI_CHANNEL, &values)
            .unwrap();
        grid
    }

    fn surplus_of(grid: &HierGrid, level: Vec<u32>, index: Vec<u32>) -> f64 {
        let k = grid.position(&NodeId { level, index }).unwrap();
        grid.surpluses(QOI_CHANNEL).unwrap()[k]
    }

    #[test]
    fn hat_values() {
        assert_eq!(hat_eval(1, 1, 0.0).unwrap(), 1.0);
        assert_eq!(hat_eval(1, 1, 0.5).unwrap(), 0.5);
        assert_eq!(hat_eval(0, 0, 1.0).unwrap(), 0.0);
        assert_eq!(hat_eval(0, 1, 1.0).unwrap(), 1.0);
        assert_eq!(hat_eval(2, 3, 0.5).unwrap(), 1.0);
        assert_eq!(hat_eval(2, 3, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn invalid_pairs_are_domain_errors() {
        assert!(matches!(hat_eval(0, 2, 0.0), Err(Error::Domain(_))));
        assert!(matches!(hat_eval(2, 2, 0.0), Err(Error::Domain(_))));
        assert!(matches!(hat_eval(2, 5, 0.0), Err(Error::Domain(_))));
        assert!(NodeId::new(vec![1, 0], vec![1]).is_err());
    }

    #[test]
    fn basis_products() {
        let origin = NodeId::new(vec![1, 1], vec![1, 1]).unwrap();
        assert_eq!(origin.basis_eval(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(origin.basis_eval(&[0.5, 0.5]).unwrap(), 0.25);
        assert_eq!(origin.basis_eval(&[1.0, 0.2]).unwrap(), 0.0);
        assert!(origin.basis_eval(&[0.0]).is_err());
        let corner = NodeId::new(vec![0, 0], vec![0, 0]).unwrap();
        assert_eq!(corner.basis_eval(&corner.coords()).unwrap(), 1.0);
    }

    #[test]
    fn children_rule() {
        let n = NodeId::new(vec![1], vec![1]).unwrap();
        let kids = n.children();
        assert_eq!(
            kids,
            vec![
                NodeId::new(vec![2], vec![1]).unwrap(),
                NodeId::new(vec![2], vec![3]).unwrap()
            ]
        );
        assert_eq!(kids[0].coords(), vec![-0.5]);
        assert_eq!(kids[1].coords(), vec![0.5]);

        let left = NodeId::new(vec![0], vec![0]).unwrap();
        assert_eq!(
            left.children(),
            vec![NodeId::new(vec![1], vec![1]).unwrap()]
        );

        let n2 = NodeId::new(vec![1, 0], vec![1, 1]).unwrap();
        let mut expected = vec![
            NodeId::new(vec![2, 0], vec![1, 1]).unwrap(),
            NodeId::new(vec![2, 0], vec![3, 1]).unwrap(),
            NodeId::new(vec![1, 1], vec![1, 1]).unwrap(),
        ];
        expected.sort();
        assert_eq!(n2.children(), expected);
    }

    #[test]
    fn full_grid_sizes() {
        // 1D: 2 + 1 + 2 + 4 points through level 3.
        assert_eq!(HierGrid::full(vec![[-1.0, 1.0]], 3).unwrap().len(), 9);
        // 2D level 2: 4 corners + 4 edge midpoints + 9.
        assert_eq!(HierGrid::full(vec![[-1.0, 1.0]; 2], 2).unwrap().len(), 17);
        // 4D level 1: 16 corners + 4 * 8.
        assert_eq!(HierGrid::full(vec![[-1.0, 1.0]; 4], 1).unwrap().len(), 48);
    }

    #[test]
    fn nodes_are_sorted_and_levels_consistent() {
        let grid = HierGrid::full(vec![[-1.0, 1.0]; 3], 3).unwrap();
        assert!(grid.nodes().windows(2).all(|w| w[0].id < w[1].id));
        assert!(grid.nodes().iter().all(|n| n.id.total_level() <= 3));
    }

    #[test]
    fn quadratic_surplus_table() {
        let grid = fit_1d(2, |y| y * y);
        assert_eq!(surplus_of(&grid, vec![0], vec![0]), 1.0);
        assert_eq!(surplus_of(&grid, vec![0], vec![1]), 1.0);
        assert_eq!(surplus_of(&grid, vec![1], vec![1]), -1.0);
        assert_eq!(surplus_of(&grid, vec![2], vec![3]), -0.25);
        assert_eq!(surplus_of(&grid, vec![2], vec![1]), -0.25);
    }

    #[test]
    fn piecewise_linear_has_zero_fine_surpluses() {
        // The level-1 interpolant of |y| is |y| itself.
        let grid = fit_1d(4, f64::abs);
        let coeffs = grid.surpluses(QOI_CHANNEL).unwrap();
        for (node, c) in grid.nodes().iter().zip(coeffs) {
            if node.id.total_level() >= 2 {
                assert_eq!(*c, 0.0);
            }
        }
    }

    #[test]
    fn surplus_decay_for_quadratic() {
        let grid = fit_1d(6, |y| y * y);
        let coeffs = grid.surpluses(QOI_CHANNEL).unwrap();
        let max_at = |l: u32| {
            grid.nodes()
                .iter()
                .zip(coeffs)
                .filter(|(n, _)| n.id.total_level() == l)
                .map(|(_, c)| c.abs())
                .fold(0.0, f64::max)
        };
        for l in 2..=6 {
            assert!(max_at(l) * 2.0 <= max_at(l - 1));
            assert!((max_at(l) - 4f64.powi(1 - l as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn interpolation_and_constants() {
        let grid = fit_1d(3, |_| 3.7);
        for y in [-1.0, -0.3, 0.1, 0.77, 1.0] {
            assert!((grid.eval_surrogate(QOI_CHANNEL, &[y]).unwrap() - 3.7).abs() < 1e-14);
        }
        assert!((grid.integrate_surrogate(QOI_CHANNEL).unwrap() - 3.7).abs() < 1e-14);
    }

    #[test]
    fn quadratic_interpolation_error() {
        let grid = fit_1d(4, |y| y * y);
        let v = grid.eval_surrogate(QOI_CHANNEL, &[0.3]).unwrap();
        assert!((v - 0.09).abs() <= 2f64.powi(-6));
    }

    #[test]
    fn integrals() {
        let odd = fit_1d(0, |y| y);
        assert_eq!(odd.integrate_surrogate(QOI_CHANNEL).unwrap(), 0.0);
        let quad = fit_1d(3, |y| y * y);
        assert!((quad.integrate_surrogate(QOI_CHANNEL).unwrap() - 1.0 / 3.0).abs() <= 0.02);
    }

    #[test]
    fn unknown_channel_and_missing_values() {
        let mut grid = fit_1d(1, |y| y);
        assert!(matches!(
            grid.eval_surrogate("nope", &[0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            grid.compute_surpluses(ITERATIONS_CHANNEL, &HashMap::new()),
            Err(Error::IncompleteData(_))
        ));
    }

    #[test]
    fn physical_domain_mapping() {
        let mut grid = HierGrid::full(vec![[0.0, 4.0], [-2.0, 2.0]], 2).unwrap();
        let f = |y: &[f64]| y[0] * y[0] + 2.0 * y[1];
        let values: Vec<f64> = (0..grid.len())
            .map(|k| f(&grid.physical_coords(k)))
            .collect();
        grid.compute_surpluses_ordered(QOI_CHANNEL, &values)
            .unwrap();
        for k in 0..grid.len() {
            let y = grid.physical_coords(k);
            assert!((grid.eval_surrogate(QOI_CHANNEL, &y).unwrap() - f(&y)).abs() < 1e-12);
        }
        assert_eq!(grid.physical_coords(0), vec![0.0, -2.0]);
    }

    #[test]
    fn refine_simple_cases() {
        let mut grid = fit_1d(1, |y| y * y);
        let policy = RefinementPolicy::new(0.5, QOI_CHANNEL, 100).unwrap();
        let out = grid.refine(&policy).unwrap();
        assert_eq!(out.new_nodes.len(), 2);
        assert!(!out.budget_exhausted);
        let coords: Vec<f64> = grid.frontier().iter().map(|n| n.coords[0]).collect();
        assert_eq!(coords, vec![-0.5, 0.5]);

        let mut flat = fit_1d(1, |_| 1.0);
        let out = flat.refine(&policy).unwrap();
        assert!(out.new_nodes.is_empty());
    }

    #[test]
    fn refine_truncates_at_budget() {
        let mut grid = fit_1d(1, |y| y * y);
        let policy = RefinementPolicy::new(0.5, QOI_CHANNEL, 4).unwrap();
        let out = grid.refine(&policy).unwrap();
        assert!(out.budget_exhausted);
        assert_eq!(out.new_nodes, vec![NodeId::new(vec![2], vec![1]).unwrap()]);
        assert_eq!(grid.len(), 4);
    }

    #[test]
    fn policy_validation() {
        assert!(RefinementPolicy::new(0.0, QOI_CHANNEL, 10).is_err());
        assert!(RefinementPolicy::new(1e-3, QOI_CHANNEL, 0).is_err());
    }

    #[test]
    fn document_round_trip() {
        let mut grid = fit_1d(2, |y| y.sin());
        grid.refine(&RefinementPolicy::new(1e-6, QOI_CHANNEL, 100).unwrap())
            .unwrap();
        let doc = grid.to_document();
        let back = HierGrid::from_document(
            &serde_json::from_str(&serde_json::to_string(&doc).unwrap()).unwrap(),
        )
        .unwrap();
        assert_eq!(back.to_document(), doc);
        assert_eq!(back.frontier().len(), grid.frontier().len());
    }
}
