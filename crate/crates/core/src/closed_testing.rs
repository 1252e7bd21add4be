//! Closed testing with averaged e-values.
//!
//! An intersection hypothesis `H_J` is rejected locally when the mean e-value
//! over `J` reaches `1/alpha`. Closed testing rejects `H_I` when every
//! superset is rejected locally, and the number of false discoveries in a
//! discovery set `R` is bounded by the size of the largest non-rejected
//! subset of `R`.
//!
//! [`shortcut_bound`] finds that size in `O(m log m)` by comparing the `h`
//! smallest in-set e-values against a set-specific threshold built from the
//! out-of-set e-values below `1/alpha`. [`brute_force_bound`] enumerates all
//! `2^m - 1` intersections and serves as an oracle for small `m`.

use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::eprocess::{check_alpha, EValueMatrix};
use crate::error::{Error, Result};

/// Largest `m` accepted by the exhaustive closed-testing routines.
pub const BRUTE_FORCE_MAX_M: usize = 20;

/// A labelled set of 1-based hypothesis indices, sorted and distinct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscoverySet {
    label: String,
    indices: Vec<usize>,
}

impl DiscoverySet {
    pub fn new(label: impl Into<String>, mut indices: Vec<usize>) -> Result<Self> {
        let label = label.into();
        if indices.is_empty() {
            return Err(Error::input(format!("discovery set '{label}' is empty")));
        }
        indices.sort_unstable();
        if indices[0] == 0 {
            return Err(Error::input(format!("discovery set '{label}': indices are 1-based")));
        }
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::input(format!("discovery set '{label}': index {} repeated", w[0])));
        }
        Ok(Self { label, indices })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn check_range(&self, m: usize) -> Result<()> {
        match self.indices.last() {
            Some(&max) if max > m => Err(Error::input(format!(
                "discovery set '{}' contains index {max} but only {m} hypotheses exist",
                self.label
            ))),
            _ => Ok(()),
        }
    }

    fn membership(&self, m: usize) -> Vec<bool> {
        let mut inside = vec![false; m];
        for &i in &self.indices {
            inside[i - 1] = true;
        }
        inside
    }

    fn mask(&self) -> usize {
        self.indices.iter().fold(0usize, |acc, &i| acc | (1 << (i - 1)))
    }
}

/// Intermediate quantities of the shortcut at one time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortcutTrace {
    /// Number of out-of-set hypotheses in the witness complement.
    pub k_star: usize,
    /// `k*/alpha - sum of the k* smallest out-of-set e-values`.
    pub rhs: f64,
    /// Largest non-rejected subset size; equals the bound.
    pub h_max: usize,
}

fn check_e_row(e: &[f64]) -> Result<()> {
    if e.is_empty() {
        return Err(Error::input("e-value vector is empty"));
    }
    if let Some(bad) = e.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::input(format!("e-values must be finite and nonnegative, got {bad}")));
    }
    Ok(())
}

/// Hypothesis indices ordered by (e-value, index) ascending.
#[derive(Debug, Clone)]
pub struct SortedEValues<'a> {
    e: &'a [f64],
    order: Vec<usize>,
}

impl<'a> SortedEValues<'a> {
    pub fn new(e: &'a [f64]) -> Result<Self> {
        check_e_row(e)?;
        let mut order: Vec<usize> = (0..e.len()).collect();
        order.sort_by(|&a, &b| e[a].total_cmp(&e[b]).then(a.cmp(&b)));
        Ok(Self { e, order })
    }

    pub fn m(&self) -> usize {
        self.e.len()
    }

    fn shortcut(&self, inside: &[bool], alpha: f64) -> ShortcutTrace {
        let threshold = 1.0 / alpha;
        // k* keeps exactly the out-of-set values strictly below 1/alpha: each
        // adds a positive amount to the objective, everything later adds <= 0.
        let mut k_star = 0;
        let mut rhs = 0.0;
        for &j in self.order.iter().filter(|&&j| !inside[j]) {
            if self.e[j] < threshold {
                k_star += 1;
                rhs += threshold - self.e[j];
            } else {
                break;
            }
        }
        let mut lhs = 0.0;
        let mut h_max = 0;
        for (h, &i) in self.order.iter().filter(|&&i| inside[i]).enumerate() {
            lhs += self.e[i] - threshold;
            if lhs < rhs {
                h_max = h + 1;
            }
        }
        ShortcutTrace { k_star, rhs, h_max }
    }
}

/// Upper confidence bound for the number of true nulls in `r`, via the
/// sorted-threshold shortcut. Returns the bound and its trace.
pub fn shortcut_bound(e: &[f64], r: &DiscoverySet, alpha: f64) -> Result<(usize, ShortcutTrace)> {
    check_alpha(alpha)?;
    let sorted = SortedEValues::new(e)?;
    r.check_range(e.len())?;
    let trace = sorted.shortcut(&r.membership(e.len()), alpha);
    Ok((trace.h_max, trace))
}

/// For every nonempty mask, whether some superset escapes local rejection.
fn closure_survivors(m: usize, locally_rejected: impl Fn(usize) -> bool) -> Vec<bool> {
    let full = (1usize << m) - 1;
    let mut survives = vec![false; full + 1];
    for mask in (1..=full).rev() {
        let mut s = !locally_rejected(mask);
        let mut free = full & !mask;
        while !s && free != 0 {
            let bit = free & free.wrapping_neg();
            s = survives[mask | bit];
            free &= free - 1;
        }
        survives[mask] = s;
    }
    survives
}

fn largest_surviving_subset(r_mask: usize, survives: &[bool]) -> usize {
    let mut best = 0;
    let mut sub = r_mask;
    while sub != 0 {
        if survives[sub] {
            best = best.max(sub.count_ones() as usize);
        }
        sub = (sub - 1) & r_mask;
    }
    best
}

fn subset_table(values: &[f64], combine: impl Fn(f64, f64) -> f64, empty: f64) -> Vec<f64> {
    let size = 1usize << values.len();
    let mut table = vec![empty; size];
    for mask in 1..size {
        let low = mask.trailing_zeros() as usize;
        table[mask] = combine(table[mask & (mask - 1)], values[low]);
    }
    table
}

fn check_brute_force_size(m: usize) -> Result<()> {
    if m > BRUTE_FORCE_MAX_M {
        Err(Error::TooLarge { m, limit: BRUTE_FORCE_MAX_M })
    } else {
        Ok(())
    }
}

/// Exhaustive closed testing with average merging. Exponential in `m`.
pub fn brute_force_bound(e: &[f64], r: &DiscoverySet, alpha: f64) -> Result<usize> {
    check_brute_force_size(e.len())?;
    check_alpha(alpha)?;
    check_e_row(e)?;
    r.check_range(e.len())?;
    let threshold = 1.0 / alpha;
    let sums = subset_table(e, |acc, v| acc + v, 0.0);
    let survives = closure_survivors(e.len(), |mask| {
        sums[mask] / mask.count_ones() as f64 >= threshold
    });
    Ok(largest_surviving_subset(r.mask(), &survives))
}

/// Exhaustive closed testing with Bonferroni local tests on p-values:
/// `H_J` is rejected iff `min_{j in J} p_j <= alpha / |J|`.
pub fn p_value_closed_testing_bound(p: &[f64], r: &DiscoverySet, alpha: f64) -> Result<usize> {
    check_brute_force_size(p.len())?;
    check_alpha(alpha)?;
    if p.is_empty() {
        return Err(Error::input("p-value vector is empty"));
    }
    if let Some(bad) = p.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(Error::input(format!("p-values must lie in (0, 1], got {bad}")));
    }
    r.check_range(p.len())?;
    let mins = subset_table(p, f64::min, f64::INFINITY);
    let survives = closure_survivors(p.len(), |mask| {
        mins[mask] <= alpha / mask.count_ones() as f64
    });
    Ok(largest_surviving_subset(r.mask(), &survives))
}

/// Bound values for one discovery set at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub time: usize,
    pub c_inst: usize,
    pub c_ard: usize,
    pub tdp_inst: f64,
    pub tdp_ard: f64,
}

/// Tracks the instantaneous bound and its running minimum for one set.
#[derive(Debug, Clone)]
pub struct BoundTracker {
    set: DiscoverySet,
    inside: Vec<bool>,
    alpha: f64,
    running_min: Option<usize>,
}

impl BoundTracker {
    pub fn new(set: DiscoverySet, m: usize, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        set.check_range(m)?;
        let inside = set.membership(m);
        Ok(Self { set, inside, alpha, running_min: None })
    }

    /// Resumes with a previously observed running minimum.
    pub fn with_running_min(mut self, running_min: Option<usize>) -> Result<Self> {
        if let Some(c) = running_min {
            if c > self.set.len() {
                return Err(Error::input(format!(
                    "running minimum {c} exceeds size {} of set '{}'",
                    self.set.len(),
                    self.set.label()
                )));
            }
        }
        self.running_min = running_min;
        Ok(self)
    }

    pub fn set(&self) -> &DiscoverySet {
        &self.set
    }

    pub fn running_min(&self) -> Option<usize> {
        self.running_min
    }

    pub fn observe(&mut self, time: usize, e: &[f64]) -> Result<BoundRow> {
        let sorted = SortedEValues::new(e)?;
        self.observe_sorted(time, &sorted)
    }

    pub fn observe_sorted(&mut self, time: usize, sorted: &SortedEValues<'_>) -> Result<BoundRow> {
        if sorted.m() != self.inside.len() {
            return Err(Error::input(format!(
                "e-value row has {} entries, expected {}",
                sorted.m(),
                self.inside.len()
            )));
        }
        let c_inst = sorted.shortcut(&self.inside, self.alpha).h_max;
        let c_ard = self.running_min.map_or(c_inst, |c| c.min(c_inst));
        self.running_min = Some(c_ard);
        let size = self.set.len() as f64;
        Ok(BoundRow {
            time,
            c_inst,
            c_ard,
            tdp_inst: 1.0 - c_inst as f64 / size,
            tdp_ard: 1.0 - c_ard as f64 / size,
        })
    }
}

/// Per-time bounds for one discovery set.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSeries {
    set_size: usize,
    start_time: usize,
    c_inst: Vec<usize>,
    c_ard: Vec<usize>,
    ard: bool,
}

impl BoundSeries {
    pub fn from_rows(set_size: usize, rows: &[BoundRow], ard: bool) -> Self {
        Self {
            set_size,
            start_time: rows.first().map_or(0, |r| r.time),
            c_inst: rows.iter().map(|r| r.c_inst).collect(),
            c_ard: rows.iter().map(|r| r.c_ard).collect(),
            ard,
        }
    }

    /// Builds a series from instantaneous bounds, deriving the running minimum.
    pub fn from_instantaneous(set_size: usize, start_time: usize, c_inst: Vec<usize>, ard: bool) -> Self {
        let c_ard = c_inst
            .iter()
            .scan(usize::MAX, |acc, &c| {
                *acc = (*acc).min(c);
                Some(*acc)
            })
            .collect();
        Self { set_size, start_time, c_inst, c_ard, ard }
    }

    pub fn len(&self) -> usize {
        self.c_inst.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_inst.is_empty()
    }

    pub fn set_size(&self) -> usize {
        self.set_size
    }

    pub fn start_time(&self) -> usize {
        self.start_time
    }

    pub fn ard(&self) -> bool {
        self.ard
    }

    pub fn c_inst(&self) -> &[usize] {
        &self.c_inst
    }

    pub fn c_ard(&self) -> &[usize] {
        &self.c_ard
    }

    fn to_tdp(&self, c: &[usize]) -> Vec<f64> {
        c.iter().map(|&c| 1.0 - c as f64 / self.set_size as f64).collect()
    }

    pub fn tdp_inst(&self) -> Vec<f64> {
        self.to_tdp(&self.c_inst)
    }

    pub fn tdp_ard(&self) -> Vec<f64> {
        self.to_tdp(&self.c_ard)
    }

    /// The bound selected by the series' ARD mode.
    pub fn reported_c(&self) -> &[usize] {
        if self.ard {
            &self.c_ard
        } else {
            &self.c_inst
        }
    }

    pub fn reported_tdp(&self) -> Vec<f64> {
        self.to_tdp(self.reported_c())
    }

    pub fn row(&self, i: usize) -> BoundRow {
        let size = self.set_size as f64;
        BoundRow {
            time: self.start_time + i,
            c_inst: self.c_inst[i],
            c_ard: self.c_ard[i],
            tdp_inst: 1.0 - self.c_inst[i] as f64 / size,
            tdp_ard: 1.0 - self.c_ard[i] as f64 / size,
        }
    }
}

/// Bounds for one set at every time of `matrix`, starting at time 0.
pub fn bound_series(matrix: &EValueMatrix, r: &DiscoverySet, alpha: f64, ard: bool) -> Result<BoundSeries> {
    let mut tracker = BoundTracker::new(r.clone(), matrix.m(), alpha)?;
    let rows = matrix
        .rows()
        .enumerate()
        .map(|(time, e)| tracker.observe(time, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundSeries::from_rows(r.len(), &rows, ard))
}

/// Bounds for several sets from one matrix, keyed by label in input order.
pub fn multi_r_bounds(
    matrix: &EValueMatrix,
    sets: &[DiscoverySet],
    alpha: f64,
    ard: bool,
) -> Result<IndexMap<String, BoundSeries>> {
    if sets.is_empty() {
        return Err(Error::input("no discovery sets given"));
    }
    let mut seen = HashSet::new();
    for s in sets {
        if !seen.insert(s.label()) {
            return Err(Error::input(format!("duplicate discovery set label '{}'", s.label())));
        }
    }
    let mut trackers = sets
        .iter()
        .map(|s| BoundTracker::new(s.clone(), matrix.m(), alpha))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<Vec<BoundRow>> = vec![Vec::with_capacity(matrix.horizon() + 1); sets.len()];
    for (time, e) in matrix.rows().enumerate() {
        let sorted = SortedEValues::new(e)?;
        for (tracker, out) in trackers.iter_mut().zip(rows.iter_mut()) {
            out.push(tracker.observe_sorted(time, &sorted)?);
        }
    }
    Ok(sets
        .iter()
        .zip(rows)
        .map(|(s, r)| (s.label().to_string(), BoundSeries::from_rows(s.len(), &r, ard)))
        .collect())
}
