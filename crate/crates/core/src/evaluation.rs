//! Cluster extraction, clustering agreement, survival statistics and
//! insertion of new samples into an organized dataset.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::metrics::{tree_distance, FolderWeights};
use crate::tree::PartitionTree;

/// Label of every element: the id of its level-`l` folder.
pub fn clusters_at_level(tree: &PartitionTree, level: usize) -> Result<Vec<usize>> {
    if level > tree.depth() {
        return Err(Error::LevelOutOfRange {
            level,
            min: 0,
            max: tree.depth(),
        });
    }
    Ok((0..tree.axis_size()).map(|x| tree.folder_of(level, x)).collect())
}

/// The coarsest level with exactly `count` folders.
pub fn level_with_folder_count(tree: &PartitionTree, count: usize) -> Option<usize> {
    (0..=tree.depth()).rev().find(|&l| tree.level(l).len() == count)
}

struct Contingency {
    n: f64,
    cells: Vec<f64>,
    rows: Vec<f64>,
    cols: Vec<f64>,
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency> {
    check_len(a.len(), b.len())?;
    if a.is_empty() {
        return Err(Error::InvalidInput("labelings are empty".into()));
    }
    // Ordered maps keep floating-point sums independent of hashing.
    let mut cells: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    Ok(Contingency {
        n: a.len() as f64,
        cells: cells.into_values().map(|c| c as f64).collect(),
        rows: rows.into_values().map(|c| c as f64).collect(),
        cols: cols.into_values().map(|c| c as f64).collect(),
    })
}

fn pairs(k: f64) -> f64 {
    k * (k - 1.0) / 2.0
}

/// Fraction of element pairs on which the two labelings agree.
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    let c = contingency(a, b)?;
    let total = pairs(c.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let both: f64 = c.cells.iter().map(|&k| pairs(k)).sum();
    let in_a: f64 = c.rows.iter().map(|&k| pairs(k)).sum();
    let in_b: f64 = c.cols.iter().map(|&k| pairs(k)).sum();
    Ok((total + 2.0 * both - in_a - in_b) / total)
}

/// Rand index adjusted for chance under the hypergeometric model. Two
/// identical trivial labelings (both one cluster or both all singletons)
/// score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    let c = contingency(a, b)?;
    let total = pairs(c.n);
    let both: f64 = c.cells.iter().map(|&k| pairs(k)).sum();
    let in_a: f64 = c.rows.iter().map(|&k| pairs(k)).sum();
    let in_b: f64 = c.cols.iter().map(|&k| pairs(k)).sum();
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = in_a * in_b / total;
    let max = 0.5 * (in_a + in_b);
    if max == expected {
        return Ok(if both == expected { 1.0 } else { 0.0 });
    }
    Ok((both - expected) / (max - expected))
}

/// `H(a) + H(b) − 2·I(a, b)` in nats.
pub fn variation_of_information(a: &[usize], b: &[usize]) -> Result<f64> {
    let c = contingency(a, b)?;
    let plogp = |k: f64| {
        let p = k / c.n;
        -p * p.ln()
    };
    let h_a: f64 = c.rows.iter().map(|&k| plogp(k)).sum();
    let h_b: f64 = c.cols.iter().map(|&k| plogp(k)).sum();
    let h_ab: f64 = c.cells.iter().map(|&k| plogp(k)).sum();
    // I = H(a) + H(b) − H(a, b), so VI = 2·H(a, b) − H(a) − H(b).
    Ok((2.0 * h_ab - h_a - h_b).max(0.0))
}

/// Follow-up times with right censoring and a group label per subject.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalCohort {
    time: Vec<f64>,
    event: Vec<bool>,
    group: Vec<i64>,
}

impl SurvivalCohort {
    pub fn new(time: Vec<f64>, event: Vec<bool>, group: Vec<i64>) -> Result<Self> {
        check_len(time.len(), event.len())?;
        check_len(time.len(), group.len())?;
        if let Some(t) = time.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidInput(format!("survival time {t} is not positive")));
        }
        Ok(Self { time, event, group })
    }

    /// The same subjects with new group labels.
    pub fn with_groups(&self, group: Vec<i64>) -> Result<Self> {
        Self::new(self.time.clone(), self.event.clone(), group)
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn groups(&self) -> Vec<i64> {
        self.group
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    fn subjects(&self, group: i64) -> impl Iterator<Item = (f64, bool)> + '_ {
        (0..self.len())
            .filter(move |&i| self.group[i] == group)
            .map(|i| (self.time[i], self.event[i]))
    }
}

/// Product-limit survival estimate `(t, Ŝ(t))` at each distinct event time
/// of `group`. Subjects censored at `t` are still at risk at `t`.
pub fn kaplan_meier(cohort: &SurvivalCohort, group: i64) -> Result<Vec<(f64, f64)>> {
    let mut subjects: Vec<(f64, bool)> = cohort.subjects(group).collect();
    if subjects.is_empty() {
        return Err(Error::InvalidInput(format!("group {group} has no subjects")));
    }
    subjects.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut at_risk = subjects.len();
    let mut s = 1.0;
    let mut out = Vec::new();
    let mut i = 0;
    while i < subjects.len() {
        let t = subjects[i].0;
        let mut deaths = 0;
        let mut leaving = 0;
        while i < subjects.len() && subjects[i].0 == t {
            deaths += usize::from(subjects[i].1);
            leaving += 1;
            i += 1;
        }
        if deaths > 0 {
            s *= (at_risk - deaths) as f64 / at_risk as f64;
            out.push((t, s));
        }
        at_risk -= leaving;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogRank {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Log-rank test of equal survival across `groups` (at least two distinct,
/// non-empty groups). Uses the hypergeometric variance at each event time;
/// with more than two groups the statistic is the quadratic form of the
/// first `k − 1` observed-minus-expected counts.
pub fn log_rank(cohort: &SurvivalCohort, groups: &[i64]) -> Result<LogRank> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::InvalidInput("log-rank needs at least two groups".into()));
    }
    if groups.iter().collect::<BTreeSet<_>>().len() != k {
        return Err(Error::InvalidInput("log-rank groups must be distinct".into()));
    }
    let index: HashMap<i64, usize> = groups.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    let mut counts = vec![0usize; k];
    // time -> (deaths per group, subjects leaving per group)
    let mut table: BTreeMap<u64, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for i in 0..cohort.len() {
        let Some(&g) = index.get(&cohort.group[i]) else {
            continue;
        };
        counts[g] += 1;
        let row = table
            .entry(cohort.time[i].to_bits())
            .or_insert_with(|| (vec![0; k], vec![0; k]));
        row.0[g] += usize::from(cohort.event[i]);
        row.1[g] += 1;
    }
    if let Some(g) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidInput(format!("group {} has no subjects", groups[g])));
    }
    let mut at_risk: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let mut o_minus_e = DVector::<f64>::zeros(k);
    let mut var = DMatrix::<f64>::zeros(k, k);
    for (deaths, leaving) in table.values() {
        let n: f64 = at_risk.iter().sum();
        let d: f64 = deaths.iter().sum::<usize>() as f64;
        if d > 0.0 {
            for a in 0..k {
                o_minus_e[a] += deaths[a] as f64 - d * at_risk[a] / n;
            }
            if n > 1.0 {
                let scale = d * (n - d) / (n - 1.0);
                for a in 0..k {
                    for b in 0..k {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        var[(a, b)] += scale * (at_risk[a] / n) * (delta - at_risk[b] / n);
                    }
                }
            }
        }
        for (r, &l) in at_risk.iter_mut().zip(leaving) {
            *r -= l as f64;
        }
    }
    let df = k - 1;
    let u = o_minus_e.rows(1, df).into_owned();
    let v = var.view((1, 1), (df, df)).into_owned();
    let statistic = if v.iter().all(|&x| x == 0.0) {
        0.0
    } else {
        let x = v
            .lu()
            .solve(&u)
            .ok_or_else(|| Error::InvalidInput("log-rank variance matrix is singular".into()))?;
        u.dot(&x).max(0.0)
    };
    Ok(LogRank {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df as f64),
    })
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub(crate) fn ln_gamma(x: f64) -> f64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let sum = C[1..]
        .iter()
        .enumerate()
        .fold(C[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub(crate) fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        // Series for P(a, x).
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..1000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (1.0 - sum * log_prefix.exp()).clamp(0.0, 1.0)
    } else {
        // Lentz continued fraction for Q(a, x).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-17 {
                break;
            }
        }
        (h * log_prefix.exp()).clamp(0.0, 1.0)
    }
}

/// Upper tail of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, x / 2.0)
}

/// Result of inserting new samples into a trained organization.
#[derive(Clone, Debug, PartialEq)]
pub struct Insertion {
    /// Level-1 folder of the training tree assigned to each new sample.
    pub assignments: Vec<usize>,
    /// Tree over the new samples whose level-`l` folders group samples
    /// sharing a level-`l` training ancestor.
    pub tree: PartitionTree,
}

/// Assigns each column of `new` to the nearest level-1 folder centroid of
/// the training observations, measured with the feature-tree metric. Ties go
/// to the smallest folder id.
pub fn insert_samples(
    train: &Array2<f64>,
    tree_y: &PartitionTree,
    tree_x: &PartitionTree,
    weights_x: &FolderWeights,
    new: &Array2<f64>,
) -> Result<Insertion> {
    check_len(train.ncols(), tree_y.axis_size())?;
    check_len(train.nrows(), tree_x.axis_size())?;
    check_len(train.nrows(), new.nrows())?;
    if tree_y.depth() < 1 {
        return Err(Error::InvalidInput("training tree has no level 1".into()));
    }
    let level1 = tree_y.level(1);
    let centroids: Vec<Vec<f64>> = level1
        .iter()
        .map(|&id| {
            let members = &tree_y.folder(id).members;
            (0..train.nrows())
                .map(|r| members.iter().map(|&c| train[[r, c]]).sum::<f64>() / members.len() as f64)
                .collect()
        })
        .collect();
    let mut assignments = Vec::with_capacity(new.ncols());
    for col in new.columns() {
        let y = col.to_vec();
        let mut best = (f64::INFINITY, usize::MAX);
        for (&id, c) in level1.iter().zip(&centroids) {
            let d = tree_distance(tree_x, weights_x, &y, c)?;
            if d < best.0 || (d == best.0 && id < best.1) {
                best = (d, id);
            }
        }
        assignments.push(best.1);
    }
    let m = new.ncols();
    let mut partitions = vec![(0..m).map(|i| vec![i]).collect::<Vec<_>>()];
    for l in 1..=tree_y.depth() {
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &a) in assignments.iter().enumerate() {
            let anchor = tree_y.folder(a).members[0];
            groups.entry(tree_y.folder_of(l, anchor)).or_default().push(i);
        }
        partitions.push(groups.into_values().collect());
    }
    let tree = PartitionTree::from_partitions(m, partitions)?;
    Ok(Insertion { assignments, tree })
}
