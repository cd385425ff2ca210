//! Partition trees: nested partitions of an index set `{0..n-1}` from
//! singleton leaves (level 0) up to a single root folder (level `L`).
//!
//! Trees have uniform depth. A folder that is not merged with anything at a
//! given level passes through unchanged to the next level and keeps a
//! distinct folder id there.
//!
//! Folder ids are canonical: level-major, and within a level ascending by
//! smallest member. Leaf `i` therefore has id `i` and the root has id `N-1`.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One folder `I_{l,i}` of a tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Folder {
    pub id: usize,
    pub level: usize,
    /// Sorted axis indices.
    pub members: Vec<usize>,
    pub parent: Option<usize>,
}

impl Folder {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn smallest(&self) -> usize {
        self.members[0]
    }
}

/// Serialized folder entry of the tree JSON format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawFolder {
    pub level: usize,
    pub members: Vec<usize>,
    pub parent: Option<usize>,
}

/// The tree JSON format, exactly as stored on disk. It may describe an
/// invalid tree; see [`validate_tree`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTree {
    pub axis_size: usize,
    pub levels: Vec<Vec<usize>>,
    pub folders: BTreeMap<usize, RawFolder>,
}

/// A single broken tree property.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub folder: Option<usize>,
    pub property: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.folder {
            Some(id) => write!(f, "folder {id}: {}", self.property),
            None => f.write_str(&self.property),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, folder: Option<usize>, property: impl Into<String>) {
        self.violations.push(Violation {
            folder,
            property: property.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks every structural property of a partition tree. Violations are
/// returned as data.
pub fn validate_tree(raw: &RawTree) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = raw.axis_size;
    if n == 0 {
        report.push(None, "axis_size must be positive");
        return report;
    }
    if raw.levels.is_empty() {
        report.push(None, "tree has no levels");
        return report;
    }
    let depth = raw.levels.len() - 1;

    // Every listed id exists, sits at the level it claims and is listed once.
    let mut listed = BTreeSet::new();
    for (l, ids) in raw.levels.iter().enumerate() {
        for &id in ids {
            if !listed.insert(id) {
                report.push(Some(id), "listed more than once in levels");
            }
            match raw.folders.get(&id) {
                None => report.push(Some(id), format!("listed at level {l} but not defined")),
                Some(f) if f.level != l => report.push(
                    Some(id),
                    format!("declares level {} but is listed at level {l}", f.level),
                ),
                _ => {}
            }
        }
    }
    for &id in raw.folders.keys() {
        if !listed.contains(&id) {
            report.push(Some(id), "defined but not listed in any level");
        }
    }

    for (&id, f) in &raw.folders {
        if f.members.is_empty() {
            report.push(Some(id), "members are empty");
        }
        if f.members.iter().any(|&x| x >= n) {
            report.push(Some(id), "member outside axis");
        }
        if f.members.windows(2).any(|w| w[0] >= w[1]) {
            report.push(Some(id), "members are not sorted and unique");
        }
        match f.parent {
            None if f.level != depth => report.push(Some(id), "missing parent below the root level"),
            Some(_) if f.level == depth => report.push(Some(id), "root level folder has a parent"),
            Some(p) => match raw.folders.get(&p) {
                None => report.push(Some(id), format!("parent {p} does not exist")),
                Some(pf) => {
                    if pf.level != f.level + 1 {
                        report.push(Some(id), format!("parent {p} is not on the next level"));
                    }
                    let parent_set: BTreeSet<usize> = pf.members.iter().copied().collect();
                    if !f.members.iter().all(|x| parent_set.contains(x)) {
                        report.push(Some(id), format!("members are not a subset of parent {p}"));
                    }
                }
            },
            None => {}
        }
    }

    for (l, ids) in raw.levels.iter().enumerate() {
        let mut count = vec![0usize; n];
        for id in ids {
            if let Some(f) = raw.folders.get(id) {
                for &x in f.members.iter().filter(|&&x| x < n) {
                    count[x] += 1;
                }
            }
        }
        if count.contains(&0) {
            report.push(None, format!("level {l} does not cover axis"));
        }
        if count.iter().any(|&c| c > 1) {
            report.push(None, format!("level {l} folders overlap"));
        }
    }

    let leaves_ok = raw.levels[0].len() == n
        && raw.levels[0]
            .iter()
            .all(|id| raw.folders.get(id).is_some_and(|f| f.members.len() == 1));
    if !leaves_ok {
        report.push(None, "level 0 must consist of exactly axis_size singleton folders");
    }
    let root_ok = raw.levels[depth].len() == 1
        && raw
            .folders
            .get(&raw.levels[depth][0])
            .is_some_and(|f| f.members.len() == n);
    if !root_ok {
        report.push(
            None,
            format!("level {depth} must be a single root folder over the axis"),
        );
    }
    report
}

/// A validated partition tree with canonical folder ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionTree {
    axis_size: usize,
    levels: Vec<Vec<usize>>,
    folders: Vec<Folder>,
    children: Vec<Vec<usize>>,
    /// `membership[l][x]` is the id of the level-`l` folder containing `x`.
    membership: Vec<Vec<usize>>,
}

impl PartitionTree {
    /// Builds a tree from per-level partitions (level 0 first). Folder and
    /// member order inside the input is irrelevant.
    pub fn from_partitions(axis_size: usize, partitions: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        let raw = raw_from_partitions(axis_size, partitions);
        Self::try_from(raw)
    }

    /// The minimal tree: `n` leaves directly under the root (a single
    /// folder when `n == 1`).
    pub fn trivial(axis_size: usize) -> Self {
        let mut parts = vec![(0..axis_size).map(|i| vec![i]).collect::<Vec<_>>()];
        if axis_size > 1 {
            parts.push(vec![(0..axis_size).collect()]);
        }
        Self::from_partitions(axis_size, parts).expect("trivial tree is valid")
    }

    pub fn axis_size(&self) -> usize {
        self.axis_size
    }

    /// `L`, the index of the root level.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// `N`, the number of folders.
    pub fn num_folders(&self) -> usize {
        self.folders.len()
    }

    pub fn folders(&self) -> &[Folder] {
        &self.folders
    }

    pub fn folder(&self, id: usize) -> &Folder {
        &self.folders[id]
    }

    pub fn level(&self, l: usize) -> &[usize] {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    pub fn root(&self) -> usize {
        self.folders.len() - 1
    }

    /// Children of a folder, ascending by smallest member.
    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    /// Id of the level-`l` folder containing axis element `x`.
    pub fn folder_of(&self, l: usize, x: usize) -> usize {
        self.membership[l][x]
    }

    /// True when the folder equals its only child.
    pub fn is_pass_through(&self, id: usize) -> bool {
        self.children[id].len() == 1
    }

    /// Folder ids of `id` and everything below it.
    pub fn descendants(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut i = 0;
        while i < out.len() {
            out.extend_from_slice(&self.children[out[i]]);
            i += 1;
        }
        out.sort_unstable();
        out
    }

    /// Member lists per level, level 0 first.
    pub fn partitions(&self) -> Vec<Vec<Vec<usize>>> {
        self.levels
            .iter()
            .map(|ids| ids.iter().map(|&id| self.folders[id].members.clone()).collect())
            .collect()
    }

    /// Stable fingerprint of the tree structure.
    pub fn signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.axis_size.hash(&mut h);
        for f in &self.folders {
            f.level.hash(&mut h);
            f.members.hash(&mut h);
        }
        h.finish()
    }

    pub fn to_raw(&self) -> RawTree {
        RawTree {
            axis_size: self.axis_size,
            levels: self.levels.clone(),
            folders: self
                .folders
                .iter()
                .map(|f| {
                    (
                        f.id,
                        RawFolder {
                            level: f.level,
                            members: f.members.clone(),
                            parent: f.parent,
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawTree = serde_json::from_str(text)?;
        Self::try_from(raw)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Applies `f` to every axis index, e.g. to un-permute a tree.
    pub fn relabel(&self, f: impl Fn(usize) -> usize) -> Result<Self> {
        let parts = self
            .partitions()
            .into_iter()
            .map(|level| level.into_iter().map(|m| m.into_iter().map(&f).collect()).collect())
            .collect();
        Self::from_partitions(self.axis_size, parts)
    }
}

impl TryFrom<RawTree> for PartitionTree {
    type Error = Error;

    fn try_from(raw: RawTree) -> Result<Self> {
        let report = validate_tree(&raw);
        if !report.is_ok() {
            return Err(Error::InvalidTree(report.to_string()));
        }
        let n = raw.axis_size;
        // Canonical ids: level-major, ascending smallest member.
        let mut folders = Vec::new();
        let mut levels = Vec::with_capacity(raw.levels.len());
        for (l, ids) in raw.levels.iter().enumerate() {
            let mut members: Vec<Vec<usize>> = ids.iter().map(|id| raw.folders[id].members.clone()).collect();
            members.sort_unstable_by_key(|m| m[0]);
            let mut level_ids = Vec::with_capacity(members.len());
            for m in members {
                let id = folders.len();
                level_ids.push(id);
                folders.push(Folder {
                    id,
                    level: l,
                    members: m,
                    parent: None,
                });
            }
            levels.push(level_ids);
        }
        let mut membership = vec![vec![0usize; n]; levels.len()];
        for (l, ids) in levels.iter().enumerate() {
            for &id in ids {
                for &x in &folders[id].members {
                    membership[l][x] = id;
                }
            }
        }
        let mut children = vec![Vec::new(); folders.len()];
        for l in 0..levels.len() - 1 {
            for &id in &levels[l] {
                let parent = membership[l + 1][folders[id].members[0]];
                folders[id].parent = Some(parent);
                children[parent].push(id);
            }
        }
        Ok(Self {
            axis_size: n,
            levels,
            folders,
            children,
            membership,
        })
    }
}

pub(crate) fn raw_from_partitions(axis_size: usize, partitions: Vec<Vec<Vec<usize>>>) -> RawTree {
    let mut folders = BTreeMap::new();
    let mut levels = Vec::with_capacity(partitions.len());
    let mut next = 0usize;
    let mut owner: Vec<Vec<(Vec<usize>, usize)>> = Vec::new();
    for (l, mut level) in partitions.into_iter().enumerate() {
        for m in level.iter_mut() {
            m.sort_unstable();
            m.dedup();
        }
        level.sort_by_key(|m| m.first().copied().unwrap_or(usize::MAX));
        let mut ids = Vec::with_capacity(level.len());
        let mut entries = Vec::with_capacity(level.len());
        for m in level {
            ids.push(next);
            entries.push((m.clone(), next));
            folders.insert(
                next,
                RawFolder {
                    level: l,
                    members: m,
                    parent: None,
                },
            );
            next += 1;
        }
        levels.push(ids);
        owner.push(entries);
    }
    // Parent = the next-level folder holding the folder's smallest member.
    for l in 0..owner.len().saturating_sub(1) {
        let mut lookup = vec![None; axis_size];
        for (m, id) in &owner[l + 1] {
            for &x in m.iter().filter(|&&x| x < axis_size) {
                lookup[x] = Some(*id);
            }
        }
        for (m, id) in &owner[l] {
            let parent = m.first().and_then(|&x| lookup.get(x).copied().flatten());
            if let Some(f) = folders.get_mut(id) {
                f.parent = parent;
            }
        }
    }
    RawTree {
        axis_size,
        levels,
        folders,
    }
}

/// Left-to-right depth-first order of the leaves. Every folder's members are
/// contiguous in the result.
pub fn leaf_order(tree: &PartitionTree) -> Vec<usize> {
    let mut order = Vec::with_capacity(tree.axis_size());
    let mut stack = vec![tree.root()];
    while let Some(id) = stack.pop() {
        let kids = tree.children(id);
        if kids.is_empty() {
            order.push(tree.folder(id).members[0]);
        } else {
            stack.extend(kids.iter().rev());
        }
    }
    order
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TreeStats {
    pub axis_size: usize,
    pub depth: usize,
    pub num_folders: usize,
    pub folders_per_level: Vec<usize>,
    /// Folder size -> number of folders of that size.
    pub size_histogram: BTreeMap<usize, usize>,
}

pub fn tree_stats(tree: &PartitionTree) -> TreeStats {
    let mut size_histogram = BTreeMap::new();
    for f in tree.folders() {
        *size_histogram.entry(f.len()).or_insert(0) += 1;
    }
    TreeStats {
        axis_size: tree.axis_size(),
        depth: tree.depth(),
        num_folders: tree.num_folders(),
        folders_per_level: tree.levels().iter().map(Vec::len).collect(),
        size_histogram,
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::eight_leaf_tree;
    use super::*;

    #[test]
    fn eight_leaf_tree_is_valid() {
        let t = eight_leaf_tree();
        assert!(validate_tree(&t.to_raw()).is_ok());
        let s = tree_stats(&t);
        assert_eq!(s.axis_size, 8);
        assert_eq!(s.num_folders, 14);
        assert_eq!(s.folders_per_level, vec![8, 3, 2, 1]);
        assert_eq!(s.size_histogram.values().sum::<usize>(), 14);
    }

    #[test]
    fn trivial_tree_stats() {
        let t = PartitionTree::trivial(5);
        let s = tree_stats(&t);
        assert_eq!((s.depth, s.num_folders), (1, 6));
        assert!(validate_tree(&t.to_raw()).is_ok());
        let one = PartitionTree::trivial(1);
        assert_eq!((one.depth(), one.num_folders()), (0, 1));
    }

    #[test]
    fn detects_uncovered_level() {
        let raw = raw_from_partitions(
            4,
            vec![
                (0..4).map(|i| vec![i]).collect(),
                vec![vec![0, 1], vec![2]],
                vec![(0..4).collect()],
            ],
        );
        let report = validate_tree(&raw);
        assert!(!report.is_ok());
        assert!(report
            .violations
            .iter()
            .any(|v| v.property == "level 1 does not cover axis"));
        assert!(PartitionTree::try_from(raw).is_err());
    }

    #[test]
    fn detects_broken_nesting() {
        let raw = raw_from_partitions(
            4,
            vec![
                (0..4).map(|i| vec![i]).collect(),
                vec![vec![0, 1], vec![2, 3]],
                vec![vec![0, 2], vec![1, 3]],
                vec![(0..4).collect()],
            ],
        );
        let report = validate_tree(&raw);
        assert!(report.violations.iter().any(|v| v.property.contains("not a subset")));
    }

    #[test]
    fn detects_bad_parent_links() {
        let mut raw = PartitionTree::trivial(3).to_raw();
        raw.folders.get_mut(&0).unwrap().parent = None;
        raw.folders.get_mut(&3).unwrap().parent = Some(1);
        let report = validate_tree(&raw);
        let text = report.to_string();
        assert!(text.contains("folder 0: missing parent"), "{text}");
        assert!(text.contains("folder 3: root level folder has a parent"), "{text}");
    }

    #[test]
    fn leaf_order_examples() {
        assert_eq!(leaf_order(&PartitionTree::trivial(3)), vec![0, 1, 2]);
        let t = PartitionTree::from_partitions(
            4,
            vec![
                (0..4).map(|i| vec![i]).collect(),
                vec![vec![2, 3], vec![0, 1]],
                vec![(0..4).collect()],
            ],
        )
        .unwrap();
        assert_eq!(leaf_order(&t), vec![0, 1, 2, 3]);

        let t = PartitionTree::from_partitions(
            6,
            vec![
                (0..6).map(|i| vec![i]).collect(),
                vec![vec![0, 4], vec![1, 3, 5], vec![2]],
                vec![vec![0, 2, 4], vec![1, 3, 5]],
                vec![(0..6).collect()],
            ],
        )
        .unwrap();
        assert_eq!(leaf_order(&t), vec![0, 4, 2, 1, 3, 5]);
    }

    #[test]
    fn leaf_order_keeps_folders_contiguous() {
        let t = eight_leaf_tree();
        let order = leaf_order(&t);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..8).collect::<Vec<_>>());
        let pos: Vec<usize> = {
            let mut p = vec![0; 8];
            for (k, &x) in order.iter().enumerate() {
                p[x] = k;
            }
            p
        };
        for f in t.folders() {
            let mut ps: Vec<usize> = f.members.iter().map(|&x| pos[x]).collect();
            ps.sort_unstable();
            assert_eq!(ps[ps.len() - 1] - ps[0] + 1, ps.len());
        }
    }

    #[test]
    fn canonical_ids_and_json_roundtrip() {
        let t = eight_leaf_tree();
        for (i, f) in t.folders().iter().enumerate() {
            assert_eq!(f.id, i);
        }
        for x in 0..8 {
            assert_eq!(t.folder(x).members, vec![x]);
        }
        assert_eq!(t.root(), 13);
        let back = PartitionTree::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        assert!(t.to_json().contains("\"axis_size\": 8"));
    }

    #[test]
    fn pass_through_folders_are_allowed() {
        let t = PartitionTree::from_partitions(
            3,
            vec![
                vec![vec![0], vec![1], vec![2]],
                vec![vec![0, 1], vec![2]],
                vec![vec![0, 1, 2]],
            ],
        )
        .unwrap();
        assert!(t.is_pass_through(4));
        assert!(!t.is_pass_through(3));
        assert_eq!(t.descendants(4), vec![2, 4]);
    }
}
