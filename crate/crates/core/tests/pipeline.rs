use std::fs;

use treeorg::biorg::{bi_organize, coherence, BiOrgConfig, Stopping};
use treeorg::evaluation::{adjusted_rand_index, clusters_at_level, insert_samples, level_with_folder_count};
use treeorg::heatmap::{heatmap_svg, Annotation, HeatmapStyle};
use treeorg::metrics::{folder_weights, WeightScheme};
use treeorg::refinement::{default_refine_level, level_energy_scores, local_refine};
use treeorg::synth::{planted_blocks, BlockConfig};
use treeorg::{Axis, DataMatrix, PartitionTree};

fn small_blocks(seed: u64) -> treeorg::synth::Planted {
    planted_blocks(&BlockConfig {
        n_rows: 60,
        n_cols: 48,
        row_blocks: 3,
        col_blocks: 3,
        noise: 0.3,
        seed,
        ..Default::default()
    })
    .unwrap()
}

/// Positions of each label along `order` form one contiguous run.
fn contiguous(order: &[usize], labels: &[usize]) -> bool {
    let seq: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    let mut seen = std::collections::BTreeSet::new();
    let mut prev = None;
    for l in seq {
        if prev != Some(l) && !seen.insert(l) {
            return false;
        }
        prev = Some(l);
    }
    true
}

#[test]
fn organize_then_render_planted_blocks() {
    let p = small_blocks(5);
    let r = bi_organize(&p.values, &BiOrgConfig::default()).unwrap();
    assert_eq!(r.coherence_trace.len(), 2);
    assert!(contiguous(&r.leaf_order_x, &p.row_labels));
    assert!(contiguous(&r.leaf_order_y, &p.col_labels));
    let three = level_with_folder_count(&r.tree_y, 3).unwrap();
    let ari = adjusted_rand_index(&clusters_at_level(&r.tree_y, three).unwrap(), &p.col_labels).unwrap();
    assert!(ari > 0.99);

    let track = Annotation {
        name: "block".into(),
        labels: p.col_labels.iter().map(|l| l.to_string()).collect(),
    };
    let style = HeatmapStyle::default();
    let svg = heatmap_svg(
        &p.values,
        &r.leaf_order_x,
        &r.leaf_order_y,
        std::slice::from_ref(&track),
        &style,
    )
    .unwrap();
    assert_eq!(svg.matches("<rect").count(), 60 * 48 + 48);
    assert_eq!(
        svg,
        heatmap_svg(&p.values, &r.leaf_order_x, &r.leaf_order_y, &[track], &style).unwrap()
    );
}

#[test]
fn results_written_to_a_directory() {
    let p = small_blocks(2);
    let m = DataMatrix::from_values(p.values).unwrap();
    let r = bi_organize(m.values(), &BiOrgConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    r.write_dir(dir.path(), m.feature_ids(), m.observation_ids()).unwrap();
    let tx = PartitionTree::read(&dir.path().join("tree_x.json")).unwrap();
    assert_eq!(tx, r.tree_x);
    let trace = fs::read_to_string(dir.path().join("coherence.csv")).unwrap();
    assert_eq!(trace.lines().count(), 3);
    assert!(trace.starts_with("iteration,coherence\n1,"));
    let order = fs::read_to_string(dir.path().join("leaf_order_y.csv")).unwrap();
    assert_eq!(order.lines().count(), 49);
}

#[test]
fn coherence_stopping_never_returns_a_worse_pair() {
    let p = small_blocks(9);
    let config = BiOrgConfig {
        max_iterations: 5,
        stopping: Stopping::CoherenceDecrease,
        ..Default::default()
    };
    let r = bi_organize(&p.values, &config).unwrap();
    let last = coherence(&p.values, &r.tree_x, &r.tree_y).unwrap();
    let best = r.coherence_trace.iter().copied().fold(f64::INFINITY, f64::min);
    assert!((last - best).abs() < 1e-12);
}

#[test]
fn refinement_and_insertion_on_organized_data() {
    let p = small_blocks(4);
    let config = BiOrgConfig::default();
    let r = bi_organize(&p.values, &config).unwrap();

    let scores = level_energy_scores(&r.tree_y, &p.values, Axis::Cols).unwrap();
    assert_eq!(scores.len(), r.tree_y.depth() + 1);
    let level = default_refine_level(&r.tree_y).unwrap();
    let refined = local_refine(&p.values, &r.tree_y, level, &config).unwrap();
    assert_eq!(refined.tree.axis_size(), 48);
    assert_eq!(refined.other_trees.len(), r.tree_y.level(level).len());
    for (f, t) in refined.folders.iter().zip(&refined.other_trees) {
        assert!(r.tree_y.level(level).contains(f));
        assert_eq!(t.axis_size(), 60);
    }
    // Every level-l folder of the global tree is still a folder of the refined tree.
    for &f in r.tree_y.level(level) {
        let members = &r.tree_y.folder(f).members;
        assert!(refined.tree.folders().iter().any(|g| &g.members == members));
    }

    let w = folder_weights(&r.tree_x, WeightScheme::DataDriven, Some((&p.values, Axis::Rows))).unwrap();
    let held_out = p.values.select(ndarray::Axis(1), &[0, 17, 33]);
    let ins = insert_samples(&p.values, &r.tree_y, &r.tree_x, &w, &held_out).unwrap();
    for (k, &col) in [0usize, 17, 33].iter().enumerate() {
        let home = r.tree_y.folder_of(1, col);
        assert_eq!(ins.assignments[k], home);
    }
}
