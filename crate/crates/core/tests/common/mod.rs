//! Oracles and property checks shared by the integration and acceptance
//! targets. Each check returns `Err(description)` on the first violation.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sigmaforest::dataset::{read_csv, write_csv, CsvSchema, Dataset, FeatureMatrix};
use sigmaforest::forest::{fit_forest, ForestHyperparams, PredictionWithUncertainty};
use sigmaforest::multilayer::{fit_multilayer, rotate, FeatureFlags, MultilayerConfig, RotationAngle};
use sigmaforest::tree::{fit_tree, RegressionTree, TreeHyperparams, TreeNode};
use sigmaforest::validation::{blocking_split, kfold_folds, order_by_feature};

pub type Check = Result<(), String>;

/// Small integer-valued instance with ties in both features and targets.
pub struct Instance {
    pub x: FeatureMatrix,
    pub y: Vec<f64>,
    pub min_samples_leaf: usize,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(1..=12);
    let d = rng.random_range(1..=2);
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..n).map(|_| f64::from(rng.random_range(0..6u8))).collect())
        .collect();
    let y = (0..n).map(|_| f64::from(rng.random_range(-5..=5i8))).collect();
    Instance {
        x: FeatureMatrix::from_columns(cols).unwrap(),
        y,
        min_samples_leaf: rng.random_range(1..=3).min(n),
    }
}

fn sse(rows: &[usize], y: &[f64]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let m = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
    rows.iter().map(|&r| (y[r] - m).powi(2)).sum()
}

/// Every legal (feature, midpoint) split of `rows` with its child SSE.
pub fn enumerate_splits(x: &FeatureMatrix, y: &[f64], rows: &[usize], msl: usize) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    for f in 0..x.n_features() {
        let mut vals: Vec<f64> = rows.iter().map(|&r| x.get(r, f)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, f) <= t);
            if l.len() >= msl && r.len() >= msl {
                out.push((f, t, sse(&l, y) + sse(&r, y)));
            }
        }
    }
    out
}

/// Checks every node of `tree` against exhaustive enumeration: splits must
/// attain the minimum child SSE, leaves must have no legal split left.
pub fn check_greedy_optimal(tree: &RegressionTree, inst: &Instance) -> Check {
    fn walk(node: &TreeNode, rows: Vec<usize>, inst: &Instance) -> Check {
        let y = &inst.y;
        let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
        let candidates = enumerate_splits(&inst.x, y, &rows, inst.min_samples_leaf);
        let constant = rows.iter().all(|&r| y[r] == y[rows[0]]);
        match node {
            TreeNode::Leaf { value, count } => {
                if *count != rows.len() {
                    return Err(format!("leaf count {count} but {} rows reach it", rows.len()));
                }
                if (value - mean).abs() > 1e-12 {
                    return Err(format!("leaf value {value} != mean {mean}"));
                }
                if !constant && !candidates.is_empty() {
                    return Err(format!("leaf over {} rows still has {} legal splits", rows.len(), candidates.len()));
                }
                Ok(())
            }
            TreeNode::Split { feature, threshold, left, right } => {
                let best = candidates.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| inst.x.get(i, *feature) <= *threshold);
                let got = sse(&l, y) + sse(&r, y);
                if l.len() < inst.min_samples_leaf || r.len() < inst.min_samples_leaf {
                    return Err(format!("illegal split {}:{}", l.len(), r.len()));
                }
                if got > best + 1e-9 {
                    return Err(format!("split on {feature} at {threshold} gives SSE {got}, best is {best}"));
                }
                walk(left, l, inst)?;
                walk(right, r, inst)
            }
        }
    }
    walk(tree.root(), (0..inst.x.n_rows()).collect(), inst)
}

pub fn greedy_optimality_suite(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..instances {
        let inst = random_instance(&mut rng);
        let tree = fit_tree(&inst.x, &inst.y, &TreeHyperparams::new(inst.min_samples_leaf), None)
            .map_err(|e| format!("instance {i}: {e}"))?;
        check_greedy_optimal(&tree, &inst).map_err(|e| format!("instance {i}: {e}"))?;
    }
    Ok(())
}

pub fn check_rotation_isometry(y: f64, s: f64, theta: f64) -> Check {
    let (a, b) = rotate(y, s, RotationAngle::new(theta).unwrap());
    let before = y * y + s * s;
    let after = a * a + b * b;
    if (after - before).abs() > 1e-12 * before.max(1.0) {
        return Err(format!("|({y},{s})|^2 = {before} but rotated by {theta} gives {after}"));
    }
    Ok(())
}

/// Scaling targets by a power of two scales every prediction exactly.
pub fn check_scale_equivariance(x: &FeatureMatrix, y: &[f64], hp: &ForestHyperparams, scale: f64, queries: &[f64]) -> Check {
    let base = fit_forest(x, y, hp).map_err(|e| e.to_string())?;
    let scaled_y: Vec<f64> = y.iter().map(|v| v * scale).collect();
    let scaled = fit_forest(x, &scaled_y, hp).map_err(|e| e.to_string())?;
    for &q in queries {
        let (a, b) = (base.predict(&[q]).unwrap(), scaled.predict(&[q]).unwrap());
        if b.mean != a.mean * scale || b.std != a.std * scale.abs() {
            return Err(format!("at {q}: {a:?} scaled by {scale} vs {b:?}"));
        }
    }
    Ok(())
}

/// Shifting targets shifts predictions (to rounding) and keeps every split.
pub fn check_shift_equivariance(x: &FeatureMatrix, y: &[f64], hp: &ForestHyperparams, shift: f64, queries: &[f64]) -> Check {
    let base = fit_forest(x, y, hp).map_err(|e| e.to_string())?;
    let shifted_y: Vec<f64> = y.iter().map(|v| v + shift).collect();
    let shifted = fit_forest(x, &shifted_y, hp).map_err(|e| e.to_string())?;
    for (t0, t1) in base.trees().iter().zip(shifted.trees()) {
        let splits = |t: &RegressionTree| {
            t.to_preorder()
                .into_iter()
                .map(|n| match n {
                    sigmaforest::tree::FlatNode::Split { feature, threshold } => Some((feature, threshold)),
                    sigmaforest::tree::FlatNode::Leaf { .. } => None,
                })
                .collect::<Vec<_>>()
        };
        if splits(t0) != splits(t1) {
            return Err("tree structure changed under a target shift".into());
        }
    }
    let tol = 1e-9 * (1.0 + shift.abs());
    for &q in queries {
        let (a, b) = (base.predict(&[q]).unwrap(), shifted.predict(&[q]).unwrap());
        if (b.mean - (a.mean + shift)).abs() > tol || (b.std - a.std).abs() > tol {
            return Err(format!("at {q}: {a:?} shifted by {shift} vs {b:?}"));
        }
    }
    Ok(())
}

/// A strictly increasing map of the feature keeps every fitted row's
/// prediction bit-identical. Rows with weight zero are not fitted and may
/// fall on the other side of a moved midpoint.
pub fn check_monotone_feature_invariance(x: &[f64], y: &[f64], weights: &[u32], leaf: usize) -> Check {
    if weights.iter().all(|&w| w == 0) {
        return Ok(());
    }
    let fx = FeatureMatrix::single(x.to_vec());
    let gx = FeatureMatrix::single(x.iter().map(|v| (v * 0.5).exp() + 3.0).collect());
    let hp = TreeHyperparams::new(leaf);
    let a = fit_tree(&fx, y, &hp, Some(weights)).map_err(|e| e.to_string())?;
    let b = fit_tree(&gx, y, &hp, Some(weights)).map_err(|e| e.to_string())?;
    for (i, &w) in weights.iter().enumerate() {
        if w == 0 {
            continue;
        }
        let (pa, pb) = (a.predict(&fx.row(i)).unwrap(), b.predict(&gx.row(i)).unwrap());
        if pa.to_bits() != pb.to_bits() {
            return Err(format!("row {i}: {pa} vs {pb} after a monotone feature map"));
        }
    }
    Ok(())
}

pub fn check_mean_of_trees(x: &FeatureMatrix, y: &[f64], hp: &ForestHyperparams, queries: &[f64]) -> Check {
    let f = fit_forest(x, y, hp).map_err(|e| e.to_string())?;
    for &q in queries {
        let members = f.tree_predictions(&[q]).unwrap();
        let by_hand = if members.iter().all(|&m| m == members[0]) {
            members[0]
        } else {
            members.iter().sum::<f64>() / members.len() as f64
        };
        let p = f.predict(&[q]).unwrap();
        if p.mean != by_hand || p != PredictionWithUncertainty::from_members(&members) {
            return Err(format!("at {q}: ensemble {} vs mean of trees {by_hand}", p.mean));
        }
    }
    Ok(())
}

pub fn check_kfold_partition(n: usize, k: usize, seed: u64) -> Check {
    let folds = kfold_folds(n, k, seed).map_err(|e| e.to_string())?;
    if folds.len() != k {
        return Err(format!("{} folds, expected {k}", folds.len()));
    }
    let mut seen = vec![0usize; n];
    for f in &folds {
        for &i in f {
            seen[i] += 1;
        }
    }
    if seen.iter().any(|&c| c != 1) {
        return Err(format!("n={n} k={k}: folds are not a partition"));
    }
    let (lo, hi) = folds.iter().fold((usize::MAX, 0), |(a, b), f| (a.min(f.len()), b.max(f.len())));
    if hi - lo > 1 {
        return Err(format!("fold sizes range {lo}..{hi}"));
    }
    if kfold_folds(n, k, seed).unwrap() != folds {
        return Err("k-fold assignment is not reproducible".into());
    }
    Ok(())
}

/// Blocking splits depend only on the order of `x`.
pub fn check_blocking_determinism(x: &[f64]) -> Check {
    let m = FeatureMatrix::single(x.to_vec());
    let a = blocking_split(&order_by_feature(&m, 0)).map_err(|e| e.to_string())?;
    let again = blocking_split(&order_by_feature(&m, 0)).unwrap();
    let shifted = FeatureMatrix::single(x.iter().map(|v| 2.0 * v + 7.0).collect());
    let b = blocking_split(&order_by_feature(&shifted, 0)).unwrap();
    if a != again || a != b {
        return Err("blocking split changed between identical orders".into());
    }
    let n = x.len();
    let (lo, hi) = (((n as f64) / 3.0).round() as usize, ((2.0 * n as f64) / 3.0).round() as usize);
    if a.train.len() != hi - lo || a.train.len() + a.validate.len() != n {
        return Err(format!("train {} / validate {} for n={n}", a.train.len(), a.validate.len()));
    }
    Ok(())
}

/// Writes and re-reads `data`; every value, name and mask must survive.
pub fn check_csv_round_trip(data: &Dataset) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("d.csv");
    write_csv(data, &path).map_err(|e| e.to_string())?;
    let schema = CsvSchema {
        x: data.feature_names.clone(),
        y: data.y.as_ref().map(|_| "y".to_string()),
        z: data.z.as_ref().map(|_| "z".to_string()),
    };
    let back = read_csv(&path, &schema).map_err(|e| e.to_string())?;
    let same_f64 = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits() || (p.is_nan() && q.is_nan()));
    let ok = back.feature_names == data.feature_names
        && back.x.columns().iter().zip(data.x.columns()).all(|(a, b)| same_f64(a, b))
        && match (&back.y, &data.y) {
            (Some(a), Some(b)) => same_f64(a, b),
            (None, None) => true,
            _ => false,
        }
        && match (&back.z, &data.z) {
            (Some(a), Some(b)) => same_f64(a, b),
            (None, None) => true,
            _ => false,
        }
        && back.z_mask == data.z_mask;
    if ok {
        Ok(())
    } else {
        Err("CSV round trip changed the dataset".into())
    }
}

/// `{x}` two-layer model against a forest on the observed rows.
pub fn check_x_only_equivalence(data: &Dataset, hp: &ForestHyperparams, queries: &[f64]) -> Check {
    let ml = fit_multilayer(data, &MultilayerConfig::new(FeatureFlags::X), hp).map_err(|e| e.to_string())?;
    let rows = data.observed_z_rows();
    let z = data.z().unwrap();
    let zt: Vec<f64> = rows.iter().map(|&r| z[r]).collect();
    let plain = fit_forest(&data.x.select_rows(&rows), &zt, hp).map_err(|e| e.to_string())?;
    for &q in queries {
        let (a, b) = (ml.predict(&[q]).unwrap(), plain.predict(&[q]).unwrap());
        if a.mean.to_bits() != b.mean.to_bits() || a.std.to_bits() != b.std.to_bits() {
            return Err(format!("at {q}: two-layer {a:?} vs forest {b:?}"));
        }
    }
    Ok(())
}
