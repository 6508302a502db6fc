//! Probing: run held-out samples through a trained model, collect every
//! layer's activations as labelled point clouds, and persist them as CSV.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::SequenceSample;
use crate::embeddings::EmbeddingTable;
use crate::error::{LexError, Result};
use crate::seqmodel::{batch_inputs, ModelParams};

/// One probed sample at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    /// 0..L−1 are the recurrent layers, L is flatten, L+1 the output.
    pub layer_index: usize,
    pub sample_id: u64,
    pub vector: Vec<f64>,
    pub label: String,
}

/// N labelled points in D dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    pub sample_ids: Vec<u64>,
    pub points: Array2<f64>,
    /// One class id per point, indexing into `class_names`.
    pub labels: Vec<u32>,
    /// Sorted class names; position is the class id.
    pub class_names: Vec<String>,
}

impl LabeledPointCloud {
    pub fn class_name(&self, id: u32) -> &str {
        self.class_names
            .get(id as usize)
            .map(String::as_str)
            .unwrap_or("<unknown>")
    }

    /// Distinct class ids that actually occur, ascending.
    pub fn present_classes(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.labels.iter().copied().collect();
        set.into_iter().collect()
    }

    pub fn class_count(&self, id: u32) -> usize {
        self.labels.iter().filter(|&&l| l == id).count()
    }

    /// Keeps only the classes flagged in `keep` (indexed by class id),
    /// dropping their points and compacting the class ids.
    pub fn retain_classes(&self, keep: &[bool]) -> LabeledPointCloud {
        let mut new_id = vec![u32::MAX; self.class_names.len()];
        let mut class_names = Vec::new();
        for (old, name) in self.class_names.iter().enumerate() {
            if keep.get(old).copied().unwrap_or(false) {
                new_id[old] = class_names.len() as u32;
                class_names.push(name.clone());
            }
        }
        let rows: Vec<usize> = (0..self.labels.len())
            .filter(|&i| new_id[self.labels[i] as usize] != u32::MAX)
            .collect();
        let mut points = Array2::zeros((rows.len(), self.points.ncols()));
        let mut labels = Vec::with_capacity(rows.len());
        let mut sample_ids = Vec::with_capacity(rows.len());
        for (to, &from) in rows.iter().enumerate() {
            points.row_mut(to).assign(&self.points.row(from));
            labels.push(new_id[self.labels[from] as usize]);
            sample_ids.push(self.sample_ids[from]);
        }
        LabeledPointCloud { sample_ids, points, labels, class_names }
    }
}

/// Runs every labelled sample through the model and collects one record
/// set per layer: the recurrent layers (timesteps flattened row-major),
/// the flatten vector, and the output vector. Unlabelled samples are
/// skipped.
pub fn extract_activations(
    model: &ModelParams,
    samples: &[SequenceSample],
    table: &EmbeddingTable,
) -> Result<Vec<Vec<ActivationRecord>>> {
    let n_layers = model.shape.hidden_sizes.len();
    let mut sets: Vec<Vec<ActivationRecord>> = vec![Vec::new(); n_layers + 2];

    let labelled: Vec<(u64, &SequenceSample)> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label.is_some())
        .map(|(i, s)| (i as u64, s))
        .collect();

    for chunk in labelled.chunks(256) {
        let batch: Vec<&SequenceSample> = chunk.iter().map(|&(_, s)| s).collect();
        let inputs = batch_inputs(&batch, table);
        let cache = model.forward_batch(&inputs)?;
        for (b, &(sample_id, sample)) in chunk.iter().enumerate() {
            let label = sample.label.clone().expect("filtered to labelled");
            for l in 0..n_layers {
                let seq = cache.layer_outputs(l);
                let width = seq[0].ncols();
                let mut vector = Vec::with_capacity(seq.len() * width);
                for step in seq {
                    vector.extend(step.row(b).iter());
                }
                sets[l].push(ActivationRecord {
                    layer_index: l,
                    sample_id,
                    vector,
                    label: label.clone(),
                });
            }
            sets[n_layers].push(ActivationRecord {
                layer_index: n_layers,
                sample_id,
                vector: cache.flatten.row(b).to_vec(),
                label: label.clone(),
            });
            sets[n_layers + 1].push(ActivationRecord {
                layer_index: n_layers + 1,
                sample_id,
                vector: cache.output.row(b).to_vec(),
                label,
            });
        }
    }
    Ok(sets)
}

/// Builds a point cloud from one layer's records. Class names are the
/// sorted distinct labels; class ids index into them.
pub fn cloud_from_records(records: &[ActivationRecord]) -> Result<LabeledPointCloud> {
    let first = records
        .first()
        .ok_or_else(|| LexError::Analysis("no activation records".into()))?;
    let width = first.vector.len();
    let names: BTreeSet<&str> = records.iter().map(|r| r.label.as_str()).collect();
    let class_names: Vec<String> = names.into_iter().map(str::to_string).collect();
    let mut points = Array2::zeros((records.len(), width));
    let mut labels = Vec::with_capacity(records.len());
    let mut sample_ids = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        if record.vector.len() != width {
            return Err(LexError::Analysis(format!(
                "record {} has width {}, expected {}",
                record.sample_id,
                record.vector.len(),
                width
            )));
        }
        points
            .row_mut(i)
            .assign(&ndarray::ArrayView1::from(&record.vector[..]));
        let id = class_names
            .binary_search_by(|n| n.as_str().cmp(&record.label))
            .expect("label collected above");
        labels.push(id as u32);
        sample_ids.push(record.sample_id);
    }
    Ok(LabeledPointCloud { sample_ids, points, labels, class_names })
}

/// Caps a cloud at `cap` points by proportional per-class sampling
/// without replacement. Clouds already within the cap pass through
/// unchanged. When sampling, classes with fewer than `min_count` points
/// are dropped; the returned list names them.
pub fn stratified_subsample(
    cloud: &LabeledPointCloud,
    cap: usize,
    min_count: usize,
    seed: u64,
) -> Result<(LabeledPointCloud, Vec<String>)> {
    if cap == 0 {
        return Err(LexError::Config("subsample cap must be positive".into()));
    }
    let n = cloud.labels.len();
    if n <= cap {
        return Ok((cloud.clone(), Vec::new()));
    }

    let classes = cloud.present_classes();
    let mut kept_classes = Vec::new();
    let mut dropped = Vec::new();
    let mut kept_total = 0usize;
    for &c in &classes {
        let count = cloud.class_count(c);
        if count < min_count {
            dropped.push(cloud.class_name(c).to_string());
        } else {
            kept_classes.push((c, count));
            kept_total += count;
        }
    }
    if kept_classes.is_empty() {
        return Err(LexError::Analysis(format!(
            "no class reaches min_count {min_count}"
        )));
    }
    if kept_total <= cap {
        let keep: Vec<bool> = (0..cloud.class_names.len())
            .map(|i| kept_classes.iter().any(|&(c, _)| c as usize == i))
            .collect();
        return Ok((cloud.retain_classes(&keep), dropped));
    }

    // largest-remainder proportional allocation of the cap
    let mut quotas: Vec<(u32, usize, f64)> = kept_classes
        .iter()
        .map(|&(c, count)| {
            let exact = cap as f64 * count as f64 / kept_total as f64;
            (c, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut allocated: usize = quotas.iter().map(|&(_, q, _)| q).sum();
    let mut by_remainder: Vec<usize> = (0..quotas.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        quotas[b].2.partial_cmp(&quotas[a].2).expect("finite").then(quotas[a].0.cmp(&quotas[b].0))
    });
    for &qi in by_remainder.iter().cycle() {
        if allocated >= cap {
            break;
        }
        quotas[qi].1 += 1;
        allocated += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen_rows = Vec::with_capacity(cap);
    for &(c, quota, _) in &quotas {
        let mut members: Vec<usize> = (0..n).filter(|&i| cloud.labels[i] == c).collect();
        members.shuffle(&mut rng);
        members.truncate(quota);
        chosen_rows.extend(members);
    }
    chosen_rows.sort_unstable();

    let sub_ids: Vec<u64> = chosen_rows.iter().map(|&i| cloud.sample_ids[i]).collect();
    let sub_labels_old: Vec<u32> = chosen_rows.iter().map(|&i| cloud.labels[i]).collect();
    let kept_names: BTreeSet<&str> = sub_labels_old
        .iter()
        .map(|&l| cloud.class_name(l))
        .collect();
    let class_names: Vec<String> = kept_names.into_iter().map(str::to_string).collect();
    let labels: Vec<u32> = sub_labels_old
        .iter()
        .map(|&l| {
            class_names
                .binary_search_by(|nm| nm.as_str().cmp(cloud.class_name(l)))
                .expect("name present") as u32
        })
        .collect();
    let mut points = Array2::zeros((chosen_rows.len(), cloud.points.ncols()));
    for (to, &from) in chosen_rows.iter().enumerate() {
        points.row_mut(to).assign(&cloud.points.row(from));
    }
    Ok((
        LabeledPointCloud { sample_ids: sub_ids, points, labels, class_names },
        dropped,
    ))
}

/// Writes the `sample_id,label,d0,…` CSV for one layer.
pub fn dump_cloud(cloud: &LabeledPointCloud, path: &Path) -> Result<()> {
    let d = cloud.points.ncols();
    let mut out = String::from("sample_id,label");
    for k in 0..d {
        write!(out, ",d{k}").expect("string write");
    }
    out.push('\n');
    for i in 0..cloud.labels.len() {
        write!(out, "{},{}", cloud.sample_ids[i], cloud.class_name(cloud.labels[i]))
            .expect("string write");
        for v in cloud.points.row(i) {
            write!(out, ",{v}").expect("string write");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| LexError::io(path, e))
}

/// Reads a cloud CSV written by [`dump_cloud`].
pub fn load_cloud(path: &Path) -> Result<LabeledPointCloud> {
    let text = fs::read_to_string(path).map_err(|e| LexError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| LexError::parse(path, 1, "empty cloud file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "sample_id" || cols[1] != "label" {
        return Err(LexError::parse(path, 1, "bad cloud header"));
    }
    for (k, col) in cols[2..].iter().enumerate() {
        if *col != format!("d{k}") {
            return Err(LexError::parse(path, 1, format!("unexpected column {col:?}")));
        }
    }
    let d = cols.len() - 2;

    let mut sample_ids = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let row = lineno + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != d + 2 {
            return Err(LexError::parse(
                path,
                row,
                format!("expected {} columns, found {}", d + 2, cols.len()),
            ));
        }
        sample_ids.push(
            cols[0]
                .parse()
                .map_err(|_| LexError::parse(path, row, "bad sample_id"))?,
        );
        label_names.push(cols[1].to_string());
        for col in &cols[2..] {
            values.push(
                col.parse()
                    .map_err(|_| LexError::parse(path, row, format!("bad float {col:?}")))?,
            );
        }
    }
    let n = sample_ids.len();
    let points = Array2::from_shape_vec((n, d), values).expect("counted above");
    let names: BTreeSet<&str> = label_names.iter().map(String::as_str).collect();
    let class_names: Vec<String> = names.into_iter().map(str::to_string).collect();
    let labels = label_names
        .iter()
        .map(|nm| {
            class_names
                .binary_search_by(|c| c.as_str().cmp(nm))
                .expect("collected above") as u32
        })
        .collect();
    Ok(LabeledPointCloud { sample_ids, points, labels, class_names })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TaggedToken;
    use crate::seqmodel::ModelShape;
    use ndarray::array;

    fn test_fixture() -> (ModelParams, Vec<SequenceSample>, EmbeddingTable) {
        let grammar = crate::synth::PcfgGrammar::bundled();
        let sentences = crate::synth::generate_corpus(&grammar, 40, 6).unwrap();
        let doc: Vec<TaggedToken> = sentences.into_iter().flatten().collect();
        let forms: Vec<String> = doc.iter().map(|t| t.form.clone()).collect();
        let table = crate::embeddings::train_skipgram(&forms, 8, 2, 3, 1, 0.025, 4).unwrap();
        let samples = crate::corpus::make_sequences(&doc, table.vocab(), 3, 1, 0);
        let shape = ModelShape { window: 3, embed_dim: 8, horizon: 1, hidden_sizes: vec![4, 3] };
        let model = ModelParams::init_glorot(&shape, 9).unwrap();
        (model, samples, table)
    }

    #[test]
    fn record_sets_count_and_widths() {
        let (model, samples, table) = test_fixture();
        let m = samples.len().min(10);
        let sets = extract_activations(&model, &samples[..m], &table).unwrap();
        assert_eq!(sets.len(), 4); // 2 recurrent layers + flatten + output
        for set in &sets {
            assert_eq!(set.len(), m);
        }
        assert!(sets[0].iter().all(|r| r.vector.len() == 3 * 8));
        assert!(sets[1].iter().all(|r| r.vector.len() == 3 * 6));
        assert!(sets[2].iter().all(|r| r.vector.len() == 3 * 6));
        assert!(sets[3].iter().all(|r| r.vector.len() == 8));
        // labels agree across layers for the same sample position
        for i in 0..m {
            let label = &sets[0][i].label;
            assert!(sets.iter().all(|s| &s[i].label == label));
            assert!(sets.iter().all(|s| s[i].sample_id == sets[0][i].sample_id));
        }
    }

    #[test]
    fn identical_inputs_give_identical_records() {
        let (model, samples, table) = test_fixture();
        let mut pair = vec![samples[0].clone(), samples[0].clone()];
        pair[1].doc = 7; // metadata only, the window is identical
        let sets = extract_activations(&model, &pair, &table).unwrap();
        for set in &sets {
            assert_eq!(set[0].vector, set[1].vector);
        }
    }

    #[test]
    fn unlabelled_samples_are_skipped() {
        let (model, samples, table) = test_fixture();
        let mut subset = samples[..6].to_vec();
        subset[2].label = None;
        let sets = extract_activations(&model, &subset, &table).unwrap();
        assert_eq!(sets[0].len(), 5);
        // sample ids refer to positions in the input slice, so id 2 is gone
        assert!(sets[0].iter().all(|r| r.sample_id != 2));
    }

    #[test]
    fn cloud_from_records_sorts_class_names() {
        let records = vec![
            ActivationRecord { layer_index: 0, sample_id: 0, vector: vec![1.0, 0.0], label: "VERB".into() },
            ActivationRecord { layer_index: 0, sample_id: 1, vector: vec![0.0, 1.0], label: "DET".into() },
            ActivationRecord { layer_index: 0, sample_id: 2, vector: vec![0.5, 0.5], label: "VERB".into() },
        ];
        let cloud = cloud_from_records(&records).unwrap();
        assert_eq!(cloud.class_names, vec!["DET".to_string(), "VERB".to_string()]);
        assert_eq!(cloud.labels, vec![1, 0, 1]);
        assert_eq!(cloud.points.row(1), array![0.0, 1.0].view());

        let mut bad = records;
        bad[1].vector = vec![1.0];
        assert!(cloud_from_records(&bad).is_err());
    }

    fn toy_cloud(counts: &[usize]) -> LabeledPointCloud {
        let n: usize = counts.iter().sum();
        let mut labels = Vec::with_capacity(n);
        for (c, &k) in counts.iter().enumerate() {
            labels.extend(std::iter::repeat(c as u32).take(k));
        }
        LabeledPointCloud {
            sample_ids: (0..n as u64).collect(),
            points: Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64),
            labels,
            class_names: (0..counts.len()).map(|c| format!("C{c}")).collect(),
        }
    }

    #[test]
    fn subsample_identity_under_cap() {
        let cloud = toy_cloud(&[30, 20]);
        let (sub, dropped) = stratified_subsample(&cloud, 100, 10, 1).unwrap();
        assert_eq!(sub, cloud);
        assert!(dropped.is_empty());
    }

    #[test]
    fn subsample_proportions_and_drop() {
        let cloud = toy_cloud(&[1000, 1000, 5]);
        let (sub, dropped) = stratified_subsample(&cloud, 400, 10, 7).unwrap();
        assert_eq!(dropped, vec!["C2".to_string()]);
        assert_eq!(sub.class_names, vec!["C0".to_string(), "C1".to_string()]);
        assert_eq!(sub.labels.len(), 400);
        assert_eq!(sub.labels.iter().filter(|&&l| l == 0).count(), 200);
        assert_eq!(sub.labels.iter().filter(|&&l| l == 1).count(), 200);
        // rows keep their original order
        let mut sorted = sub.sample_ids.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, sub.sample_ids);
    }

    #[test]
    fn subsample_is_deterministic_and_proportional() {
        let cloud = toy_cloud(&[70, 50, 30]);
        let (a, _) = stratified_subsample(&cloud, 60, 10, 3).unwrap();
        let (b, _) = stratified_subsample(&cloud, 60, 10, 3).unwrap();
        assert_eq!(a, b);
        let (c, _) = stratified_subsample(&cloud, 60, 10, 4).unwrap();
        assert_ne!(a.sample_ids, c.sample_ids);

        // proportions within one point of exact: 28/20/12
        assert_eq!(a.labels.len(), 60);
        for (class, expect) in [(0u32, 28.0), (1, 20.0), (2, 12.0)] {
            let got = a.labels.iter().filter(|&&l| l == class).count() as f64;
            assert!((got - expect).abs() <= 1.0, "class {class}: {got} vs {expect}");
        }
    }

    #[test]
    fn cloud_csv_round_trip() {
        let cloud = toy_cloud(&[3, 2]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("layer_0.csv");
        dump_cloud(&cloud, &path).unwrap();
        let loaded = load_cloud(&path).unwrap();
        assert_eq!(loaded, cloud);
    }

    #[test]
    fn cloud_csv_rejects_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.csv");
        std::fs::write(&path, "sample_id,label,d0,d1\n0,A,1.0\n").unwrap();
        let err = load_cloud(&path).unwrap_err();
        match err {
            LexError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "sample_id,label,x0\n").unwrap();
        assert!(load_cloud(&path).is_err());
        std::fs::write(&path, "sample_id,label,d0\n0,A,oops\n").unwrap();
        assert!(load_cloud(&path).is_err());
    }

    #[test]
    fn retain_classes_compacts_ids() {
        let cloud = toy_cloud(&[2, 3, 2]);
        let kept = cloud.retain_classes(&[true, false, true]);
        assert_eq!(kept.class_names, vec!["C0".to_string(), "C2".to_string()]);
        assert_eq!(kept.labels, vec![0, 0, 1, 1]);
        assert_eq!(kept.sample_ids, vec![0, 1, 5, 6]);
    }
}
