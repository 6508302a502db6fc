//! Analysis mathematics: half-factor z-scoring, the GDV separability
//! value, Euclidean distance matrices, and classical 2D MDS.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array2, Axis};

use crate::error::{LexError, Result};
use crate::probe::LabeledPointCloud;

/// Scales each dimension to mean 0 and half a population standard
/// deviation: s = (x − μ) / (2σ). Dimensions with σ = 0 become all zeros
/// but still count toward D.
pub fn zscore_half(points: &Array2<f64>) -> Array2<f64> {
    let n = points.nrows() as f64;
    let mut scaled = points.clone();
    for mut col in scaled.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let sigma = var.sqrt();
        if sigma == 0.0 {
            col.fill(0.0);
        } else {
            col.mapv_inplace(|x| (x - mean) / (2.0 * sigma));
        }
    }
    scaled
}

/// Number of constant dimensions, the ones zscore_half zeroes out.
pub fn dead_dimensions(points: &Array2<f64>) -> usize {
    points
        .axis_iter(Axis(1))
        .filter(|col| {
            let first = col[0];
            col.iter().all(|&x| x == first)
        })
        .count()
}

fn euclidean(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean Euclidean distance over the unordered within-class pairs.
pub fn mean_intra_class(points: &Array2<f64>, labels: &[u32], class: u32) -> Result<f64> {
    let members: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == class)
        .map(|(i, _)| i)
        .collect();
    if members.len() < 2 {
        return Err(LexError::Analysis(format!(
            "class {class} has {} point(s), need at least 2 for intra-class distance",
            members.len()
        )));
    }
    let mut sum = 0.0;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            sum += euclidean(points.row(i), points.row(j));
        }
    }
    let pairs = members.len() * (members.len() - 1) / 2;
    Ok(sum / pairs as f64)
}

/// Mean Euclidean distance over all cross pairs of two classes.
pub fn mean_inter_class(
    points: &Array2<f64>,
    labels: &[u32],
    class_l: u32,
    class_m: u32,
) -> Result<f64> {
    // Summation order is fixed by the smaller class id so that swapping the
    // arguments yields the bit-identical result.
    let (lo, hi) = if class_l <= class_m {
        (class_l, class_m)
    } else {
        (class_m, class_l)
    };
    let left: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == lo)
        .map(|(i, _)| i)
        .collect();
    let right: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == hi)
        .map(|(i, _)| i)
        .collect();
    if left.is_empty() || right.is_empty() {
        return Err(LexError::Analysis(format!(
            "inter-class distance needs points in both classes {class_l} and {class_m}"
        )));
    }
    let mut sum = 0.0;
    for &i in &left {
        for &j in &right {
            sum += euclidean(points.row(i), points.row(j));
        }
    }
    Ok(sum / (left.len() * right.len()) as f64)
}

/// The generalized discrimination value of a labelled cloud.
///
/// Dimensions are first scaled by [`zscore_half`]; the value is the mean
/// intra-class distance minus the mean inter-class distance, normalized by
/// 1/√D. Around 0 for overlapping classes; more negative means better
/// separated, with −1 already very strong separation.
pub fn gdv(cloud: &LabeledPointCloud) -> Result<f64> {
    let classes = cloud.present_classes();
    if classes.len() < 2 {
        return Err(LexError::Analysis(format!(
            "GDV needs at least 2 classes, found {}",
            classes.len()
        )));
    }
    for &c in &classes {
        let count = cloud.labels.iter().filter(|&&l| l == c).count();
        if count < 2 {
            return Err(LexError::Analysis(format!(
                "class {} has a single point; GDV needs at least 2 per class",
                cloud.class_name(c)
            )));
        }
    }
    let scaled = zscore_half(&cloud.points);
    let d = cloud.points.ncols() as f64;
    let l = classes.len() as f64;

    // Accumulate pairwise distances bucketed by class pair in point order,
    // so class ids only select buckets and never change summation order.
    let idx_of = |c: u32| classes.iter().position(|&x| x == c).unwrap();
    let k = classes.len();
    let mut sums = vec![0.0f64; k * k];
    let mut counts = vec![0usize; k * k];
    let n = cloud.labels.len();
    for i in 0..n {
        let ci = idx_of(cloud.labels[i]);
        for j in i + 1..n {
            let cj = idx_of(cloud.labels[j]);
            let (a, b) = if ci <= cj { (ci, cj) } else { (cj, ci) };
            sums[a * k + b] += euclidean(scaled.row(i), scaled.row(j));
            counts[a * k + b] += 1;
        }
    }

    let mut intra = 0.0;
    for a in 0..k {
        intra += sums[a * k + a] / counts[a * k + a] as f64;
    }
    intra /= l;

    let mut inter = 0.0;
    for a in 0..k {
        for b in a + 1..k {
            inter += sums[a * k + b] / counts[a * k + b] as f64;
        }
    }
    inter *= 2.0 / (l * (l - 1.0));

    Ok((intra - inter) / d.sqrt())
}

/// All mutual Euclidean distances. Exactly symmetric with a zero diagonal.
pub fn distance_matrix(points: &Array2<f64>) -> Array2<f64> {
    let n = points.nrows();
    let mut dist = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(points.row(i), points.row(j));
            dist[(i, j)] = d;
            dist[(j, i)] = d;
        }
    }
    dist
}

/// A 2D embedding with eigenvalue diagnostics.
#[derive(Debug, Clone)]
pub struct MdsProjection {
    /// N×2 coordinates, columns centered on 0.
    pub coords: Array2<f64>,
    /// The two largest eigenvalues of the centered matrix.
    pub top_eigenvalues: [f64; 2],
    /// Total magnitude of clipped negative eigenvalues; large values mean
    /// the distances were far from 2D-Euclidean.
    pub clipped_negative_mass: f64,
}

/// Classical (Torgerson) metric MDS onto the plane.
///
/// Double-centers the squared distances, takes the top two eigenpairs and
/// scales eigenvectors by √λ. Negative eigenvalues are clipped to zero and
/// reported. Distances between returned points reproduce the input exactly
/// when the input is 2D-embeddable.
pub fn mds_classical(dist: &Array2<f64>) -> Result<MdsProjection> {
    let n = dist.nrows();
    if n != dist.ncols() {
        return Err(LexError::Analysis(format!(
            "distance matrix is {}x{}, expected square",
            n,
            dist.ncols()
        )));
    }
    if n < 3 {
        return Err(LexError::Analysis(format!(
            "MDS needs at least 3 points, got {n}"
        )));
    }

    let sq = dist.mapv(|d| d * d);
    let row_mean: Vec<f64> = sq
        .axis_iter(Axis(0))
        .map(|r| r.sum() / n as f64)
        .collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let mut b = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = -0.5 * (sq[(i, j)] - row_mean[i] - row_mean[j] + grand);
        }
    }

    let eigen = nalgebra::SymmetricEigen::try_new(b, 1e-10, 10_000)
        .ok_or_else(|| LexError::Analysis("MDS eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .expect("finite eigenvalues")
    });

    let clipped_negative_mass = eigen
        .eigenvalues
        .iter()
        .filter(|&&v| v < 0.0)
        .map(|v| -v)
        .sum();

    let mut coords = Array2::zeros((n, 2));
    let mut top = [0.0; 2];
    for (k, &idx) in order.iter().take(2).enumerate() {
        let lambda = eigen.eigenvalues[idx];
        top[k] = lambda;
        if lambda <= 0.0 {
            continue;
        }
        let col = eigen.eigenvectors.column(idx);
        // fix the arbitrary eigenvector sign so outputs are stable
        let mut lead = 0;
        for i in 1..n {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        let scale = lambda.sqrt() * sign;
        for i in 0..n {
            coords[(i, k)] = col[i] * scale;
        }
    }

    Ok(MdsProjection {
        coords,
        top_eigenvalues: top,
        clipped_negative_mass,
    })
}

/// One layer row of a GDV report.
#[derive(Debug, Clone, PartialEq)]
pub struct GdvRow {
    pub layer: usize,
    pub gdv: f64,
    pub n_points: usize,
    pub n_classes: usize,
    pub d: usize,
}

/// Per-layer GDV values, ordered input to output.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GdvReport {
    pub rows: Vec<GdvRow>,
}

/// Computes the GDV for each layer cloud under a shared class filter:
/// a class is kept only if it has at least `min_count` points in every
/// layer. Clouds must agree on their class inventory.
pub fn gdv_curve(clouds: &[LabeledPointCloud], min_count: usize) -> Result<GdvReport> {
    if clouds.is_empty() {
        return Err(LexError::Analysis("no layer clouds given".into()));
    }
    let names = &clouds[0].class_names;
    for cloud in clouds {
        if &cloud.class_names != names {
            return Err(LexError::Analysis(
                "layer clouds disagree on class inventory".into(),
            ));
        }
    }
    let min_count = min_count.max(2);
    let mut keep = vec![true; names.len()];
    for cloud in clouds {
        for (c, k) in keep.iter_mut().enumerate() {
            let count = cloud.labels.iter().filter(|&&l| l as usize == c).count();
            if count < min_count {
                *k = false;
            }
        }
    }
    let mut rows = Vec::with_capacity(clouds.len());
    for (layer, cloud) in clouds.iter().enumerate() {
        let filtered = cloud.retain_classes(&keep);
        let value = gdv(&filtered)?;
        rows.push(GdvRow {
            layer,
            gdv: value,
            n_points: filtered.points.nrows(),
            n_classes: filtered.present_classes().len(),
            d: filtered.points.ncols(),
        });
    }
    Ok(GdvReport { rows })
}

impl GdvReport {
    /// Writes the `layer,gdv,n_points,n_classes,d` CSV.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::from("layer,gdv,n_points,n_classes,d\n");
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{}",
                row.layer, row.gdv, row.n_points, row.n_classes, row.d
            )
            .expect("string write");
        }
        fs::write(path, out).map_err(|e| LexError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<GdvReport> {
        let text = fs::read_to_string(path).map_err(|e| LexError::io(path, e))?;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 {
                if line != "layer,gdv,n_points,n_classes,d" {
                    return Err(LexError::parse(path, 1, "bad GDV report header"));
                }
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(LexError::parse(path, lineno + 1, "expected 5 columns"));
            }
            let parse_err = |msg: &str| LexError::parse(path, lineno + 1, msg);
            rows.push(GdvRow {
                layer: cols[0].parse().map_err(|_| parse_err("bad layer"))?,
                gdv: cols[1].parse().map_err(|_| parse_err("bad gdv"))?,
                n_points: cols[2].parse().map_err(|_| parse_err("bad n_points"))?,
                n_classes: cols[3].parse().map_err(|_| parse_err("bad n_classes"))?,
                d: cols[4].parse().map_err(|_| parse_err("bad d"))?,
            });
        }
        Ok(GdvReport { rows })
    }
}

/// One projected point of an MDS scatter file.
#[derive(Debug, Clone, PartialEq)]
pub struct MdsPoint {
    pub sample_id: u64,
    pub label: String,
    pub x: f64,
    pub y: f64,
}

/// Writes the `sample_id,label,x,y` CSV for one layer's projection.
pub fn save_mds_csv(points: &[MdsPoint], path: &Path) -> Result<()> {
    let mut out = String::from("sample_id,label,x,y\n");
    for p in points {
        writeln!(out, "{},{},{},{}", p.sample_id, p.label, p.x, p.y).expect("string write");
    }
    fs::write(path, out).map_err(|e| LexError::io(path, e))
}

pub fn load_mds_csv(path: &Path) -> Result<Vec<MdsPoint>> {
    let text = fs::read_to_string(path).map_err(|e| LexError::io(path, e))?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line != "sample_id,label,x,y" {
                return Err(LexError::parse(path, 1, "bad MDS header"));
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(LexError::parse(path, lineno + 1, "expected 4 columns"));
        }
        let parse_err = |msg: &str| LexError::parse(path, lineno + 1, msg);
        points.push(MdsPoint {
            sample_id: cols[0].parse().map_err(|_| parse_err("bad sample_id"))?,
            label: cols[1].to_string(),
            x: cols[2].parse().map_err(|_| parse_err("bad x"))?,
            y: cols[3].parse().map_err(|_| parse_err("bad y"))?,
        });
    }
    Ok(points)
}
