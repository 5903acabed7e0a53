//! Stream construction: feature layouts, dataset ingestion (sparse-text and
//! delimited formats), the quarters feature split, and synthetic
//! feature-evolving streams.

use std::io::{BufRead, BufReader, Read, Write};
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column ranges of the three feature blocks of one batch.
///
/// Transforming-view batches carry vanished + survived columns (empty
/// augmented block); inheriting-view batches carry survived + augmented
/// columns (empty vanished block). Ranges are contiguous from column 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    /// Columns that disappear after the feature evolution.
    pub vanished: Range<usize>,
    /// Columns present on both sides of the evolution.
    pub survived: Range<usize>,
    /// Columns that appear with the evolution.
    pub augmented: Range<usize>,
}

impl FeatureLayout {
    /// Layout of a batch observed before the feature change: `d_v` vanished
    /// then `d_s` survived columns.
    pub fn transforming(d_v: usize, d_s: usize) -> FeatureLayout {
        FeatureLayout {
            vanished: 0..d_v,
            survived: d_v..d_v + d_s,
            augmented: d_v + d_s..d_v + d_s,
        }
    }

    /// Layout of a batch observed after the feature change: `d_s` survived
    /// then `d_n` augmented columns.
    pub fn inheriting(d_s: usize, d_n: usize) -> FeatureLayout {
        FeatureLayout {
            vanished: 0..0,
            survived: 0..d_s,
            augmented: d_s..d_s + d_n,
        }
    }

    pub fn d_v(&self) -> usize {
        self.vanished.len()
    }

    pub fn d_s(&self) -> usize {
        self.survived.len()
    }

    pub fn d_n(&self) -> usize {
        self.augmented.len()
    }

    /// Total column count covered by the three ranges.
    pub fn width(&self) -> usize {
        self.d_v() + self.d_s() + self.d_n()
    }

    /// Checks that the ranges tile `[0, ncols)` in vanished, survived,
    /// augmented order without gaps or overlap.
    pub fn validate(&self, ncols: usize) -> Result<()> {
        let ok = self.vanished.start == 0
            && self.vanished.end == self.survived.start
            && self.survived.end == self.augmented.start
            && self.augmented.end == ncols;
        if !ok {
            return Err(Error::Shape(format!(
                "layout {:?}/{:?}/{:?} does not tile {} columns",
                self.vanished, self.survived, self.augmented, ncols
            )));
        }
        Ok(())
    }
}

/// One batch of a data stream.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamBatch {
    /// `n_i x d` sample matrix.
    pub x: DMatrix<f64>,
    /// Class label per row, remapped to `0..C-1`.
    pub y: Vec<usize>,
    pub layout: FeatureLayout,
    /// Position of this batch in its stream.
    pub batch_index: usize,
}

/// Quarters feature split: the first quarter of the columns vanishes, the
/// last quarter is augmented, the middle half survives.
///
/// `d_v = ceil(d/4)`, `d_n = floor(d/4)`, `d_s = d - d_v - d_n`.
pub fn split_features(d: usize) -> Result<(usize, usize, usize)> {
    if d < 4 {
        return Err(Error::Validation(format!(
            "feature splitting needs at least 4 columns, got {d}"
        )));
    }
    let d_v = d.div_ceil(4);
    let d_n = d / 4;
    Ok((d_v, d - d_v - d_n, d_n))
}

/// Remaps arbitrary integer labels to `0..C-1` by sorted order, returning
/// the remapped labels and the sorted originals (index = new label).
pub fn remap_labels(labels: &[i64]) -> (Vec<usize>, Vec<i64>) {
    let mut originals: Vec<i64> = labels.to_vec();
    originals.sort_unstable();
    originals.dedup();
    let mapped = labels
        .iter()
        .map(|l| originals.binary_search(l).expect("label seen during dedup"))
        .collect();
    (mapped, originals)
}

fn parse_label(tok: &str, line_no: usize) -> Result<i64> {
    let v: f64 = tok.parse().map_err(|_| Error::Parse {
        line: line_no,
        msg: format!("label '{tok}' is not numeric"),
    })?;
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(Error::Parse {
            line: line_no,
            msg: format!("label '{tok}' is not an integer"),
        });
    }
    Ok(v as i64)
}

/// Parses sparse-text data (`label idx:val idx:val ...`, 1-based strictly
/// increasing indices) into a dense matrix plus labels.
///
/// The column count is the largest index seen, or `dim` when given (indices
/// beyond it are rejected). Blank lines are skipped.
pub fn parse_sparse_text<R: Read>(reader: R, dim: Option<usize>) -> Result<(DMatrix<f64>, Vec<i64>)> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_idx = 0usize;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let mut toks = line.split_whitespace();
        let Some(first) = toks.next() else { continue };
        labels.push(parse_label(first, line_no)?);
        let mut entries = Vec::new();
        let mut prev = 0usize;
        for tok in toks {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected 'index:value', got '{tok}'"),
            })?;
            let idx: usize = idx_s.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("index '{idx_s}' is not a positive integer"),
            })?;
            let val: f64 = val_s.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("value '{val_s}' is not numeric"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "indices are 1-based; found index 0".into(),
                });
            }
            if idx <= prev {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("indices must be strictly increasing ({prev} then {idx})"),
                });
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("index {idx} exceeds the declared dimension {d}"),
                    });
                }
            }
            prev = idx;
            max_idx = max_idx.max(idx);
            entries.push((idx - 1, val));
        }
        rows.push(entries);
    }
    let d = dim.unwrap_or(max_idx);
    let mut x = DMatrix::zeros(rows.len(), d);
    for (r, entries) in rows.iter().enumerate() {
        for &(c, v) in entries {
            x[(r, c)] = v;
        }
    }
    Ok((x, labels))
}

/// As [`parse_sparse_text`], from a file path.
pub fn parse_sparse_text_path<P: AsRef<Path>>(
    path: P,
    dim: Option<usize>,
) -> Result<(DMatrix<f64>, Vec<i64>)> {
    parse_sparse_text(std::fs::File::open(path)?, dim)
}

/// Writes sparse-text data; only nonzero entries are emitted, so parsing the
/// output with the original column count reproduces the matrix exactly.
pub fn write_sparse_text<W: Write>(mut w: W, x: &DMatrix<f64>, y: &[i64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    for (r, label) in y.iter().enumerate() {
        write!(w, "{label}")?;
        for c in 0..x.ncols() {
            let v = x[(r, c)];
            if v != 0.0 {
                write!(w, " {}:{}", c + 1, v)?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Parses delimiter-separated numeric data with the label in the given
/// column (0-based). All rows must have equal width.
pub fn parse_delimited<R: Read>(
    reader: R,
    delimiter: char,
    label_column: usize,
    has_header: bool,
) -> Result<(DMatrix<f64>, Vec<i64>)> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() || (has_header && i == 0) {
            continue;
        }
        let cells: Vec<&str> = line.split(delimiter).map(str::trim).collect();
        if label_column >= cells.len() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "label column {label_column} out of range for {} cells",
                    cells.len()
                ),
            });
        }
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected {w} cells, found {}", cells.len()),
                })
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(cells.len() - 1);
        for (c, cell) in cells.iter().enumerate() {
            if c == label_column {
                labels.push(parse_label(cell, line_no)?);
            } else {
                row.push(cell.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("cell '{cell}' in column {c} is not numeric"),
                })?);
            }
        }
        rows.push(row);
    }
    let d = rows.first().map_or(0, Vec::len);
    let x = DMatrix::from_fn(rows.len(), d, |r, c| rows[r][c]);
    Ok((x, labels))
}

/// As [`parse_delimited`], from a file path.
pub fn parse_delimited_path<P: AsRef<Path>>(
    path: P,
    delimiter: char,
    label_column: usize,
    has_header: bool,
) -> Result<(DMatrix<f64>, Vec<i64>)> {
    parse_delimited(std::fs::File::open(path)?, delimiter, label_column, has_header)
}

/// Writes delimiter-separated data with the label in column 0.
pub fn write_delimited<W: Write>(
    mut w: W,
    x: &DMatrix<f64>,
    y: &[i64],
    delimiter: char,
) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    for (r, label) in y.iter().enumerate() {
        write!(w, "{label}")?;
        for c in 0..x.ncols() {
            write!(w, "{delimiter}{}", x[(r, c)])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// How to carve one labeled dataset into a one-shot feature-evolving stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    /// Keep only samples whose original label is in this set; empty keeps
    /// all classes.
    #[serde(default)]
    pub class_filter: Vec<i64>,
    /// Explicit `(d_v, d_s, d_n)` split; the quarters rule applies when
    /// absent.
    #[serde(default)]
    pub split: Option<(usize, usize, usize)>,
    /// Stream length including the two inheriting-view batches.
    pub n_batches: usize,
    /// Samples per batch (`n_i`).
    pub batch_size: usize,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_batches < 3 {
            return Err(Error::Validation(format!(
                "dataset '{}': a one-shot stream needs at least 3 batches, got {}",
                self.name, self.n_batches
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation(format!(
                "dataset '{}': batch_size must be positive",
                self.name
            )));
        }
        if let Some((d_v, d_s, d_n)) = self.split {
            if d_v == 0 || d_s == 0 {
                return Err(Error::Validation(format!(
                    "dataset '{}': vanished and survived blocks must be nonempty, got split ({d_v}, {d_s}, {d_n})",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Benchmark presets matching the published one-shot protocol: class
/// filters, feature splits (explicit where the quarters rule does not apply),
/// and per-batch sizes with the stream length chosen so the transforming
/// batches cover the protocol's training mass.
///
/// Digit filters assume releases that label digits by face value; shift them
/// via configuration for releases that do not.
pub fn dataset_presets() -> Vec<DatasetSpec> {
    let spec = |name: &str, filter: &[i64], split, n_batches, batch_size| DatasetSpec {
        name: name.into(),
        class_filter: filter.to_vec(),
        split,
        n_batches,
        batch_size,
    };
    vec![
        spec("ev-action", &[], Some((1024, 1024, 75)), 9, 600),
        spec("mnist0vs5", &[0, 5], None, 42, 80),
        spec("mnist0vs3vs5", &[0, 3, 5], Some((123, 245, 121)), 42, 120),
        spec("splice", &[], Some((10, 40, 10)), 30, 80),
        spec("gisette", &[], None, 62, 100),
        spec("usps0vs5", &[0, 5], None, 10, 120),
        spec("usps0vs3vs5", &[0, 3, 5], None, 10, 180),
        spec("satimage", &[], Some((10, 18, 8)), 20, 60),
        spec("imagenet", &[], None, 102, 12000),
        spec("pamap2", &[], None, 11, 800),
    ]
}

/// Near-equal per-class allocation of one batch; the remainder goes to the
/// lowest class indices.
fn per_class_counts(batch_size: usize, classes: usize) -> Result<Vec<usize>> {
    if classes == 0 || batch_size < classes {
        return Err(Error::Validation(format!(
            "cannot allocate a batch of {batch_size} across {classes} classes"
        )));
    }
    let base = batch_size / classes;
    let extra = batch_size % classes;
    Ok((0..classes).map(|c| base + usize::from(c < extra)).collect())
}

/// Carves a labeled dataset into a one-shot stream: class filtering, label
/// remapping, per-class sampling without replacement, and the column views
/// of the two stages.
///
/// Returns the stream and the retained original labels (index = remapped
/// label). The transforming batches expose columns `[0, d_v + d_s)`; the
/// final two batches expose `[d_v, d)`.
pub fn build_stream_from_dataset(
    x: &DMatrix<f64>,
    y: &[i64],
    spec: &DatasetSpec,
    seed: u64,
) -> Result<(Vec<StreamBatch>, Vec<i64>)> {
    spec.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let keep: Vec<usize> = (0..y.len())
        .filter(|&i| spec.class_filter.is_empty() || spec.class_filter.contains(&y[i]))
        .collect();
    if keep.is_empty() {
        return Err(Error::Validation(format!(
            "dataset '{}': class filter {:?} matches no samples",
            self_name(spec),
            spec.class_filter
        )));
    }
    let filtered_labels: Vec<i64> = keep.iter().map(|&i| y[i]).collect();
    let (mapped, originals) = remap_labels(&filtered_labels);
    let classes = originals.len();
    if classes < 2 {
        return Err(Error::Validation(format!(
            "dataset '{}': streams need at least 2 classes, found {classes}",
            self_name(spec)
        )));
    }
    let d = x.ncols();
    let (d_v, d_s, d_n) = match spec.split {
        Some(split) => split,
        None => split_features(d)?,
    };
    if d_v + d_s + d_n != d {
        return Err(Error::Validation(format!(
            "dataset '{}': split ({d_v}, {d_s}, {d_n}) does not sum to {d} columns",
            self_name(spec)
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (pos, &label) in mapped.iter().enumerate() {
        pools[label].push(keep[pos]);
    }
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }
    let counts = per_class_counts(spec.batch_size, classes)?;
    let need: usize = counts.iter().max().copied().unwrap_or(0) * spec.n_batches;
    for (c, pool) in pools.iter().enumerate() {
        if pool.len() < counts[c] * spec.n_batches {
            return Err(Error::Validation(format!(
                "dataset '{}': class {} has {} samples but the stream draws up to {need}",
                self_name(spec),
                originals[c],
                pool.len()
            )));
        }
    }

    let mut cursors = vec![0usize; classes];
    let mut stream = Vec::with_capacity(spec.n_batches);
    for b in 0..spec.n_batches {
        let inheriting = b + 2 >= spec.n_batches;
        let (col0, width, layout) = if inheriting {
            (d_v, d_s + d_n, FeatureLayout::inheriting(d_s, d_n))
        } else {
            (0, d_v + d_s, FeatureLayout::transforming(d_v, d_s))
        };
        let mut rows = Vec::with_capacity(spec.batch_size);
        for c in 0..classes {
            for _ in 0..counts[c] {
                rows.push((pools[c][cursors[c]], c));
                cursors[c] += 1;
            }
        }
        rows.shuffle(&mut rng);
        let xb = DMatrix::from_fn(rows.len(), width, |r, j| x[(rows[r].0, col0 + j)]);
        let yb = rows.iter().map(|&(_, c)| c).collect();
        stream.push(StreamBatch {
            x: xb,
            y: yb,
            layout,
            batch_index: b,
        });
    }
    Ok((stream, originals))
}

fn self_name(spec: &DatasetSpec) -> &str {
    if spec.name.is_empty() {
        "<unnamed>"
    } else {
        &spec.name
    }
}

/// Full description of a synthetic feature-evolving stream.
///
/// Class-cluster centers are drawn in the full latent space (all three
/// blocks), then scaled so that within every feature block the minimum
/// distance between centers of different classes equals `separation` (in
/// units of the default unit noise). Every stage view therefore separates
/// classes at least that well. `separation = 0` produces class-blind data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub d_v: usize,
    pub d_s: usize,
    pub d_n: usize,
    pub separation: f64,
    /// Stream length including the two inheriting-view batches.
    pub n_batches: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Gaussian modes per class; more than one makes class distributions
    /// multimodal at the separation scale.
    pub clusters_per_class: usize,
    /// Restrict centers to a random subspace of this dimension, making the
    /// informative directions rank-deficient.
    pub centroid_rank: Option<usize>,
    /// Per-column noise standard deviations (length `d_v + d_s + d_n`);
    /// unit noise when absent. Larger scales shrink the effective
    /// separation-to-noise ratio of the affected columns.
    pub noise_scales: Option<Vec<f64>>,
    /// Fraction of each class's mean removed from its cluster centers.
    /// At 0 class means are untouched; at 1 they coincide exactly and class
    /// identity lives purely in the cluster constellation. Values between
    /// interpolate. Requires more than one cluster per class when positive.
    pub class_mean_centering: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 2,
            d_v: 10,
            d_s: 20,
            d_n: 10,
            separation: 6.0,
            n_batches: 8,
            batch_size: 80,
            seed: 0,
            clusters_per_class: 1,
            centroid_rank: None,
            noise_scales: None,
            class_mean_centering: 0.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Validation(format!(
                "synthetic streams need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.d_v == 0 || self.d_s == 0 {
            return Err(Error::Validation(
                "synthetic streams need nonempty vanished and survived blocks".into(),
            ));
        }
        if !(self.separation >= 0.0) {
            return Err(Error::Validation(format!(
                "separation must be nonnegative, got {}",
                self.separation
            )));
        }
        if self.n_batches < 3 {
            return Err(Error::Validation(format!(
                "a one-shot stream needs at least 3 batches, got {}",
                self.n_batches
            )));
        }
        if self.batch_size < self.classes {
            return Err(Error::Validation(format!(
                "batch size {} cannot cover {} classes",
                self.batch_size, self.classes
            )));
        }
        if self.clusters_per_class == 0 {
            return Err(Error::Validation("clusters_per_class must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.class_mean_centering) {
            return Err(Error::Validation(format!(
                "class_mean_centering must lie in [0, 1], got {}",
                self.class_mean_centering
            )));
        }
        if self.class_mean_centering > 0.0 && self.clusters_per_class < 2 {
            return Err(Error::Validation(
                "class_mean_centering needs at least 2 clusters per class, or every class collapses toward the origin"
                    .into(),
            ));
        }
        let d = self.d_v + self.d_s + self.d_n;
        if let Some(r) = self.centroid_rank {
            if r == 0 || r > d {
                return Err(Error::Validation(format!(
                    "centroid_rank must be in 1..={d}, got {r}"
                )));
            }
        }
        if let Some(scales) = &self.noise_scales {
            if scales.len() != d {
                return Err(Error::Validation(format!(
                    "noise_scales has {} entries for {d} columns",
                    scales.len()
                )));
            }
            if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
                return Err(Error::Validation(
                    "noise_scales entries must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Latent class-cluster centers plus per-column noise, shared by the
/// one-shot and multi-shot generators.
struct LatentModel {
    /// One row per (class, cluster), grouped by class.
    centers: DMatrix<f64>,
    noise: Vec<f64>,
    classes: usize,
    clusters: usize,
}

impl LatentModel {
    /// `blocks` are the column counts of the consecutive feature blocks; the
    /// cross-class center separation is normalized per block.
    fn build(
        classes: usize,
        clusters: usize,
        blocks: &[usize],
        separation: f64,
        centroid_rank: Option<usize>,
        class_mean_centering: f64,
        noise: Vec<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<LatentModel> {
        let d: usize = blocks.iter().sum();
        let rows = classes * clusters;
        let mut centers = if separation == 0.0 {
            DMatrix::zeros(rows, d)
        } else {
            match centroid_rank {
                None => DMatrix::from_fn(rows, d, |_, _| rng.sample::<f64, _>(StandardNormal)),
                Some(r) => {
                    // An orthonormal basis of a random r-dimensional subspace
                    // keeps every center inside it.
                    let g = DMatrix::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let basis = g.qr().q();
                    let coeff =
                        DMatrix::from_fn(rows, r, |_, _| rng.sample::<f64, _>(StandardNormal));
                    coeff * basis.transpose()
                }
            }
        };
        if class_mean_centering > 0.0 && separation > 0.0 {
            for c in 0..classes {
                for j in 0..d {
                    let mean = (0..clusters)
                        .map(|k| centers[(c * clusters + k, j)])
                        .sum::<f64>()
                        / clusters as f64;
                    for k in 0..clusters {
                        centers[(c * clusters + k, j)] -= class_mean_centering * mean;
                    }
                }
            }
        }
        if separation > 0.0 {
            let mut col0 = 0;
            for &width in blocks {
                let min_dist = min_cross_class_distance(&centers, classes, clusters, col0, width);
                if min_dist <= 1e-12 {
                    return Err(Error::Numeric(
                        "degenerate draw: coincident class centers".into(),
                    ));
                }
                let scale = separation / min_dist;
                centers.view_mut((0, col0), (rows, width)).scale_mut(scale);
                col0 += width;
            }
        }
        Ok(LatentModel {
            centers,
            noise,
            classes,
            clusters,
        })
    }

    /// Draws one sample of the given class over the full latent space.
    fn sample(&self, class: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let cluster = if self.clusters == 1 {
            0
        } else {
            rng.gen_range(0..self.clusters)
        };
        let center = self.centers.row(class * self.clusters + cluster);
        (0..center.ncols())
            .map(|j| center[j] + self.noise[j] * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

fn min_cross_class_distance(
    centers: &DMatrix<f64>,
    classes: usize,
    clusters: usize,
    col0: usize,
    width: usize,
) -> f64 {
    let mut min = f64::INFINITY;
    for a in 0..classes * clusters {
        for b in 0..classes * clusters {
            if a / clusters == b / clusters || b <= a {
                continue;
            }
            let mut s = 0.0;
            for j in col0..col0 + width {
                let diff = centers[(a, j)] - centers[(b, j)];
                s += diff * diff;
            }
            min = min.min(s.sqrt());
        }
    }
    min
}

/// Draws one batch: near-equal per-class counts, rows shuffled, columns
/// `[col0, col0 + width)` of the latent space.
fn sample_batch(
    model: &LatentModel,
    batch_size: usize,
    col0: usize,
    width: usize,
    layout: FeatureLayout,
    batch_index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<StreamBatch> {
    let counts = per_class_counts(batch_size, model.classes)?;
    let mut samples: Vec<(Vec<f64>, usize)> = Vec::with_capacity(batch_size);
    for (c, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            samples.push((model.sample(c, rng), c));
        }
    }
    samples.shuffle(rng);
    let x = DMatrix::from_fn(samples.len(), width, |r, j| samples[r].0[col0 + j]);
    let y = samples.iter().map(|&(_, c)| c).collect();
    Ok(StreamBatch {
        x,
        y,
        layout,
        batch_index,
    })
}

/// Generates a one-shot synthetic stream from a full specification.
pub fn synthetic_stream_from_spec(spec: &SyntheticSpec) -> Result<Vec<StreamBatch>> {
    spec.validate()?;
    let d = spec.d_v + spec.d_s + spec.d_n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let blocks = [spec.d_v, spec.d_s, spec.d_n];
    let active: Vec<usize> = blocks.iter().copied().filter(|&w| w > 0).collect();
    let model = LatentModel::build(
        spec.classes,
        spec.clusters_per_class,
        &active,
        spec.separation,
        spec.centroid_rank,
        spec.class_mean_centering,
        spec.noise_scales.clone().unwrap_or_else(|| vec![1.0; d]),
        &mut rng,
    )?;
    let mut stream = Vec::with_capacity(spec.n_batches);
    for b in 0..spec.n_batches {
        let batch = if b + 2 >= spec.n_batches {
            sample_batch(
                &model,
                spec.batch_size,
                spec.d_v,
                spec.d_s + spec.d_n,
                FeatureLayout::inheriting(spec.d_s, spec.d_n),
                b,
                &mut rng,
            )?
        } else {
            sample_batch(
                &model,
                spec.batch_size,
                0,
                spec.d_v + spec.d_s,
                FeatureLayout::transforming(spec.d_v, spec.d_s),
                b,
                &mut rng,
            )?
        };
        batch.layout.validate(batch.x.ncols())?;
        stream.push(batch);
    }
    Ok(stream)
}

/// Generates a one-shot synthetic stream: the first `n_batches - 2` batches
/// carry the transforming view (vanished + survived columns), the final two
/// carry the inheriting view (survived + augmented columns).
pub fn make_synthetic_stream(
    classes: usize,
    dims: (usize, usize, usize),
    separation: f64,
    n_batches: usize,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<StreamBatch>> {
    synthetic_stream_from_spec(&SyntheticSpec {
        classes,
        d_v: dims.0,
        d_s: dims.1,
        d_n: dims.2,
        separation,
        n_batches,
        batch_size,
        seed,
        ..Default::default()
    })
}

/// Generates a multi-shot stream of `M + 1` stages over `M + 2` feature
/// blocks: stage `j < M` exposes blocks `(j, j+1)` as a transforming view,
/// stage `M` exposes blocks `(M, M+1)` as an inheriting view. Adjacent
/// stages share one block by construction.
///
/// Returns the flat stream (stages concatenated, `batches_per_stage` each)
/// and the matching schedule.
pub fn make_multi_shot_stream(
    classes: usize,
    block_dims: &[usize],
    separation: f64,
    batches_per_stage: usize,
    batch_size: usize,
    seed: u64,
) -> Result<(Vec<StreamBatch>, crate::driver::EvolutionSchedule)> {
    if block_dims.len() < 3 {
        return Err(Error::Validation(format!(
            "a multi-shot stream needs at least 3 feature blocks, got {}",
            block_dims.len()
        )));
    }
    if block_dims.iter().any(|&w| w == 0) {
        return Err(Error::Validation("feature blocks must be nonempty".into()));
    }
    if batches_per_stage == 0 {
        return Err(Error::Validation("batches_per_stage must be positive".into()));
    }
    if classes < 2 {
        return Err(Error::Validation(format!(
            "synthetic streams need at least 2 classes, got {classes}"
        )));
    }
    if batch_size < classes {
        return Err(Error::Validation(format!(
            "batch size {batch_size} cannot cover {classes} classes"
        )));
    }
    if !(separation >= 0.0) {
        return Err(Error::Validation(format!(
            "separation must be nonnegative, got {separation}"
        )));
    }
    let shots = block_dims.len() - 2;
    let d: usize = block_dims.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = LatentModel::build(
        classes,
        1,
        block_dims,
        separation,
        None,
        0.0,
        vec![1.0; d],
        &mut rng,
    )?;
    let block_starts: Vec<usize> = block_dims
        .iter()
        .scan(0usize, |acc, &w| {
            let start = *acc;
            *acc += w;
            Some(start)
        })
        .collect();

    let mut stream = Vec::new();
    let mut layouts = Vec::new();
    let mut batch_index = 0usize;
    for stage in 0..=shots {
        let (w0, w1) = (block_dims[stage], block_dims[stage + 1]);
        let layout = if stage < shots {
            FeatureLayout::transforming(w0, w1)
        } else {
            FeatureLayout::inheriting(w0, w1)
        };
        layouts.push(layout.clone());
        for _ in 0..batches_per_stage {
            let batch = sample_batch(
                &model,
                batch_size,
                block_starts[stage],
                w0 + w1,
                layout.clone(),
                batch_index,
                &mut rng,
            )?;
            batch.layout.validate(batch.x.ncols())?;
            stream.push(batch);
            batch_index += 1;
        }
    }
    let schedule = crate::driver::EvolutionSchedule {
        shots,
        batches_per_stage: vec![batches_per_stage; shots + 1],
        batch_size,
        layout_per_stage: layouts,
    };
    Ok((stream, schedule))
}
