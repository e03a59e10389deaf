//! Labeled ECG records: CSV ingestion, length normalization, stratified
//! splitting, class weighting, and a synthetic generator for desk-scale runs.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{MinaError, Result};
use crate::rng::{self, SeededRng};

pub const DEFAULT_SAMPLING_RATE: f64 = 300.0;
pub const DEFAULT_LENGTH: usize = 3000;

#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub id: String,
    /// Millivolts, uniformly sampled.
    pub samples: Vec<f64>,
    pub label: usize,
    pub sampling_rate: f64,
}

impl EcgRecord {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn with_samples(&self, samples: Vec<f64>) -> EcgRecord {
        EcgRecord {
            id: self.id.clone(),
            samples,
            label: self.label,
            sampling_rate: self.sampling_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<EcgRecord>,
    pub validation: Vec<EcgRecord>,
    pub test: Vec<EcgRecord>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `train.txt`, `validation.txt` and `test.txt`, one record id per line.
    pub fn write_manifest(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| MinaError::io(dir, e))?;
        for (name, part) in [
            ("train.txt", &self.train),
            ("validation.txt", &self.validation),
            ("test.txt", &self.test),
        ] {
            let path = dir.join(name);
            let mut body = String::new();
            for r in part {
                body.push_str(&r.id);
                body.push('\n');
            }
            fs::write(&path, body).map_err(|e| MinaError::io(&path, e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights(pub Vec<f64>);

impl ClassWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn uniform(num_classes: usize) -> Self {
        ClassWeights(vec![1.0; num_classes])
    }
}

/// Crops to the first `n` samples or zero-pads the tail up to `n`.
pub fn preprocess(samples: &[f64], n: usize) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(MinaError::InvalidInput("cannot preprocess an empty signal".into()));
    }
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(MinaError::InvalidInput(format!("sample {i} is not finite")));
    }
    let mut out = Vec::with_capacity(n);
    out.extend_from_slice(&samples[..samples.len().min(n)]);
    out.resize(n, 0.0);
    Ok(out)
}

/// Reads a record CSV (`id,label,s_0,s_1,...`) and preprocesses every row to length `n`.
///
/// A first line starting with `id,label` is treated as the header. Blank lines are skipped.
pub fn load_dataset(path: &Path, n: usize) -> Result<Vec<EcgRecord>> {
    let file = fs::File::open(path).map_err(|e| MinaError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| MinaError::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("id,label")) {
            continue;
        }
        let record = parse_row(line, n).map_err(|message| MinaError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(MinaError::EmptyDataset);
    }
    Ok(records)
}

fn parse_row(line: &str, n: usize) -> std::result::Result<EcgRecord, String> {
    let mut fields = line.split(',');
    let id = fields.next().map(str::trim).unwrap_or_default();
    if id.is_empty() {
        return Err("missing record id".into());
    }
    let label_field = fields.next().ok_or("missing label")?.trim();
    let label: usize = label_field
        .parse()
        .map_err(|_| format!("label `{label_field}` is not a non-negative integer"))?;
    let mut samples = Vec::new();
    for (k, f) in fields.enumerate() {
        let f = f.trim();
        let v: f64 = f.parse().map_err(|_| format!("sample {k} `{f}` is not a number"))?;
        if !v.is_finite() {
            return Err(format!("sample {k} is not finite"));
        }
        samples.push(v);
    }
    if samples.is_empty() {
        return Err("row has no samples".into());
    }
    let samples = preprocess(&samples, n).map_err(|e| e.to_string())?;
    Ok(EcgRecord {
        id: id.to_string(),
        samples,
        label,
        sampling_rate: DEFAULT_SAMPLING_RATE,
    })
}

/// Writes records in the format read by [`load_dataset`].
pub fn write_dataset(path: &Path, records: &[EcgRecord]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| MinaError::io(parent, e))?;
    }
    let file = fs::File::create(path).map_err(|e| MinaError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "id,label,samples...")?;
        for r in records {
            write!(w, "{},{}", r.id, r.label)?;
            for v in &r.samples {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    };
    emit().map_err(|e| MinaError::io(path, e))
}

/// Apportions `total` units over `ratios` by the largest-remainder method.
/// Ties in the remainder go to the earlier entry.
pub fn largest_remainder(total: usize, ratios: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Stratified, seeded split into train/validation/test.
///
/// Split sizes follow the largest-remainder rounding of the whole set; the
/// per-class allocation is then rounded so that every cell is the floor or
/// ceiling of its exact share.
pub fn split_dataset(records: &[EcgRecord], ratios: (f64, f64, f64), seed: u64) -> Result<DatasetSplit> {
    let ratios = [ratios.0, ratios.1, ratios.2];
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || ratios.iter().any(|r| *r < 0.0) {
        return Err(MinaError::config(
            "split_ratios",
            format!("ratios must be non-negative and sum to 1, got {sum}"),
        ));
    }
    if records.is_empty() {
        return Err(MinaError::EmptyDataset);
    }
    let num_classes = records.iter().map(|r| r.label).max().unwrap_or(0) + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, r) in records.iter().enumerate() {
        by_class[r.label].push(i);
    }
    let targets = largest_remainder(records.len(), &ratios);
    let quotas = stratified_quotas(&by_class.iter().map(Vec::len).collect::<Vec<_>>(), &ratios, &targets);

    let mut rng = rng::seeded(seed);
    let mut parts: [Vec<EcgRecord>; 3] = Default::default();
    for (class, members) in by_class.iter_mut().enumerate() {
        members.shuffle(&mut rng);
        let mut cursor = 0;
        for (s, part) in parts.iter_mut().enumerate() {
            let take = quotas[class][s];
            part.extend(members[cursor..cursor + take].iter().map(|&i| records[i].clone()));
            cursor += take;
        }
    }
    for part in parts.iter_mut() {
        part.shuffle(&mut rng);
    }
    let [train, validation, test] = parts;
    Ok(DatasetSplit {
        train,
        validation,
        test,
        seed,
    })
}

fn stratified_quotas(class_counts: &[usize], ratios: &[f64], targets: &[usize]) -> Vec<Vec<usize>> {
    let splits = ratios.len();
    let mut quota: Vec<Vec<usize>> = Vec::with_capacity(class_counts.len());
    let mut cells = Vec::new();
    for (c, &count) in class_counts.iter().enumerate() {
        let mut row = Vec::with_capacity(splits);
        for (s, r) in ratios.iter().enumerate() {
            let exact = r * count as f64;
            row.push(exact.floor() as usize);
            cells.push((exact - exact.floor(), c, s));
        }
        quota.push(row);
    }
    let mut row_deficit: Vec<usize> = class_counts
        .iter()
        .zip(&quota)
        .map(|(&n, row)| n - row.iter().sum::<usize>())
        .collect();
    let mut col_deficit: Vec<usize> = (0..splits)
        .map(|s| targets[s].saturating_sub(quota.iter().map(|row| row[s]).sum::<usize>()))
        .collect();
    cells.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut bumped = vec![vec![false; splits]; class_counts.len()];
    for &(_, c, s) in &cells {
        if row_deficit[c] > 0 && col_deficit[s] > 0 {
            quota[c][s] += 1;
            bumped[c][s] = true;
            row_deficit[c] -= 1;
            col_deficit[s] -= 1;
        }
    }
    // Greedy can strand a unit even when a floor/ceiling assignment exists:
    // reroute through augmenting paths that move an earlier bump to another split.
    loop {
        let found = (0..class_counts.len())
            .filter(|&c| row_deficit[c] > 0)
            .find_map(|c| augmenting_path(c, &bumped, &col_deficit).map(|path| (c, path)));
        let Some((c, path)) = found else { break };
        for &(class, s, add) in &path {
            bumped[class][s] = add;
            if add {
                quota[class][s] += 1;
            } else {
                quota[class][s] -= 1;
            }
        }
        let &(_, s, _) = path.last().expect("path ends on a split");
        row_deficit[c] -= 1;
        col_deficit[s] -= 1;
    }
    // No exact assignment: accept cells above their ceiling rather than drop records.
    for c in 0..class_counts.len() {
        for s in 0..splits {
            while row_deficit[c] > 0 && col_deficit[s] > 0 {
                quota[c][s] += 1;
                row_deficit[c] -= 1;
                col_deficit[s] -= 1;
            }
        }
    }
    // Column targets can be unreachable only if counts disagree with totals; keep rows exact.
    for c in 0..class_counts.len() {
        if row_deficit[c] > 0 {
            quota[c][0] += row_deficit[c];
            row_deficit[c] = 0;
        }
    }
    quota
}

/// Breadth-first search for an alternating path from class `start` to a split
/// with spare capacity: add an unbumped cell, remove a bumped cell from the same
/// split, add another unbumped cell, and so on. Returns `(class, split, add)` steps.
fn augmenting_path(start: usize, bumped: &[Vec<bool>], col_deficit: &[usize]) -> Option<Vec<(usize, usize, bool)>> {
    let (classes, splits) = (bumped.len(), col_deficit.len());
    // Predecessor of each split: the class that reaches it.
    let mut via_class: Vec<Option<usize>> = vec![None; splits];
    // Predecessor of each class: the split it was freed from.
    let mut via_split: Vec<Option<usize>> = vec![None; classes];
    let mut seen_class = vec![false; classes];
    seen_class[start] = true;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for s in 0..splits {
            if bumped[c][s] || via_class[s].is_some() {
                continue;
            }
            via_class[s] = Some(c);
            if col_deficit[s] > 0 {
                let mut path = Vec::new();
                let mut split = s;
                loop {
                    let class = via_class[split].expect("visited split");
                    path.push((class, split, true));
                    match via_split[class] {
                        Some(prev) => {
                            path.push((class, prev, false));
                            split = prev;
                        }
                        None => break,
                    }
                }
                path.reverse();
                return Some(path);
            }
            for (other, row) in bumped.iter().enumerate() {
                if row[s] && !seen_class[other] {
                    seen_class[other] = true;
                    via_split[other] = Some(s);
                    queue.push_back(other);
                }
            }
        }
    }
    None
}

/// Inverse-frequency weights `w_c = total / (C * count_c)`.
pub fn class_weights(labels: &[usize], num_classes: usize) -> Result<ClassWeights> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        if l >= num_classes {
            return Err(MinaError::InvalidInput(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        counts[l] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(MinaError::MissingClass(missing));
    }
    let total = labels.len() as f64;
    Ok(ClassWeights(
        counts
            .iter()
            .map(|&c| total / (num_classes as f64 * c as f64))
            .collect(),
    ))
}

const MEAN_RR_SECONDS: f64 = 0.8;
const REGULAR_RR_JITTER: f64 = 0.02;
const IRREGULAR_RR_JITTER: f64 = 0.45;

/// Generates a synthetic single-lead trace.
///
/// Class 0 is a regular sinus-like beat train: a QRS bump roughly every 0.8 s
/// with a small P bump before it and a T bump after it. Class 1 draws each RR
/// interval uniformly within ±45% of the mean and drops the P bumps. Both carry
/// low-level white measurement noise.
pub fn synth_ecg(class_id: usize, seed: u64, n: usize, sampling_rate: f64) -> Result<EcgRecord> {
    if class_id > 1 {
        return Err(MinaError::InvalidInput(format!(
            "synthetic generator supports classes 0 and 1, got {class_id}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let irregular = class_id == 1;
    let duration = n as f64 / sampling_rate;

    let jitter = if irregular {
        IRREGULAR_RR_JITTER
    } else {
        REGULAR_RR_JITTER
    };
    let mut beats = Vec::new();
    let mut t = rng::uniform_range(&mut rng, 0.1, MEAN_RR_SECONDS);
    while t < duration + 0.5 {
        beats.push(t);
        t += MEAN_RR_SECONDS * (1.0 + jitter * rng::uniform_range(&mut rng, -1.0, 1.0));
    }
    let qrs_amp = rng::uniform_range(&mut rng, 0.9, 1.1);

    let mut samples = vec![0.0; n];
    rng::fill_standard_normal(&mut rng, &mut samples);
    for v in samples.iter_mut() {
        *v *= 0.02;
    }
    for &beat in &beats {
        add_bump(&mut samples, sampling_rate, beat, 0.012, qrs_amp);
        add_bump(&mut samples, sampling_rate, beat + 0.25, 0.04, 0.3);
        if !irregular {
            add_bump(&mut samples, sampling_rate, beat - 0.16, 0.025, 0.15);
        }
    }
    Ok(EcgRecord {
        id: format!("synth-{class_id}-{seed}"),
        samples,
        label: class_id,
        sampling_rate,
    })
}

fn add_bump(samples: &mut [f64], fs: f64, center: f64, width: f64, amp: f64) {
    let lo = ((center - 5.0 * width) * fs).floor().max(0.0) as usize;
    let hi = (((center + 5.0 * width) * fs).ceil().max(0.0) as usize).min(samples.len());
    for (k, v) in samples.iter_mut().enumerate().take(hi).skip(lo) {
        let dt = k as f64 / fs - center;
        *v += amp * (-0.5 * (dt / width).powi(2)).exp();
    }
}

/// `count` synthetic records, `round(count * positive_fraction)` of them class 1,
/// in seeded shuffled order.
pub fn synth_dataset(
    count: usize,
    positive_fraction: f64,
    seed: u64,
    n: usize,
    sampling_rate: f64,
) -> Result<Vec<EcgRecord>> {
    if !(0.0..=1.0).contains(&positive_fraction) {
        return Err(MinaError::config("balance", "must lie in [0, 1]"));
    }
    let positives = (count as f64 * positive_fraction).round() as usize;
    let mut labels: Vec<usize> = (0..count).map(|i| usize::from(i < positives)).collect();
    let mut rng: SeededRng = rng::seeded(seed);
    labels.shuffle(&mut rng);
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let mut r = synth_ecg(label, rng::derive_seed(seed, i as u64), n, sampling_rate)?;
            r.id = format!("synth_{i:05}");
            Ok(r)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: usize, label: usize) -> EcgRecord {
        EcgRecord {
            id: format!("r{id}"),
            samples: vec![0.0; 4],
            label,
            sampling_rate: DEFAULT_SAMPLING_RATE,
        }
    }

    #[test]
    fn preprocess_identity_pad_and_crop() {
        let x: Vec<f64> = (0..3000).map(|i| i as f64).collect();
        assert_eq!(preprocess(&x, 3000).unwrap(), x);

        let short: Vec<f64> = (0..2714).map(|i| 1.0 + i as f64).collect();
        let padded = preprocess(&short, 3000).unwrap();
        assert_eq!(&padded[..2714], &short[..]);
        assert_eq!(padded[2714..].len(), 286);
        assert!(padded[2714..].iter().all(|&v| v == 0.0));

        let long: Vec<f64> = (0..18062).map(|i| i as f64).collect();
        assert_eq!(preprocess(&long, 3000).unwrap(), &long[..3000]);
    }

    #[test]
    fn preprocess_rejects_empty_and_nan() {
        assert!(preprocess(&[], 10).is_err());
        assert!(preprocess(&[1.0, f64::NAN], 10).is_err());
    }

    #[test]
    fn largest_remainder_rounding() {
        assert_eq!(largest_remainder(100, &[0.75, 0.10, 0.15]), vec![75, 10, 15]);
        assert_eq!(largest_remainder(7, &[0.75, 0.10, 0.15]), vec![5, 1, 1]);
        assert_eq!(largest_remainder(8528, &[0.75, 0.10, 0.15]).iter().sum::<usize>(), 8528);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let records: Vec<_> = (0..100).map(|i| record(i, usize::from(i % 2 == 0))).collect();
        let a = split_dataset(&records, (0.75, 0.10, 0.15), 7).unwrap();
        let b = split_dataset(&records, (0.75, 0.10, 0.15), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (75, 10, 15));
    }

    #[test]
    fn split_is_stratified() {
        let records: Vec<_> = (0..20).map(|i| record(i, usize::from(i < 4))).collect();
        let s = split_dataset(&records, (0.75, 0.10, 0.15), 3).unwrap();
        for (part, ratio) in [(&s.train, 0.75), (&s.validation, 0.10), (&s.test, 0.15)] {
            let pos = part.iter().filter(|r| r.label == 1).count() as f64;
            assert!((pos - 4.0 * ratio).abs() <= 1.0, "{pos} vs {}", 4.0 * ratio);
        }
    }

    #[test]
    fn quotas_reroute_when_greedy_strands_a_unit() {
        // Greedy rounding would put 11 positives in test against an exact share of 9.9.
        let ratios = [0.75, 0.10, 0.15];
        let targets = largest_remainder(143, &ratios);
        let q = stratified_quotas(&[77, 66], &ratios, &targets);
        for (c, &count) in [77usize, 66].iter().enumerate() {
            assert_eq!(q[c].iter().sum::<usize>(), count);
            for (s, r) in ratios.iter().enumerate() {
                assert!((q[c][s] as f64 - r * count as f64).abs() < 1.0, "{q:?}");
            }
        }
        for s in 0..3 {
            assert_eq!(q[0][s] + q[1][s], targets[s]);
        }
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let records: Vec<_> = (0..10).map(|i| record(i, 0)).collect();
        assert!(matches!(
            split_dataset(&records, (0.5, 0.2, 0.2), 1),
            Err(MinaError::Config { .. })
        ));
    }

    #[test]
    fn class_weight_examples() {
        let labels = |a: usize, b: usize| {
            let mut v = vec![0; a];
            v.extend(vec![1; b]);
            v
        };
        assert_eq!(class_weights(&labels(50, 50), 2).unwrap().0, vec![1.0, 1.0]);
        let w = class_weights(&labels(25, 75), 2).unwrap().0;
        assert!((w[0] - 2.0).abs() < 1e-12 && (w[1] - 2.0 / 3.0).abs() < 1e-12);
        let w = class_weights(&labels(738, 7790), 2).unwrap().0;
        assert!((w[0] - 5.7778).abs() < 1e-3, "{}", w[0]);
        assert!((w[1] - 0.5474).abs() < 1e-4, "{}", w[1]);
        assert!(matches!(class_weights(&[0, 0], 2), Err(MinaError::MissingClass(1))));
    }

    #[test]
    fn synth_is_deterministic_and_seed_sensitive() {
        let a = synth_ecg(0, 1, 3000, 300.0).unwrap();
        let b = synth_ecg(0, 1, 3000, 300.0).unwrap();
        let c = synth_ecg(0, 2, 3000, 300.0).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.samples, c.samples);
        assert!(synth_ecg(2, 1, 3000, 300.0).is_err());
    }
}
