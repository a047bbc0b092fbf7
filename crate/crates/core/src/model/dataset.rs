use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub input_width: usize,
    pub num_classes: usize,
    pub rows: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows per class label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for r in &self.rows {
            c[r.label] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
}

/// A training task: training rows, held-out validation rows and the metric
/// that scores a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub id: String,
    pub train: Dataset,
    pub validation: Dataset,
    pub metric: Metric,
}

impl Problem {
    pub fn input_width(&self) -> usize {
        self.train.input_width
    }

    pub fn num_classes(&self) -> usize {
        self.train.num_classes
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn invalid(path: &Path, message: impl Into<String>) -> DatasetError {
    DatasetError::Invalid {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a CSV with a header row: feature columns, then an integer `label`
/// column. `num_classes` is left as `max label + 1`.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset, DatasetError> {
    let csv_err = |source| DatasetError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().next_back() != Some("label") {
        return Err(invalid(path, "last column must be `label`"));
    }
    let width = headers.len() - 1;
    if width == 0 {
        return Err(invalid(path, "no feature columns"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let mut features = Vec::with_capacity(width);
        for field in rec.iter().take(width) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| invalid(path, format!("line {line}: bad number {field:?}")))?;
            if !v.is_finite() {
                return Err(invalid(path, format!("line {line}: non-finite feature")));
            }
            features.push(v);
        }
        let label: usize = rec[width]
            .trim()
            .parse()
            .map_err(|_| invalid(path, format!("line {line}: bad label {:?}", &rec[width])))?;
        rows.push(Sample { features, label });
    }
    let num_classes = rows.iter().map(|r| r.label + 1).max().unwrap_or(0);
    Ok(Dataset {
        input_width: width,
        num_classes,
        rows,
    })
}

pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<(), DatasetError> {
    let csv_err = |source| DatasetError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = (0..data.input_width).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(csv_err)?;
    for r in &data.rows {
        // Display for f64 prints the shortest string that round-trips.
        let mut rec: Vec<String> = r.features.iter().map(|v| v.to_string()).collect();
        rec.push(r.label.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

fn problem_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{id}.train.csv")), dir.join(format!("{id}.valid.csv")))
}

/// Loads `<dir>/<id>.train.csv` and `<dir>/<id>.valid.csv`.
pub fn load_problem(dir: &Path, id: &str) -> Result<Problem, DatasetError> {
    let (tp, vp) = problem_paths(dir, id);
    let mut train = read_dataset_csv(&tp)?;
    let mut validation = read_dataset_csv(&vp)?;
    if train.input_width != validation.input_width {
        return Err(invalid(&vp, "feature width differs from the training file"));
    }
    if validation.is_empty() {
        return Err(invalid(&vp, "validation set is empty"));
    }
    if train.is_empty() {
        return Err(invalid(&tp, "training set is empty"));
    }
    let k = train.num_classes.max(validation.num_classes).max(2);
    train.num_classes = k;
    validation.num_classes = k;
    Ok(Problem {
        id: id.to_string(),
        train,
        validation,
        metric: Metric::Accuracy,
    })
}

pub fn write_problem(dir: &Path, p: &Problem) -> Result<(), DatasetError> {
    let (tp, vp) = problem_paths(dir, &p.id);
    write_dataset_csv(&tp, &p.train)?;
    write_dataset_csv(&vp, &p.validation)
}

fn dataset(width: usize, classes: usize, rows: Vec<Sample>) -> Dataset {
    Dataset {
        input_width: width,
        num_classes: classes,
        rows,
    }
}

/// The four XOR patterns; validation holds slightly shifted copies.
pub fn xor_problem() -> Problem {
    let pts = [([0.0, 0.0], 0), ([0.0, 1.0], 1), ([1.0, 0.0], 1), ([1.0, 1.0], 0)];
    let train = pts
        .iter()
        .map(|&(f, label)| Sample {
            features: f.to_vec(),
            label,
        })
        .collect();
    let validation = pts
        .iter()
        .map(|&(f, label)| Sample {
            features: f.iter().map(|v| if *v == 0.0 { 0.05 } else { 0.95 }).collect(),
            label,
        })
        .collect();
    Problem {
        id: "xor".into(),
        train: dataset(2, 2, train),
        validation: dataset(2, 2, validation),
        metric: Metric::Accuracy,
    }
}

/// Splits per-class row lists into balanced train/validation sets.
fn split_balanced(
    id: &str,
    width: usize,
    per_class: Vec<Vec<Sample>>,
    valid_per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Problem {
    let classes = per_class.len();
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for mut rows in per_class {
        rows.shuffle(rng);
        let rest = rows.split_off(valid_per_class);
        valid.extend(rows);
        train.extend(rest);
    }
    train.shuffle(rng);
    valid.shuffle(rng);
    Problem {
        id: id.into(),
        train: dataset(width, classes, train),
        validation: dataset(width, classes, valid),
        metric: Metric::Accuracy,
    }
}

/// Two interleaved spirals, 200 points each; 300 train / 100 validation.
pub fn two_spirals_problem(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 200;
    let per_class = (0..2)
        .map(|c| {
            (0..n)
                .map(|i| {
                    let t = i as f64 / n as f64;
                    let r = 0.1 + 0.9 * t;
                    let a = 2.5 * PI * t + c as f64 * PI;
                    let x = r * a.cos() + rng.gen_range(-0.02..0.02);
                    let y = r * a.sin() + rng.gen_range(-0.02..0.02);
                    Sample {
                        features: vec![x, y],
                        label: c,
                    }
                })
                .collect()
        })
        .collect();
    split_balanced("two_spirals", 2, per_class, 50, &mut rng)
}

/// 16-wide noisy waves: class 0 has period 8, class 1 period 4, random
/// phase. 800 train / 200 validation.
pub fn stripes_problem(seed: u64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_class = [8.0, 4.0]
        .iter()
        .enumerate()
        .map(|(c, &period)| {
            (0..500)
                .map(|_| {
                    let phase = rng.gen_range(0.0..2.0 * PI);
                    let features = (0..16)
                        .map(|i| (2.0 * PI * i as f64 / period + phase).sin() + rng.gen_range(-0.5..0.5))
                        .collect();
                    Sample { features, label: c }
                })
                .collect()
        })
        .collect();
    split_balanced("stripes", 16, per_class, 100, &mut rng)
}
