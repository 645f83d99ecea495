//! Class rebalancing: majority undersampling with spillover, and SMOTE.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMethod {
    None,
    Undersample,
    Smote,
}

/// Train/test membership over row indices of the assembled table.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub method: ResampleMethod,
    pub train: Vec<usize>,
    /// The held-out part of the balanced pool, followed by every majority
    /// row the undersampler did not keep.
    pub test: Vec<usize>,
    /// Index into `test` where the spillover rows begin.
    pub spillover_start: usize,
    /// Majority rows kept per minority row (undersampling only).
    pub ratio: f64,
    pub seed: u64,
}

impl SplitPlan {
    pub fn balanced_test(&self) -> &[usize] {
        &self.test[..self.spillover_start]
    }

    pub fn spillover(&self) -> &[usize] {
        &self.test[self.spillover_start..]
    }
}

fn train_len(pool: usize, test_size: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&test_size) {
        return Err(Error::Sampling(format!("test size {test_size} not in [0, 1)")));
    }
    Ok((((1.0 - test_size) * pool as f64) + 1e-9).floor() as usize)
}

/// Shuffles all rows and holds out `test_size` of them.
pub fn random_split(n: usize, test_size: f64, seed: u64) -> Result<SplitPlan> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = train_len(n, test_size)?;
    let test = idx.split_off(cut);
    Ok(SplitPlan {
        method: ResampleMethod::None,
        train: idx,
        spillover_start: test.len(),
        test,
        ratio: f64::NAN,
        seed,
    })
}

/// Keeps every minority (`true`) row and `floor(minority · ratio)` majority
/// rows drawn without replacement, splits that pool into train and test,
/// and appends all unsampled majority rows to the test set in index order.
pub fn undersample(labels: &[bool], ratio: f64, test_size: f64, seed: u64) -> Result<SplitPlan> {
    let (minority, mut majority): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| labels[i]);
    if minority.is_empty() || majority.is_empty() {
        return Err(Error::Sampling("both classes must be present".into()));
    }
    if !(ratio > 0.0) {
        return Err(Error::Sampling(format!("ratio {ratio} must be positive")));
    }
    let keep = (minority.len() as f64 * ratio + 1e-9).floor() as usize;
    if keep > majority.len() {
        return Err(Error::Sampling(format!(
            "ratio 1:{ratio} needs {keep} majority rows, only {} exist",
            majority.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    majority.shuffle(&mut rng);
    let mut spill = majority.split_off(keep);
    spill.sort_unstable();

    let mut pool = minority;
    pool.extend(majority);
    pool.shuffle(&mut rng);
    let cut = train_len(pool.len(), test_size)?;
    let mut test = pool.split_off(cut);
    let spillover_start = test.len();
    test.extend(spill);
    Ok(SplitPlan {
        method: ResampleMethod::Undersample,
        train: pool,
        test,
        spillover_start,
        ratio,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoteMode {
    /// `X + u · (X_n − X)`, a point on the segment between the two.
    Standard,
    /// `X + u · |X − X_n|` componentwise.
    AbsoluteOffset,
}

pub fn smote_point(x: &[f64], neighbor: &[f64], u: f64, mode: SmoteMode) -> Vec<f64> {
    x.iter()
        .zip(neighbor)
        .map(|(&a, &b)| match mode {
            SmoteMode::Standard => a + u * (b - a),
            SmoteMode::AbsoluteOffset => a + u * (a - b).abs(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteSample {
    pub row: Vec<f64>,
    pub base: usize,
    pub neighbor: usize,
    pub u: f64,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest other rows of every row, ties broken by index.
fn neighborhoods(rows: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    (0..rows.len())
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..rows.len())
                .filter(|&j| j != i)
                .map(|j| (squared_distance(&rows[i], &rows[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Generates `amount` synthetic minority rows. Base rows are taken
/// cyclically; each pairs with one of its `k` Euclidean nearest minority
/// neighbours chosen uniformly, and draws its own `u ~ U(0, 1)`.
pub fn smote(
    minority: &[Vec<f64>],
    k: usize,
    amount: usize,
    seed: u64,
    mode: SmoteMode,
) -> Result<Vec<SmoteSample>> {
    if k == 0 || k >= minority.len() {
        return Err(Error::Sampling(format!(
            "neighbourhood size {k} needs more than {} minority rows",
            minority.len()
        )));
    }
    let width = minority[0].len();
    if minority.iter().any(|r| r.len() != width) {
        return Err(Error::Dimension("minority rows differ in width".into()));
    }
    let hoods = neighborhoods(minority, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..amount)
        .map(|i| {
            let base = i % minority.len();
            let neighbor = hoods[base][rng.gen_range(0..k)];
            let u: f64 = rng.gen();
            SmoteSample {
                row: smote_point(&minority[base], &minority[neighbor], u, mode),
                base,
                neighbor,
                u,
            }
        })
        .collect())
}
