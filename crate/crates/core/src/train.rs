//! Adam training loops, batch partitioning and evaluation.

use std::ops::Range;

use firecast_tensor::{par, AdamState, Graph, Mode, ParamStore, TensorError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{confusion, ConfusionMatrix};
use crate::models::{classify, BaselineModel, BaselineOutput, HybridModel, Model};

const EVAL_CHUNK: usize = 64;

/// What the training loop needs from a model.
pub trait Trainable: Sync {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// Forward pass over `rows` of `data`.
    fn forward_rows(&self, g: &mut Graph<'_>, data: &Dataset, rows: &[usize]) -> Result<BaselineOutput>;
    fn loss(&self, g: &mut Graph<'_>, out: BaselineOutput, labels: &[f64]) -> Result<firecast_tensor::Var>;
    fn input_width(&self) -> usize;
}

impl Trainable for BaselineModel {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward_rows(&self, g: &mut Graph<'_>, data: &Dataset, rows: &[usize]) -> Result<BaselineOutput> {
        let x = g.tape.constant(data.feature_tensor(rows));
        self.net.forward(g, x)
    }

    fn loss(&self, g: &mut Graph<'_>, out: BaselineOutput, labels: &[f64]) -> Result<firecast_tensor::Var> {
        self.net.loss(g, out, labels)
    }

    fn input_width(&self) -> usize {
        self.net.input_dim()
    }
}

impl Trainable for HybridModel {
    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward_rows(&self, g: &mut Graph<'_>, data: &Dataset, rows: &[usize]) -> Result<BaselineOutput> {
        let x = g.tape.constant(data.feature_tensor(rows));
        let images = g.tape.constant(data.image_tensor(rows)?);
        self.forward(g, x, images)
    }

    fn loss(&self, g: &mut Graph<'_>, out: BaselineOutput, labels: &[f64]) -> Result<firecast_tensor::Var> {
        self.head.loss(g, out, labels)
    }

    fn input_width(&self) -> usize {
        self.config.tabular_width
    }
}

impl Trainable for Model {
    fn store(&self) -> &ParamStore {
        Model::store(self)
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        Model::store_mut(self)
    }

    fn forward_rows(&self, g: &mut Graph<'_>, data: &Dataset, rows: &[usize]) -> Result<BaselineOutput> {
        match self {
            Model::Baseline(m) => m.forward_rows(g, data, rows),
            Model::Hybrid(m) => m.forward_rows(g, data, rows),
        }
    }

    fn loss(&self, g: &mut Graph<'_>, out: BaselineOutput, labels: &[f64]) -> Result<firecast_tensor::Var> {
        match self {
            Model::Baseline(m) => m.loss(g, out, labels),
            Model::Hybrid(m) => Trainable::loss(m, g, out, labels),
        }
    }

    fn input_width(&self) -> usize {
        match self {
            Model::Baseline(m) => m.input_width(),
            Model::Hybrid(m) => m.input_width(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// `None` trains on the full set every step.
    pub batch_size: Option<usize>,
    pub threshold: f64,
    pub seed: u64,
}

impl TrainOptions {
    pub fn full_batch(epochs: usize, learning_rate: f64, seed: u64) -> Self {
        Self { epochs, learning_rate, weight_decay: 1e-4, batch_size: None, threshold: 0.5, seed }
    }
}

/// Confusion matrix and headline rates at a threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
}

impl EvalSummary {
    pub fn from_probabilities(probs: &[f64], labels: &[bool], threshold: f64) -> Result<Self> {
        let preds: Vec<bool> = probs.iter().map(|&p| classify(p, threshold)).collect();
        let cm = confusion(&preds, labels)?;
        let r = cm.rates();
        Ok(Self {
            confusion: cm,
            accuracy: r.accuracy.expect("non-empty"),
            tpr: r.tpr,
            tnr: r.tnr,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Row-weighted mean of the batch losses.
    pub loss: f64,
    /// Accuracy of the train-mode predictions made during the epoch.
    pub train_accuracy: f64,
    pub test: Option<EvalSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    pub step: usize,
    pub epoch: usize,
    pub batch: usize,
    pub rows: usize,
    pub loss: f64,
    /// `loss · rows / n_train`; these sum to the epoch loss.
    pub scaled_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub batches: Vec<BatchRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:?}"))
}

impl TrainingLog {
    /// `epoch,loss,train_acc,test_acc,test_tpr,test_tnr`; floats in
    /// round-trip notation, undefined values empty.
    pub fn epoch_csv(&self) -> String {
        let mut s = String::from("epoch,loss,train_acc,test_acc,test_tpr,test_tnr\n");
        for e in &self.epochs {
            let t = e.test.as_ref();
            s += &format!(
                "{},{:?},{:?},{},{},{}\n",
                e.epoch,
                e.loss,
                e.train_accuracy,
                opt(t.map(|t| t.accuracy)),
                opt(t.and_then(|t| t.tpr)),
                opt(t.and_then(|t| t.tnr)),
            );
        }
        s
    }

    pub fn batch_csv(&self) -> String {
        let mut s = String::from("step,epoch,batch,rows,loss,scaled_loss\n");
        for b in &self.batches {
            s += &format!(
                "{},{},{},{},{:?},{:?}\n",
                b.step, b.epoch, b.batch, b.rows, b.loss, b.scaled_loss
            );
        }
        s
    }

    /// SHA-256 over both CSV renderings.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.epoch_csv());
        h.update(self.batch_csv());
        hex::encode(h.finalize())
    }

    pub fn final_epoch(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Consecutive ranges of at most `batch` rows. A trailing single row is
/// folded into the previous batch so batch norm always sees two rows.
pub fn partition(n: usize, batch: usize) -> Vec<Range<usize>> {
    let batch = batch.max(1);
    let mut out: Vec<Range<usize>> = (0..n).step_by(batch).map(|s| s..(s + batch).min(n)).collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() == 1) {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("len > 1").end = tail.end;
    }
    out
}

fn diverged(epoch: usize, loss: f64) -> Error {
    Error::Divergence { epoch, loss }
}

/// Trains with Adam, evaluating on `test` after every epoch.
///
/// Full-batch runs keep the original row order; mini-batch runs reshuffle
/// every epoch. All randomness derives from `opts.seed`.
pub fn train<M: Trainable>(
    model: &mut M,
    train: &Dataset,
    test: Option<&Dataset>,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainingLog> {
    if train.len() < 2 || train.positives() == 0 || train.positives() == train.len() {
        return Err(Error::Sampling("training needs at least two rows and both classes".into()));
    }
    for d in std::iter::once(train).chain(test) {
        if d.width != model.input_width() {
            return Err(Error::Schema { expected: model.input_width(), got: d.width });
        }
    }
    let n = train.len();
    let mut adam = AdamState::new(opts.learning_rate, opts.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = TrainingLog::default();
    for epoch in 0..opts.epochs {
        if opts.batch_size.is_some() {
            order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for (b, range) in partition(n, opts.batch_size.unwrap_or(n)).into_iter().enumerate() {
            let rows = &order[range];
            let labels = train.label_values(rows);
            let step_seed: u64 = rng.gen();
            let (loss, probs, update) = {
                let mut g = Graph::new(model.store(), Mode::Train, step_seed);
                let pass = (|| {
                    let out = model.forward_rows(&mut g, train, rows)?;
                    let loss = model.loss(&mut g, out, &labels)?;
                    g.backward(loss)?;
                    let l = g.tape.value(loss)?.item();
                    let p = g.tape.value(out.probabilities)?.data().to_vec();
                    Ok::<_, Error>((l, p))
                })();
                let (l, p) = match pass {
                    Err(Error::Tensor(TensorError::NonFinite { .. })) => return Err(diverged(epoch, f64::NAN)),
                    other => other?,
                };
                (l, p, g.finish()?)
            };
            if !loss.is_finite() {
                return Err(diverged(epoch, loss));
            }
            model.store_mut().apply(update)?;
            adam.step(model.store_mut())?;
            if model.store().entries().iter().any(|e| !e.tensor.is_finite()) {
                return Err(diverged(epoch, loss));
            }
            correct += probs
                .iter()
                .zip(rows)
                .filter(|&(&p, &i)| classify(p, opts.threshold) == train.labels[i])
                .count();
            let scaled = loss * rows.len() as f64 / n as f64;
            epoch_loss += scaled;
            log.batches.push(BatchRecord {
                step: log.batches.len(),
                epoch,
                batch: b,
                rows: rows.len(),
                loss,
                scaled_loss: scaled,
            });
        }
        let test = match test {
            Some(t) => Some(evaluate(model, t, opts.threshold)?),
            None => None,
        };
        let record = EpochRecord {
            epoch,
            loss: epoch_loss,
            train_accuracy: correct as f64 / n as f64,
            test,
        };
        on_epoch(&record);
        log.epochs.push(record);
    }
    Ok(log)
}

/// Eval-mode probabilities for every row, computed in fixed chunks.
pub fn predict<M: Trainable>(model: &M, data: &Dataset) -> Result<Vec<f64>> {
    if data.width != model.input_width() {
        return Err(Error::Schema { expected: model.input_width(), got: data.width });
    }
    let chunks = partition(data.len(), EVAL_CHUNK);
    let parts = par::map_range(chunks.len(), |c| -> Result<Vec<f64>> {
        let rows: Vec<usize> = chunks[c].clone().collect();
        let mut g = Graph::new(model.store(), Mode::Eval, 0);
        let out = model.forward_rows(&mut g, data, &rows)?;
        Ok(g.tape.value(out.probabilities)?.data().to_vec())
    });
    let mut probs = Vec::with_capacity(data.len());
    for p in parts {
        probs.extend(p?);
    }
    Ok(probs)
}

pub fn evaluate<M: Trainable>(model: &M, data: &Dataset, threshold: f64) -> Result<EvalSummary> {
    let probs = predict(model, data)?;
    EvalSummary::from_probabilities(&probs, &data.labels, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::separable_tabular;
    use crate::models::{init_baseline, BaselineConfig};

    #[test]
    fn partition_shapes() {
        let p = partition(100, 32);
        assert_eq!(p.len(), 4);
        assert_eq!(p.iter().map(|r| r.len()).collect::<Vec<_>>(), [32, 32, 32, 4]);
        assert_eq!(partition(65, 32), [0..32, 32..65]);
        assert_eq!(partition(10, 32), [0..10]);
        assert_eq!(partition(1, 32), [0..1]);
        assert!(partition(0, 32).is_empty());
    }

    fn small() -> (BaselineModel, Dataset) {
        let config = BaselineConfig { input_dim: 2, hidden: vec![16, 8, 4], ..BaselineConfig::default() };
        (init_baseline(&config, 1).unwrap(), separable_tabular(64, 2))
    }

    #[test]
    fn scaled_batch_losses_sum_to_epoch_loss() {
        let (mut model, data) = small();
        let opts = TrainOptions { batch_size: Some(10), ..TrainOptions::full_batch(3, 0.01, 4) };
        let log = train(&mut model, &data, None, &opts, |_| {}).unwrap();
        assert_eq!(log.epochs.len(), 3);
        assert_eq!(log.batches.len(), 3 * 7);
        for e in &log.epochs {
            let sum: f64 = log.batches.iter().filter(|b| b.epoch == e.epoch).map(|b| b.scaled_loss).sum();
            assert!((sum - e.loss).abs() < 1e-12);
        }
    }

    #[test]
    fn first_epoch_loss_is_near_a_quarter() {
        let config = BaselineConfig::with_input_dim(2);
        let mut model = init_baseline(&config, 5).unwrap();
        let data = separable_tabular(200, 6);
        let log = train(&mut model, &data, None, &TrainOptions::full_batch(1, 0.01, 0), |_| {}).unwrap();
        assert!((log.epochs[0].loss - 0.25).abs() <= 0.05, "{}", log.epochs[0].loss);
    }

    #[test]
    fn training_is_deterministic() {
        let (m, data) = small();
        let opts = TrainOptions { batch_size: Some(16), ..TrainOptions::full_batch(4, 0.01, 9) };
        let (mut a, mut b) = (m.clone(), m);
        let la = train(&mut a, &data, Some(&data), &opts, |_| {}).unwrap();
        let lb = train(&mut b, &data, Some(&data), &opts, |_| {}).unwrap();
        assert_eq!(la, lb);
        assert_eq!(la.digest(), lb.digest());
        assert_eq!(predict(&a, &data).unwrap(), predict(&b, &data).unwrap());
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let (mut model, mut data) = small();
        data.features[0] = 1e300;
        let err = train(&mut model, &data, None, &TrainOptions::full_batch(2, 0.01, 0), |_| {}).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 0, .. }), "{err:?}");
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn schema_and_class_checks() {
        let (mut model, data) = small();
        let wide = Dataset::new(vec![0, 1], 3, vec![0.0; 6], vec![true, false]).unwrap();
        let opts = TrainOptions::full_batch(1, 0.01, 0);
        assert!(matches!(train(&mut model, &wide, None, &opts, |_| {}), Err(Error::Schema { expected: 2, got: 3 })));
        let one_class = data.subset(&[0]);
        assert!(train(&mut model, &one_class, None, &opts, |_| {}).is_err());
        assert!(matches!(predict(&model, &wide), Err(Error::Schema { .. })));
    }

    #[test]
    fn predict_is_chunk_and_thread_invariant() {
        let (model, _) = small();
        let data = separable_tabular(150, 3);
        let par = predict(&model, &data).unwrap();
        let seq = par::sequential(|| predict(&model, &data)).unwrap();
        assert_eq!(par, seq);
        let single = predict(&model, &data.subset(&[149, 0])).unwrap();
        assert_eq!(single, [par[149], par[0]]);
    }
}
