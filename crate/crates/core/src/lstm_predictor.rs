//! Next-slot activity prediction with a stacked LSTM trained on sliding
//! windows of the observed activation history, plus confusion-matrix metrics.

use std::ops::Range;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::neural::{bce, bce_grad_logits, Activation, Adam, AdamConfig, LstmNetwork};
use crate::traffic::ActivationVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LstmConfig {
    pub window: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Offset between consecutive training windows; every window position carries a loss term.
    pub train_stride: usize,
    pub train_fraction: f64,
    /// Stop after this many epochs without validation improvement and keep the best epoch.
    pub early_stopping_patience: Option<usize>,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            window: 32,
            hidden: vec![64, 128, 64],
            epochs: 20,
            lr: 3e-3,
            batch_size: 16,
            train_stride: 8,
            train_fraction: 0.8,
            early_stopping_patience: None,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.epochs == 0 || self.batch_size == 0 || self.train_stride == 0 {
            return Err(Error::Config("LSTM window, epochs, batch size and stride must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(format!("invalid LSTM hidden sizes {:?}", self.hidden)));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("LSTM learning rate must be positive, got {}", self.lr)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::Config(format!("train fraction must lie in (0, 1], got {}", self.train_fraction)));
        }
        Ok(())
    }
}

/// Sliding windows (stride 1) over a binary activity history.
///
/// Window `i` covers slots `i..i+W` and its target is slot `i+W`. Training
/// windows come first; validation windows start `W` windows after the last
/// training window so no validation input slot is a training target.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    data: Array2<f32>,
    window: usize,
    train: Range<usize>,
    val: Range<usize>,
}

pub fn build_dataset(history: &[ActivationVector], window: usize, train_fraction: f64) -> Result<WindowedDataset> {
    if window == 0 {
        return Err(Error::Config("window length must be positive".into()));
    }
    if history.len() <= window {
        return Err(Error::InsufficientHistory {
            needed: window,
            got: history.len(),
        });
    }
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::Config(format!("train fraction must lie in (0, 1], got {train_fraction}")));
    }
    let devices = history[0].len();
    let mut data = Array2::zeros((history.len(), devices));
    for (t, w) in history.iter().enumerate() {
        check_dim("history row", devices, w.len())?;
        for (d, &on) in w.0.iter().enumerate() {
            data[[t, d]] = if on { 1.0 } else { 0.0 };
        }
    }
    let total = history.len() - window;
    let usable = total.saturating_sub(window);
    let (train, val) = if train_fraction >= 1.0 || usable < 2 {
        (0..total, total..total)
    } else {
        let n_train = ((usable as f64 * train_fraction).round() as usize).clamp(1, usable - 1);
        (0..n_train, (n_train + window)..total)
    };
    Ok(WindowedDataset {
        data,
        window,
        train,
        val,
    })
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.data.nrows() - self.window
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn devices(&self) -> usize {
        self.data.ncols()
    }

    pub fn train_range(&self) -> Range<usize> {
        self.train.clone()
    }

    pub fn val_range(&self) -> Range<usize> {
        self.val.clone()
    }

    /// `W × D` input of window `i`.
    pub fn input(&self, i: usize) -> ArrayView2<'_, f32> {
        self.data.slice(ndarray::s![i..i + self.window, ..])
    }

    pub fn target(&self, i: usize) -> ArrayView1<'_, f32> {
        self.data.row(i + self.window)
    }

    /// Time-major batch: `W + 1` matrices of `batch × D`, slot `s` of every listed window.
    fn time_major(&self, starts: &[usize], steps: usize) -> Vec<Array2<f32>> {
        (0..steps)
            .map(|s| {
                let mut m = Array2::zeros((starts.len(), self.devices()));
                for (b, &i) in starts.iter().enumerate() {
                    m.row_mut(b).assign(&self.data.row(i + s));
                }
                m
            })
            .collect()
    }
}

/// A trained predictor and its learning curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedLstm {
    pub network: LstmNetwork<f32>,
    pub window: usize,
    pub initial_train_bce: f64,
    pub train_bce: Vec<f64>,
    pub val_bce: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    pub best_epoch: usize,
}

/// Trains with sequence-to-sequence BCE: the output after reading slot `s`
/// of a window is scored against slot `s + 1`.
pub fn train<R: Rng + ?Sized>(dataset: &WindowedDataset, cfg: &LstmConfig, seed: u64, init_rng: &mut R, shuffle_rng: &mut R) -> Result<TrainedLstm> {
    cfg.validate()?;
    check_dim("LSTM window", cfg.window, dataset.window)?;
    if dataset.train.is_empty() {
        return Err(Error::Empty("empty training split"));
    }
    let d = dataset.devices();
    let mut net = LstmNetwork::<f32>::new(d, &cfg.hidden, d, Activation::Sigmoid, init_rng)?;
    let mut adam = Adam::new(&net, AdamConfig::with_lr(cfg.lr));
    let mut starts: Vec<usize> = dataset.train.clone().step_by(cfg.train_stride).collect();
    let last = dataset.train.end - 1;
    if starts.last() != Some(&last) {
        starts.push(last);
    }
    let steps = cfg.window + 1;

    let initial_train_bce = {
        let mut total = 0.0;
        for chunk in starts.chunks(256) {
            let seq = dataset.time_major(chunk, steps);
            let fwd = net.forward(&seq[..cfg.window])?;
            for s in 0..cfg.window {
                total += bce(fwd.outputs[s].view(), seq[s + 1].view())? as f64 * chunk.len() as f64;
            }
        }
        total / (starts.len() * cfg.window) as f64
    };

    let mut out = TrainedLstm {
        network: net.clone(),
        window: cfg.window,
        initial_train_bce,
        train_bce: Vec::new(),
        val_bce: Vec::new(),
        val_accuracy: Vec::new(),
        best_epoch: 0,
    };
    let mut best_val = f64::INFINITY;
    let mut since_best = 0usize;
    for epoch in 0..cfg.epochs {
        starts.shuffle(shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in starts.chunks(cfg.batch_size) {
            let seq = dataset.time_major(chunk, steps);
            let fwd = net.forward(&seq[..cfg.window]).map_err(|e| diverged(e, seed, epoch))?;
            let norm = chunk.len() * d * cfg.window;
            let mut loss = 0.0;
            let d_logits: Vec<Option<Array2<f32>>> = (0..cfg.window)
                .map(|s| {
                    loss += bce(fwd.outputs[s].view(), seq[s + 1].view()).map(|l| l as f64).unwrap_or(f64::NAN);
                    Some(bce_grad_logits(fwd.outputs[s].view(), seq[s + 1].view(), norm))
                })
                .collect();
            let loss = loss / cfg.window as f64;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("LSTM training diverged (seed {seed}, epoch {})", epoch + 1)));
            }
            let grads = net.backward_from_logits(&fwd, &d_logits);
            adam.step(&mut net, &grads).map_err(|e| diverged(e, seed, epoch))?;
            epoch_loss += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        out.train_bce.push(epoch_loss / seen as f64);
        let (vb, va) = if dataset.val.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let v = evaluate_range(&net, dataset, dataset.val.clone())?;
            (v.bce, v.accuracy)
        };
        out.val_bce.push(vb);
        out.val_accuracy.push(va);
        let improved = vb < best_val || dataset.val.is_empty();
        if improved {
            best_val = vb;
            since_best = 0;
        } else {
            since_best += 1;
        }
        match cfg.early_stopping_patience {
            Some(patience) => {
                if improved {
                    out.network = net.clone();
                    out.best_epoch = epoch + 1;
                }
                if since_best >= patience {
                    break;
                }
            }
            None => {
                out.network = net.clone();
                out.best_epoch = epoch + 1;
            }
        }
    }
    Ok(out)
}

fn diverged(e: Error, seed: u64, epoch: usize) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("{msg} (seed {seed}, epoch {})", epoch + 1)),
        other => other,
    }
}

/// Last-step evaluation over a range of windows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEvaluation {
    pub bce: f64,
    pub accuracy: f64,
    pub predictions: Vec<Vec<bool>>,
    pub truths: Vec<Vec<bool>>,
}

pub fn evaluate_range(net: &LstmNetwork<f32>, dataset: &WindowedDataset, range: Range<usize>) -> Result<WindowEvaluation> {
    if range.is_empty() {
        return Err(Error::Empty("empty evaluation range"));
    }
    let idx: Vec<usize> = range.collect();
    let mut total_bce = 0.0;
    let mut correct = 0usize;
    let mut predictions = Vec::with_capacity(idx.len());
    let mut truths = Vec::with_capacity(idx.len());
    for chunk in idx.chunks(256) {
        let seq = dataset.time_major(chunk, dataset.window + 1);
        let probs = net.predict_last(&seq[..dataset.window])?;
        let target = &seq[dataset.window];
        total_bce += bce(probs.view(), target.view())? as f64 * chunk.len() as f64;
        for (p, t) in probs.outer_iter().zip(target.outer_iter()) {
            let pred: Vec<bool> = p.iter().map(|&x| x >= 0.5).collect();
            let truth: Vec<bool> = t.iter().map(|&x| x >= 0.5).collect();
            correct += pred.iter().zip(&truth).filter(|(a, b)| a == b).count();
            predictions.push(pred);
            truths.push(truth);
        }
    }
    let n = idx.len();
    Ok(WindowEvaluation {
        bce: total_bce / n as f64,
        accuracy: correct as f64 / (n * dataset.devices()) as f64,
        predictions,
        truths,
    })
}

/// Output of the predictor for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmPrediction {
    pub probs: Vec<f64>,
    pub active: Vec<bool>,
}

/// Sigmoid outputs for the slot after `window` (`W × D`), thresholded at 0.5 with ties active.
pub fn predict(net: &LstmNetwork<f32>, window: ArrayView2<f32>) -> Result<LstmPrediction> {
    Ok(predict_batch(net, &[window])?.remove(0))
}

pub fn predict_batch(net: &LstmNetwork<f32>, windows: &[ArrayView2<f32>]) -> Result<Vec<LstmPrediction>> {
    if windows.is_empty() {
        return Ok(Vec::new());
    }
    let steps = windows[0].nrows();
    for w in windows {
        check_dim("prediction window length", steps, w.nrows())?;
        check_dim("prediction window devices", net.inputs(), w.ncols())?;
    }
    let seq: Vec<Array2<f32>> = (0..steps)
        .map(|s| {
            let mut m = Array2::zeros((windows.len(), net.inputs()));
            for (b, w) in windows.iter().enumerate() {
                m.row_mut(b).assign(&w.row(s));
            }
            m
        })
        .collect();
    let probs = net.predict_last(&seq)?;
    Ok(probs
        .axis_iter(Axis(0))
        .map(|row| LstmPrediction {
            probs: row.iter().map(|&p| p as f64).collect(),
            active: row.iter().map(|&p| p >= 0.5).collect(),
        })
        .collect())
}

/// Counts for the "active" class; `tn` counts correctly predicted silence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// From the layout `[[tp, fn], [fp, tn]]` (rows are the true class, active first).
    pub fn from_rows(rows: [[u64; 2]; 2]) -> Self {
        Self {
            tp: rows[0][0],
            fn_: rows[0][1],
            fp: rows[1][0],
            tn: rows[1][1],
        }
    }

    pub fn accumulate(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when any of the ratios had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub confusion: ConfusionMatrix,
    pub active: ClassMetrics,
    pub silent: ClassMetrics,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_metrics(tp: u64, fp: u64, fn_: u64) -> ClassMetrics {
    let mut zero_division = false;
    let precision = ratio(tp, tp + fp, &mut zero_division);
    let recall = ratio(tp, tp + fn_, &mut zero_division);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        zero_division = true;
        0.0
    };
    ClassMetrics {
        precision,
        recall,
        f1,
        support: tp + fn_,
        zero_division,
    }
}

impl ClassificationReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let mut flag = false;
        let accuracy = ratio(confusion.tp + confusion.tn, confusion.total(), &mut flag);
        Self {
            confusion,
            active: class_metrics(confusion.tp, confusion.fp, confusion.fn_),
            silent: class_metrics(confusion.tn, confusion.fn_, confusion.fp),
            accuracy,
        }
    }
}

pub fn classification_report(preds: &[bool], truths: &[bool]) -> Result<ClassificationReport> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: truths.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(truths) {
        cm.accumulate(p, t);
    }
    Ok(ClassificationReport::from_confusion(cm))
}
