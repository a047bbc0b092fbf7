use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, Dataset, Gradients, Network};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    SgdMomentum { mu: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Upper bound on epochs actually run, in simulator ticks (one epoch per
    /// tick-slice unit).
    #[serde(default)]
    pub time_budget: Option<u32>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 16,
            learning_rate: 0.05,
            optimizer: Optimizer::SgdMomentum { mu: 0.9 },
            seed: 0,
            time_budget: None,
        }
    }
}

impl TrainConfig {
    /// Epochs that will actually run.
    pub fn effective_epochs(&self) -> u32 {
        match self.time_budget {
            Some(b) => self.epochs.min(b),
            None => self.epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("numerical divergence in epoch {epoch}")]
    NumericalDivergence { epoch: u32 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset does not match the network: {0}")]
    DatasetMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs_run: u32,
    pub steps: u64,
    /// Mean cross-entropy over the last epoch; `None` if no epoch ran.
    pub final_loss: Option<f64>,
}

/// Resumable mini-batch trainer. The simulator advances it a few epochs per
/// tick; `train` runs it to completion.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    rng: ChaCha8Rng,
    velocity: Option<Gradients>,
    epochs_run: u32,
    steps: u64,
    final_loss: Option<f64>,
}

impl Trainer {
    pub fn new(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<Trainer, TrainError> {
        if !(cfg.learning_rate > 0.0) || !cfg.learning_rate.is_finite() {
            return Err(TrainError::InvalidConfig("learning_rate must be positive".into()));
        }
        if cfg.batch_size == 0 || cfg.batch_size > data.len() {
            return Err(TrainError::InvalidConfig(format!(
                "batch_size {} not in 1..={}",
                cfg.batch_size,
                data.len()
            )));
        }
        if let Optimizer::SgdMomentum { mu } = cfg.optimizer {
            if !(0.0..1.0).contains(&mu) {
                return Err(TrainError::InvalidConfig("momentum must be in [0, 1)".into()));
            }
        }
        if data.input_width != net.input_width() {
            return Err(TrainError::DatasetMismatch(format!(
                "{} features, network takes {}",
                data.input_width,
                net.input_width()
            )));
        }
        if let Some(s) = data.rows.iter().find(|s| s.label >= net.num_classes()) {
            return Err(TrainError::DatasetMismatch(format!("label {} out of range", s.label)));
        }
        let velocity = match cfg.optimizer {
            Optimizer::Sgd => None,
            Optimizer::SgdMomentum { .. } => Some(Gradients::zeros_like(net)),
        };
        Ok(Trainer {
            cfg: cfg.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            velocity,
            epochs_run: 0,
            steps: 0,
            final_loss: None,
        })
    }

    pub fn is_done(&self) -> bool {
        self.epochs_run >= self.cfg.effective_epochs()
    }

    pub fn epochs_run(&self) -> u32 {
        self.epochs_run
    }

    pub fn report(&self) -> TrainReport {
        TrainReport {
            epochs_run: self.epochs_run,
            steps: self.steps,
            final_loss: self.final_loss,
        }
    }

    /// Runs up to `max_epochs` more epochs. Returns the number run.
    pub fn run_epochs(&mut self, net: &mut Network, data: &Dataset, max_epochs: u32) -> Result<u32, TrainError> {
        let mut ran = 0;
        let mut ws = net.workspace();
        let mut grads = Gradients::zeros_like(net);
        let mut order: Vec<usize> = (0..data.len()).collect();
        while ran < max_epochs && !self.is_done() {
            order.sort_unstable();
            shuffle(&mut order, &mut self.rng);
            let mut loss_sum = 0.0;
            for batch in order.chunks(self.cfg.batch_size) {
                grads.clear();
                for &i in batch {
                    let s = &data.rows[i];
                    net.forward_into(&s.features, &mut ws);
                    loss_sum += net.loss_of(&ws, s.label);
                    net.backward_into(s.label, &mut ws, &mut grads);
                }
                let scale = self.cfg.learning_rate / batch.len() as f64;
                if !self.apply(net, &grads, scale) {
                    return Err(TrainError::NumericalDivergence {
                        epoch: self.epochs_run,
                    });
                }
                self.steps += 1;
            }
            let loss = loss_sum / data.len() as f64;
            if !loss.is_finite() {
                return Err(TrainError::NumericalDivergence {
                    epoch: self.epochs_run,
                });
            }
            self.final_loss = Some(loss);
            self.epochs_run += 1;
            ran += 1;
        }
        Ok(ran)
    }

    /// One update step; false if any parameter became non-finite.
    fn apply(&mut self, net: &mut Network, grads: &Gradients, scale: f64) -> bool {
        let mut finite = true;
        match (&mut self.velocity, self.cfg.optimizer) {
            (Some(v), Optimizer::SgdMomentum { mu }) => {
                for (l, layer) in net.layers.iter_mut().enumerate() {
                    for (p, (vel, g)) in layer
                        .weights
                        .iter_mut()
                        .zip(v.weights[l].iter_mut().zip(&grads.weights[l]))
                        .chain(layer.bias.iter_mut().zip(v.bias[l].iter_mut().zip(&grads.bias[l])))
                    {
                        *vel = mu * *vel - scale * g;
                        *p += *vel;
                        finite &= p.is_finite();
                    }
                }
            }
            _ => {
                for (l, layer) in net.layers.iter_mut().enumerate() {
                    for (p, g) in layer
                        .weights
                        .iter_mut()
                        .zip(&grads.weights[l])
                        .chain(layer.bias.iter_mut().zip(&grads.bias[l]))
                    {
                        *p -= scale * g;
                        finite &= p.is_finite();
                    }
                }
            }
        }
        finite
    }
}

/// Fisher-Yates with full u64 draws reduced by `gen_range`.
fn shuffle(v: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i as u64) as usize;
        v.swap(i, j);
    }
}

/// Trains a copy of `net` for the configured number of epochs.
pub fn train(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<(Network, TrainReport), TrainError> {
    let mut out = net.clone();
    let mut trainer = Trainer::new(&out, data, cfg)?;
    trainer.run_epochs(&mut out, data, u32::MAX)?;
    Ok((out, trainer.report()))
}

/// Fraction of rows whose argmax prediction equals the label.
///
/// # Panics
/// If `data` is empty or its width differs from the network's.
pub fn evaluate(net: &Network, data: &Dataset) -> f64 {
    assert!(!data.is_empty(), "evaluation set is empty");
    assert_eq!(data.input_width, net.input_width(), "feature width mismatch");
    let mut ws = net.workspace();
    let last = net.layers().len();
    let correct = data
        .rows
        .iter()
        .filter(|s| {
            net.forward_into(&s.features, &mut ws);
            argmax(&ws.acts[last]) == s.label
        })
        .count();
    correct as f64 / data.len() as f64
}
