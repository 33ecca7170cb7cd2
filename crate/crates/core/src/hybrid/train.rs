//! Global training of the patch network on all patches of all samples.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Model, Stamp, Standardizer};
use super::{CoarseInput, PatchLayout, PatchPredictor};
use crate::data::Dataset;
use crate::exec::{chunk_ranges, Exec};
use crate::nn::{AdamState, Gradients, Mlp, Workspace};
use crate::rng::SplitMix64;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    /// Samples per optimiser step; `None` is full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub standardize: bool,
    pub coarse_input: CoarseInput,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![512; 4],
            epochs: 400,
            lr: 1e-3,
            lr_decay_factor: 0.5,
            lr_decay_every: 100,
            batch_size: None,
            seed: 0,
            standardize: false,
            coarse_input: CoarseInput::Patch,
            exec: Exec::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.hidden.contains(&0) {
            return bad(format!("hidden widths must be positive, got {:?}", self.hidden));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad(format!("decay factor must lie in (0, 1], got {}", self.lr_decay_factor));
        }
        if self.lr_decay_every == 0 {
            return bad("decay interval must be positive".into());
        }
        if self.batch_size == Some(0) {
            return bad("batch size must be positive".into());
        }
        Ok(())
    }

    /// Learning rate of the `update`-th optimiser epoch (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = (epoch.max(1) - 1) / self.lr_decay_every;
        self.lr * self.lr_decay_factor.powi(halvings as i32)
    }
}

/// Losses after `epoch` completed epochs (epoch 0 is the initial network).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<LossRecord>,
}

/// Every (sample, patch) pair flattened into dense input/target rows.
struct PatchRows {
    input_dim: usize,
    output_dim: usize,
    patches_per_sample: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl PatchRows {
    fn build(layout: &PatchLayout, d: &Dataset, exec: Exec) -> Result<Self> {
        let mesh = *layout.mesh();
        let per_sample = exec.map_indexed(d.len(), |i| -> Result<(Vec<f64>, Vec<f64>)> {
            let s = &d.samples[i];
            let src = d.source(i);
            let f = |x, y| src.eval(x, y);
            let mut inputs = Vec::with_capacity(mesh.patch_count() * layout.input_dim());
            for p in mesh.patches() {
                inputs.extend(layout.patch_input(&s.coarse, &f, p)?);
            }
            let targets = layout.patch_targets(&s.fine, &s.coarse)?.concat();
            Ok((inputs, targets))
        });
        let mut rows = Self {
            input_dim: layout.input_dim(),
            output_dim: layout.output_dim(),
            patches_per_sample: mesh.patch_count(),
            inputs: Vec::new(),
            targets: Vec::new(),
        };
        for r in per_sample {
            let (i, t) = r?;
            rows.inputs.extend(i);
            rows.targets.extend(t);
        }
        Ok(rows)
    }

    fn len(&self) -> usize {
        self.targets.len() / self.output_dim
    }

    fn input(&self, r: usize) -> &[f64] {
        &self.inputs[r * self.input_dim..(r + 1) * self.input_dim]
    }

    fn target(&self, r: usize) -> &[f64] {
        &self.targets[r * self.output_dim..(r + 1) * self.output_dim]
    }
}

/// Per-chunk scratch so that chunk partials can be reduced in a fixed order.
struct ChunkBuf {
    ws: Workspace,
    grads: Gradients,
    net_in: Vec<f64>,
    resid: Vec<f64>,
    loss: f64,
}

impl ChunkBuf {
    fn new(net: &Mlp) -> Self {
        Self {
            ws: net.workspace(),
            grads: Gradients::zeros_like(net),
            net_in: vec![0.0; net.input_dim()],
            resid: vec![0.0; net.output_dim()],
            loss: 0.0,
        }
    }
}

/// Chunk count depends only on the row count, never on the thread count.
fn chunk_count(rows: usize) -> usize {
    rows.div_ceil(64).clamp(1, 32)
}

struct Objective<'a> {
    net: &'a Mlp,
    standardizer: Option<&'a Standardizer>,
}

impl Objective<'_> {
    /// Squared residual of one row; when `backprop` is set, accumulates
    /// `scale * d/dθ` of it into `buf.grads`.
    fn row(&self, rows: &PatchRows, r: usize, buf: &mut ChunkBuf, backprop: Option<f64>) {
        let y = rows.input(r);
        match self.standardizer {
            Some(s) => s.apply_input(y, &mut buf.net_in),
            None => buf.net_in.copy_from_slice(y),
        }
        let out = self.net.forward_ws(&buf.net_in, &mut buf.ws);
        let t = rows.target(r);
        let mut sq = 0.0;
        for (k, (&o, &tk)) in out.iter().zip(t).enumerate() {
            let c = self.standardizer.map_or(1.0, |s| s.output_scale[k]);
            let e = c * o - tk;
            sq += e * e;
            buf.resid[k] = 2.0 * c * e;
        }
        buf.loss += sq;
        if let Some(scale) = backprop {
            buf.resid.iter_mut().for_each(|v| *v *= scale);
            let resid = std::mem::take(&mut buf.resid);
            self.net.backward_ws(&mut buf.ws, &resid, &mut buf.grads);
            buf.resid = resid;
        }
    }

    /// Mean squared patch residual over `selected` rows and, if `grad` is
    /// given, its gradient.
    fn evaluate(
        &self,
        rows: &PatchRows,
        selected: &[usize],
        bufs: &mut [ChunkBuf],
        grad: Option<&mut Gradients>,
        exec: Exec,
    ) -> f64 {
        let n = selected.len();
        let ranges = chunk_ranges(n, chunk_count(n));
        let want_grad = grad.is_some();
        let scale = 1.0 / n as f64;
        let bufs = &mut bufs[..ranges.len()];
        exec.for_each_mut(bufs, |c, buf| {
            buf.loss = 0.0;
            if want_grad {
                buf.grads.fill_zero();
            }
            for &r in &selected[ranges[c].clone()] {
                self.row(rows, r, buf, want_grad.then_some(scale));
            }
        });
        if let Some(g) = grad {
            g.fill_zero();
            for b in bufs.iter() {
                g.add_assign(&b.grads);
            }
        }
        bufs.iter().map(|b| b.loss).sum::<f64>() * scale
    }
}

/// `1/(N_T N_P) Σ_i Σ_P ||R_P(u_h - U_Hh) - N(y_P)||^2` over `dataset`.
pub fn loss<P: PatchPredictor + ?Sized>(
    predictor: &P,
    layout: &PatchLayout,
    dataset: &Dataset,
    exec: Exec,
) -> Result<f64> {
    layout.check_predictor(predictor)?;
    if dataset.n0 != layout.mesh().n0() || dataset.levels != layout.level() {
        return Err(Error::HierarchyMismatch(format!(
            "dataset (n0={}, levels={}) does not match the network layout",
            dataset.n0, dataset.levels
        )));
    }
    let mesh = *layout.mesh();
    let per_sample = exec.map_indexed(dataset.len(), |i| -> Result<f64> {
        let s = &dataset.samples[i];
        let src = dataset.source(i);
        let f = |x, y| src.eval(x, y);
        let targets = layout.patch_targets(&s.fine, &s.coarse)?;
        let mut acc = 0.0;
        for (pi, p) in mesh.patches().enumerate() {
            let y = layout.patch_input(&s.coarse, &f, p)?;
            let out = predictor.predict(pi, &y);
            acc += out
                .iter()
                .zip(&targets[pi])
                .map(|(o, t)| (t - o) * (t - o))
                .sum::<f64>();
        }
        Ok(acc)
    });
    let total: f64 = per_sample.into_iter().collect::<Result<Vec<_>>>()?.iter().sum();
    Ok(total / (dataset.len() * mesh.patch_count()) as f64)
}

fn check_finite(epoch: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Divergence { epoch, loss });
    }
    Ok(())
}

/// Trains one network over all patches of `train_set` with Adam and
/// step-wise learning-rate decay. `test_set`, when given, is only evaluated.
pub fn train(train_set: &Dataset, test_set: Option<&Dataset>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let stamp = Stamp {
        n0: train_set.n0,
        level: train_set.levels,
        coarse_input: cfg.coarse_input,
    };
    let layout = stamp.layout()?;
    if let Some(t) = test_set {
        if t.n0 != stamp.n0 || t.levels != stamp.level {
            return Err(Error::HierarchyMismatch(format!(
                "test set (n0={}, levels={}) differs from training set (n0={}, levels={})",
                t.n0, t.levels, stamp.n0, stamp.level
            )));
        }
    }
    let exec = cfg.exec;
    let rows = PatchRows::build(&layout, train_set, exec)?;
    let test_rows = test_set.map(|t| PatchRows::build(&layout, t, exec)).transpose()?;

    let mut dims = vec![layout.input_dim()];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(layout.output_dim());
    let mut net = Mlp::init(&dims, cfg.seed)?;
    let standardizer = cfg
        .standardize
        .then(|| Standardizer::fit(&rows.inputs, rows.input_dim, &rows.targets, rows.output_dim));

    let mut adam = AdamState::new(&net, cfg.lr);
    let mut grads = Gradients::zeros_like(&net);
    let mut bufs: Vec<ChunkBuf> = (0..32).map(|_| ChunkBuf::new(&net)).collect();
    let all_rows: Vec<usize> = (0..rows.len()).collect();
    let all_test: Vec<usize> = test_rows.as_ref().map_or(Vec::new(), |t| (0..t.len()).collect());
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    let mut shuffle_rng = SplitMix64::new(cfg.seed ^ 0x5DEE_CE66_D1CE_5EED);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let test_loss = |net: &Mlp, bufs: &mut [ChunkBuf]| -> Option<f64> {
        test_rows.as_ref().map(|t| {
            let obj = Objective {
                net,
                standardizer: standardizer.as_ref(),
            };
            obj.evaluate(t, &all_test, bufs, None, exec)
        })
    };

    let full_batch = cfg.batch_size.is_none_or(|b| b >= train_set.len());
    for epoch in 0..=cfg.epochs {
        adam.lr = cfg.lr_at(epoch + 1);
        if full_batch {
            // The gradient pass at the start of epoch e+1 also yields the
            // loss after epoch e.
            let obj = Objective {
                net: &net,
                standardizer: standardizer.as_ref(),
            };
            let want_grad = epoch < cfg.epochs;
            let train_loss = obj.evaluate(&rows, &all_rows, &mut bufs, want_grad.then_some(&mut grads), exec);
            check_finite(epoch, train_loss)?;
            let test_loss = test_loss(&net, &mut bufs);
            history.push(LossRecord {
                epoch,
                train_loss,
                test_loss,
            });
            if want_grad {
                adam.step(&mut net, &grads);
            }
            continue;
        }
        if epoch > 0 {
            let batch = cfg.batch_size.expect("mini-batch mode");
            shuffle_rng.shuffle(&mut order);
            for samples in order.chunks(batch) {
                let selected: Vec<usize> = samples
                    .iter()
                    .flat_map(|&s| s * rows.patches_per_sample..(s + 1) * rows.patches_per_sample)
                    .collect();
                let obj = Objective {
                    net: &net,
                    standardizer: standardizer.as_ref(),
                };
                obj.evaluate(&rows, &selected, &mut bufs, Some(&mut grads), exec);
                adam.step(&mut net, &grads);
            }
        }
        let obj = Objective {
            net: &net,
            standardizer: standardizer.as_ref(),
        };
        let train_loss = obj.evaluate(&rows, &all_rows, &mut bufs, None, exec);
        check_finite(epoch, train_loss)?;
        let test_loss = test_loss(&net, &mut bufs);
        history.push(LossRecord {
            epoch,
            train_loss,
            test_loss,
        });
    }

    let model = Model {
        net,
        stamp,
        standardizer,
    };
    Ok(TrainOutcome { model, history })
}

/// `epoch,train_loss,test_loss`; the test column is empty without a test set.
pub fn write_loss_csv(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut s = String::from("epoch,train_loss,test_loss\n");
    for r in history {
        let test = r.test_loss.map(|v| format!("{v:e}")).unwrap_or_default();
        writeln!(s, "{},{:e},{}", r.epoch, r.train_loss, test).unwrap();
    }
    std::fs::write(path, s).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, Family};
    use crate::mesh::MeshHierarchy;

    fn datasets() -> (Dataset, Dataset) {
        let m = MeshHierarchy::new(2, 1).unwrap();
        (
            generate_dataset(&m, 8, 1, Family::Verbatim, Exec::Sequential).unwrap(),
            generate_dataset(&m, 4, 2, Family::Verbatim, Exec::Sequential).unwrap(),
        )
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden: vec![16, 16],
            epochs: 30,
            lr: 1e-3,
            lr_decay_every: 10,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                epochs: 0,
                ..small_cfg()
            },
            TrainConfig {
                lr: -1.0,
                ..small_cfg()
            },
            TrainConfig {
                lr_decay_factor: 1.5,
                ..small_cfg()
            },
            TrainConfig {
                lr_decay_every: 0,
                ..small_cfg()
            },
            TrainConfig {
                batch_size: Some(0),
                ..small_cfg()
            },
            TrainConfig {
                hidden: vec![4, 0],
                ..small_cfg()
            },
        ] {
            assert!(bad.validate().is_err());
        }
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(1), 1e-3);
        assert_eq!(c.lr_at(100), 1e-3);
        assert_eq!(c.lr_at(101), 5e-4);
        assert_eq!(c.lr_at(301), 1.25e-4);
    }

    #[test]
    fn zero_network_loss_is_mean_target_energy() {
        let (train_set, _) = datasets();
        let lay = PatchLayout::new(train_set.mesh().unwrap(), CoarseInput::Patch);
        let zero = Mlp::zeros(&[lay.input_dim(), 5, lay.output_dim()]).unwrap();
        let got = loss(&zero, &lay, &train_set, Exec::Parallel).unwrap();
        // Independent accumulation directly from stored coefficients.
        let mesh = lay.mesh();
        let mut acc = 0.0;
        for s in &train_set.samples {
            let up = crate::transfer::interpolate_up(&s.coarse, 1).unwrap();
            for p in mesh.patches() {
                for k in mesh.patch_fine_nodes(p, 1).unwrap() {
                    acc += (s.fine.coeffs()[k] - up.coeffs()[k]).powi(2);
                }
            }
        }
        let expected = acc / (train_set.len() * mesh.patch_count()) as f64;
        assert!((got - expected).abs() <= 1e-15 * expected.max(1e-300) * 100.0);
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let (train_set, _) = datasets();
        let lay = PatchLayout::new(train_set.mesh().unwrap(), CoarseInput::Patch);
        let rows = PatchRows::build(&lay, &train_set, Exec::Sequential).unwrap();
        let selected: Vec<usize> = (0..rows.len()).collect();
        let net = Mlp::init(&[lay.input_dim(), 6, lay.output_dim()], 3).unwrap();
        let targets = &rows.targets;
        let inputs = &rows.inputs;
        let input_dim = lay.input_dim();
        let standardizer = Standardizer::fit(inputs, input_dim, targets, lay.output_dim());
        for st in [None, Some(&standardizer)] {
            let value = |n: &Mlp| {
                let mut bufs: Vec<_> = (0..32).map(|_| ChunkBuf::new(n)).collect();
                Objective {
                    net: n,
                    standardizer: st,
                }
                .evaluate(&rows, &selected, &mut bufs, None, Exec::Sequential)
            };
            let mut bufs: Vec<_> = (0..32).map(|_| ChunkBuf::new(&net)).collect();
            let mut g = Gradients::zeros_like(&net);
            Objective {
                net: &net,
                standardizer: st,
            }
            .evaluate(&rows, &selected, &mut bufs, Some(&mut g), Exec::Sequential);
            let mut probe = net.clone();
            for k in 0..net.weights()[1].len() {
                let x0 = probe.weights()[1][k];
                probe.weights_mut()[1][k] = x0 + 1e-6;
                let up = value(&probe);
                probe.weights_mut()[1][k] = x0 - 1e-6;
                let down = value(&probe);
                probe.weights_mut()[1][k] = x0;
                let fd = (up - down) / 2e-6;
                assert!(
                    (fd - g.weights[1][k]).abs() <= 1e-6 * fd.abs().max(1e-8),
                    "{k}: {fd} vs {}",
                    g.weights[1][k]
                );
            }
        }
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let (train_set, test_set) = datasets();
        let cfg = small_cfg();
        let a = train(&train_set, Some(&test_set), &cfg).unwrap();
        assert_eq!(a.history.len(), cfg.epochs + 1);
        let first = a.history[0].train_loss;
        let last = a.history.last().unwrap().train_loss;
        assert!(last < first);
        let b = train(
            &train_set,
            Some(&test_set),
            &TrainConfig {
                exec: Exec::Sequential,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        // reported loss agrees with the generic evaluator
        let lay = a.model.layout().unwrap();
        let direct = loss(&a.model, &lay, &train_set, Exec::Sequential).unwrap();
        assert!((direct - last).abs() <= 1e-12 * last);
    }

    #[test]
    fn mini_batches_and_standardization() {
        let (train_set, test_set) = datasets();
        let cfg = TrainConfig {
            batch_size: Some(3),
            standardize: true,
            ..small_cfg()
        };
        let out = train(&train_set, Some(&test_set), &cfg).unwrap();
        assert!(out.model.standardizer.is_some());
        assert!(out.history.last().unwrap().train_loss < out.history[0].train_loss);
        let again = train(&train_set, Some(&test_set), &cfg).unwrap();
        assert_eq!(out.history, again.history);
    }

    #[test]
    fn divergence_is_reported() {
        let (train_set, _) = datasets();
        let cfg = TrainConfig {
            lr: 1e300,
            ..small_cfg()
        };
        match train(&train_set, None, &cfg) {
            Err(Error::Divergence { epoch, .. }) => assert!(epoch >= 1),
            Ok(o) => panic!(
                "expected divergence, final loss {}",
                o.history.last().unwrap().train_loss
            ),
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
