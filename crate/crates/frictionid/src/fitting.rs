//! Gradient-based identification of the static friction models.
//!
//! Minimizes the mean squared error between model prediction and the
//! reconstructed friction torque over (joint velocity, torque) pairs with
//! bias-corrected Adam. Parameters are optimized through a softplus
//! reparameterization (`k_s = k_c + softplus(delta)` for the Stribeck level),
//! so every intermediate iterate satisfies the model invariants.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::csvio;
use crate::error::{Error, Result};
use crate::friction::{CvParams, FrictionModel, ScvParams};
use crate::sigproc::Dataset;

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// Optimizer settings. `batch_size = None` means full batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        AdamSettings {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 10_000,
            batch_size: None,
            seed: 0,
        }
    }
}

impl AdamSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be > 0"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b.is_finite() && (0.0..1.0).contains(&b)) {
                return Err(Error::config(name, "must lie in [0, 1)"));
            }
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be >= 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// First and second moment accumulators plus the step counter.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: usize,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    settings: &AdamSettings,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let bc1 = 1.0 - settings.beta1.powi(state.t as i32);
    let bc2 = 1.0 - settings.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = settings.beta1 * state.m[i] + (1.0 - settings.beta1) * g;
        state.v[i] = settings.beta2 * state.v[i] + (1.0 - settings.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= settings.learning_rate * m_hat / (v_hat.sqrt() + settings.epsilon);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Reparameterization
// ---------------------------------------------------------------------------

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    let y = y.max(1e-9);
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Which static model to identify.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cv,
    Scv,
}

impl ModelKind {
    fn dim(self) -> usize {
        match self {
            ModelKind::Cv => 3,
            ModelKind::Scv => 6,
        }
    }

    /// Raw coordinates: CV [x_ka, x_kc, x_kv]; SCV appends [delta, x_vs, x_alpha]
    /// with k_s = k_c + softplus(delta).
    fn to_raw(self, model: &FrictionModel) -> Vec<f64> {
        match (self, model) {
            (ModelKind::Cv, FrictionModel::Cv(p)) => vec![
                softplus_inv(p.k_a),
                softplus_inv(p.k_c),
                softplus_inv(p.k_v),
            ],
            (ModelKind::Scv, FrictionModel::Scv(p)) => vec![
                softplus_inv(p.k_a),
                softplus_inv(p.k_c),
                softplus_inv(p.k_v),
                softplus_inv(p.k_s - p.k_c),
                softplus_inv(p.v_s),
                softplus_inv(p.alpha),
            ],
            _ => unreachable!("init model kind checked by caller"),
        }
    }

    fn from_raw(self, raw: &[f64]) -> FrictionModel {
        match self {
            ModelKind::Cv => FrictionModel::Cv(CvParams::new(
                softplus(raw[0]),
                softplus(raw[1]),
                softplus(raw[2]),
            )),
            ModelKind::Scv => {
                let k_c = softplus(raw[1]);
                FrictionModel::Scv(ScvParams::new(
                    softplus(raw[0]),
                    k_c,
                    softplus(raw[2]),
                    k_c + softplus(raw[3]),
                    softplus(raw[4]),
                    softplus(raw[5]),
                ))
            }
        }
    }

    /// Chains the model-space gradient through the reparameterization.
    fn chain_grad(self, raw: &[f64], model_grad: &[f64], out: &mut [f64]) {
        match self {
            ModelKind::Cv => {
                for i in 0..3 {
                    out[i] = model_grad[i] * sigmoid(raw[i]);
                }
            }
            ModelKind::Scv => {
                // model_grad order: [k_a, k_c, k_v, k_s, v_s, alpha].
                out[0] = model_grad[0] * sigmoid(raw[0]);
                // k_c feeds both k_c and k_s.
                out[1] = (model_grad[1] + model_grad[3]) * sigmoid(raw[1]);
                out[2] = model_grad[2] * sigmoid(raw[2]);
                out[3] = model_grad[3] * sigmoid(raw[3]);
                out[4] = model_grad[4] * sigmoid(raw[4]);
                out[5] = model_grad[5] * sigmoid(raw[5]);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

/// Outcome of one identification run: best-epoch parameters, their MSE, and
/// the full per-epoch loss curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FrictionModel,
    /// MSE of the returned parameters over the whole dataset (N²·m²).
    pub final_mse: f64,
    /// Full-dataset MSE after each epoch; length = epochs.
    pub loss_curve: Vec<f64>,
    pub settings: AdamSettings,
    /// Content hash of the data the fit was computed from.
    pub dataset_hash: String,
}

impl FitResult {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<FitResult> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write_loss_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        let epochs: Vec<f64> = (0..self.loss_curve.len()).map(|k| k as f64).collect();
        csvio::write_columns(path, comments, "epoch,mse", &[&epochs, &self.loss_curve])
    }
}

/// Heuristic starting point from robust statistics of the data: Coulomb level
/// from the low-speed torque median, viscous slope from the high-speed tail.
pub fn init_from_data(kind: ModelKind, v: &[f64], tau: &[f64]) -> FrictionModel {
    let v_max = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-6);
    let mut low: Vec<f64> = v
        .iter()
        .zip(tau)
        .filter(|(vi, _)| vi.abs() < 0.1 * v_max)
        .map(|(_, t)| t.abs())
        .collect();
    let mut high: Vec<(f64, f64)> = v
        .iter()
        .zip(tau)
        .filter(|(vi, _)| vi.abs() > 0.5 * v_max)
        .map(|(vi, t)| (vi.abs(), t.abs()))
        .collect();

    let median = |xs: &mut Vec<f64>| -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs[xs.len() / 2]
    };
    let k_c = median(&mut low).max(1e-3);
    let k_v = if high.is_empty() {
        0.1
    } else {
        high.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mid = high.len() / 2;
        let (v_h, t_h) = high[mid];
        ((t_h - k_c) / v_h).max(1e-3)
    };
    match kind {
        ModelKind::Cv => FrictionModel::Cv(CvParams::new(10.0, k_c, k_v)),
        ModelKind::Scv => {
            FrictionModel::Scv(ScvParams::new(10.0, k_c, k_v, 1.5 * k_c, 0.1, 1.0))
        }
    }
}

fn mse_and_grad(
    kind: ModelKind,
    raw: &[f64],
    v: &[f64],
    tau: &[f64],
    idx: &[usize],
    grad_out: &mut [f64],
) -> f64 {
    let model = kind.from_raw(raw);
    let n = idx.len() as f64;
    let mut loss = 0.0;
    let mut model_grad = [0.0; 6];
    let dim = kind.dim();
    for g in model_grad.iter_mut().take(dim) {
        *g = 0.0;
    }
    for &k in idx {
        let (pred, grads): (f64, Vec<f64>) = match &model {
            FrictionModel::Cv(p) => (p.eval(v[k]), p.grad(v[k]).to_vec()),
            FrictionModel::Scv(p) => (p.eval(v[k]), p.grad(v[k]).to_vec()),
        };
        let e = pred - tau[k];
        loss += e * e;
        for i in 0..dim {
            model_grad[i] += 2.0 * e * grads[i] / n;
        }
    }
    kind.chain_grad(raw, &model_grad[..dim], grad_out);
    loss / n
}

fn mse_only(kind: ModelKind, raw: &[f64], v: &[f64], tau: &[f64]) -> f64 {
    let model = kind.from_raw(raw);
    let mut loss = 0.0;
    for k in 0..v.len() {
        let pred = model.eval(v[k]);
        let e = pred - tau[k];
        loss += e * e;
    }
    loss / v.len() as f64
}

/// Fits a static model to raw (velocity, torque) samples. `dataset_hash` ties
/// the result to its data; `init` overrides the heuristic starting point.
pub fn fit_samples(
    kind: ModelKind,
    v: &[f64],
    tau: &[f64],
    settings: &AdamSettings,
    init: Option<FrictionModel>,
    dataset_hash: String,
) -> Result<FitResult> {
    settings.validate()?;
    if v.is_empty() || v.len() != tau.len() {
        return Err(Error::invalid(format!(
            "need matching nonempty velocity/torque columns, got {} / {}",
            v.len(),
            tau.len()
        )));
    }
    let init = init.unwrap_or_else(|| init_from_data(kind, v, tau));
    init.validate()?;
    let matches = matches!(
        (kind, &init),
        (ModelKind::Cv, FrictionModel::Cv(_)) | (ModelKind::Scv, FrictionModel::Scv(_))
    );
    if !matches {
        return Err(Error::invalid("init model kind does not match fit kind"));
    }

    let mut raw = kind.to_raw(&init);
    let mut grad = vec![0.0; raw.len()];
    let mut adam = AdamState::new(raw.len());
    let mut rng = ChaCha12Rng::seed_from_u64(settings.seed);
    let mut order: Vec<usize> = (0..v.len()).collect();
    let batch = settings.batch_size.unwrap_or(v.len()).min(v.len());

    let mut loss_curve = Vec::with_capacity(settings.epochs);
    let mut best_raw = raw.clone();
    let mut best_mse = f64::INFINITY;

    for epoch in 0..settings.epochs {
        if batch < v.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let _ = mse_and_grad(kind, &raw, v, tau, chunk, &mut grad);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    message: "non-finite gradient; lower the learning rate".into(),
                });
            }
            adam_step(&mut raw, &grad, &mut adam, settings)?;
        }
        let epoch_mse = mse_only(kind, &raw, v, tau);
        if !epoch_mse.is_finite() {
            return Err(Error::Diverged {
                epoch,
                message: "non-finite loss; lower the learning rate".into(),
            });
        }
        loss_curve.push(epoch_mse);
        if epoch_mse < best_mse {
            best_mse = epoch_mse;
            best_raw.copy_from_slice(&raw);
        }
    }

    Ok(FitResult {
        params: kind.from_raw(&best_raw),
        final_mse: best_mse,
        loss_curve,
        settings: *settings,
        dataset_hash,
    })
}

/// Fits against the Kalman joint velocity and reconstructed friction torque
/// of a preprocessed dataset.
pub fn fit_static_model(
    kind: ModelKind,
    dataset: &Dataset,
    settings: &AdamSettings,
    init: Option<FrictionModel>,
) -> Result<FitResult> {
    fit_samples(
        kind,
        &dataset.s_dot,
        &dataset.tau_f_true,
        settings,
        init,
        dataset.content_hash(),
    )
}

/// Fits one model across several records (for example a whole excitation
/// grid) by concatenating their samples.
pub fn fit_static_model_segments(
    kind: ModelKind,
    datasets: &[Dataset],
    settings: &AdamSettings,
    init: Option<FrictionModel>,
) -> Result<FitResult> {
    if datasets.is_empty() {
        return Err(Error::invalid("no datasets given"));
    }
    let mut v = Vec::new();
    let mut tau = Vec::new();
    let mut hasher = Sha256::new();
    for ds in datasets {
        v.extend_from_slice(&ds.s_dot);
        tau.extend_from_slice(&ds.tau_f_true);
        hasher.update(ds.content_hash().as_bytes());
    }
    let digest = hasher.finalize();
    let hash = digest.iter().map(|b| format!("{b:02x}")).collect();
    fit_samples(kind, &v, &tau, settings, init, hash)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, &AdamSettings::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate_in_sign_direction() {
        let settings = AdamSettings::default();
        let mut p = vec![0.5, 0.5];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[3.7, -0.02], &mut st, &settings).unwrap();
        // First step: m_hat = g, v_hat = g², so the move is lr·sign(g).
        assert!((p[0] - (0.5 - settings.learning_rate)).abs() < 1e-6);
        assert!((p[1] - (0.5 + settings.learning_rate)).abs() < 1e-6);
    }

    #[test]
    fn adam_is_deterministic_and_checks_dimensions() {
        let settings = AdamSettings::default();
        let mut p1 = vec![0.1, 0.2, 0.3];
        let mut s1 = AdamState::new(3);
        let mut p2 = p1.clone();
        let mut s2 = AdamState::new(3);
        for _ in 0..5 {
            adam_step(&mut p1, &[0.4, -0.1, 0.9], &mut s1, &settings).unwrap();
            adam_step(&mut p2, &[0.4, -0.1, 0.9], &mut s2, &settings).unwrap();
        }
        assert_eq!(p1, p2);
        assert!(adam_step(&mut p1, &[1.0], &mut s1, &settings).is_err());
    }

    #[test]
    fn cv_fit_recovers_generating_parameters() {
        let truth = CvParams::new(10.53, 1.2, 0.24);
        let v = linspace(-3.0, 3.0, 1000);
        let tau: Vec<f64> = v.iter().map(|&x| truth.eval(x)).collect();
        let settings = AdamSettings::default();
        let fit = fit_samples(ModelKind::Cv, &v, &tau, &settings, None, "test".into()).unwrap();
        let FrictionModel::Cv(p) = fit.params else {
            panic!("wrong kind")
        };
        assert!((p.k_c - 1.2).abs() / 1.2 < 0.02, "k_c {}", p.k_c);
        assert!((p.k_v - 0.24).abs() / 0.24 < 0.02, "k_v {}", p.k_v);
        assert!((p.k_a - 10.53).abs() / 10.53 < 0.2, "k_a {}", p.k_a);
        assert_eq!(fit.loss_curve.len(), settings.epochs);
    }

    #[test]
    fn scv_fit_recovers_generating_parameters() {
        // Identification data must dwell at low speed (as sine excitation
        // does) for the Stribeck shape to dominate the loss; a cubic warp
        // puts half the samples inside |v| < 0.375 rad/s.
        let truth = ScvParams::new(2.78, 1.0005, 0.29, 6.0, 0.13, 0.6);
        let v: Vec<f64> = linspace(-1.0, 1.0, 1500)
            .iter()
            .map(|u| 3.0 * u.powi(3))
            .collect();
        let tau: Vec<f64> = v.iter().map(|&x| truth.eval(x)).collect();
        let fit = fit_samples(
            ModelKind::Scv,
            &v,
            &tau,
            &AdamSettings::default(),
            None,
            "test".into(),
        )
        .unwrap();
        let var = {
            let mean = tau.iter().sum::<f64>() / tau.len() as f64;
            tau.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / tau.len() as f64
        };
        assert!(fit.final_mse < 1e-4, "mse {}", fit.final_mse);
        assert!(fit.final_mse < 0.01 * var, "mse {} vs var {var}", fit.final_mse);
        let FrictionModel::Scv(p) = fit.params else {
            panic!("wrong kind")
        };
        assert!((p.k_c - 1.0005).abs() / 1.0005 < 0.02, "k_c {}", p.k_c);
        assert!((p.k_v - 0.29).abs() / 0.29 < 0.02, "k_v {}", p.k_v);
        assert!((p.k_s - 6.0).abs() / 6.0 < 0.05, "k_s {}", p.k_s);
    }

    #[test]
    fn loss_curve_moving_minimum_is_nonincreasing() {
        let truth = CvParams::new(10.53, 1.2, 0.24);
        let v = linspace(-2.0, 2.0, 400);
        let tau: Vec<f64> = v.iter().map(|&x| truth.eval(x)).collect();
        let settings = AdamSettings {
            epochs: 2000,
            batch_size: Some(64),
            ..AdamSettings::default()
        };
        let fit = fit_samples(ModelKind::Cv, &v, &tau, &settings, None, "test".into()).unwrap();
        let window = 100;
        let moving_min: Vec<f64> = (0..fit.loss_curve.len() - window)
            .map(|k| fit.loss_curve[k..k + window].iter().cloned().fold(f64::MAX, f64::min))
            .collect();
        // Slack covers floating-point noise at the convergence floor.
        let slack = 1e-9 * fit.loss_curve[0];
        for k in 1..moving_min.len() {
            assert!(
                moving_min[k] <= moving_min[k - 1] + slack,
                "moving min rises at {k}: {} -> {}",
                moving_min[k - 1],
                moving_min[k]
            );
        }
    }

    #[test]
    fn degenerate_all_zero_data_stays_finite() {
        let v = vec![0.0; 64];
        let tau = vec![0.0; 64];
        let settings = AdamSettings {
            epochs: 50,
            ..AdamSettings::default()
        };
        let fit = fit_samples(ModelKind::Scv, &v, &tau, &settings, None, "test".into()).unwrap();
        assert!(fit.final_mse.abs() < 1e-12);
        fit.params.validate().unwrap();
    }

    #[test]
    fn overflowing_loss_reports_divergence() {
        // Targets large enough that the squared error overflows; the fit
        // must abort with a diagnostic instead of returning garbage.
        let v = linspace(-3.0, 3.0, 100);
        let tau = vec![1e200; 100];
        let settings = AdamSettings {
            epochs: 50,
            ..AdamSettings::default()
        };
        let err = fit_samples(ModelKind::Cv, &v, &tau, &settings, None, "test".into());
        assert!(matches!(err, Err(Error::Diverged { .. })), "{err:?}");
    }

    #[test]
    fn minibatch_fit_is_seed_deterministic() {
        let truth = CvParams::new(10.53, 1.2, 0.24);
        let v = linspace(-3.0, 3.0, 500);
        let tau: Vec<f64> = v.iter().map(|&x| truth.eval(x)).collect();
        let settings = AdamSettings {
            epochs: 500,
            batch_size: Some(128),
            seed: 9,
            ..AdamSettings::default()
        };
        let a = fit_samples(ModelKind::Cv, &v, &tau, &settings, None, "t".into()).unwrap();
        let b = fit_samples(ModelKind::Cv, &v, &tau, &settings, None, "t".into()).unwrap();
        assert_eq!(a.final_mse, b.final_mse);
        assert_eq!(a.params, b.params);
        let FrictionModel::Cv(p) = a.params else {
            panic!()
        };
        assert!((p.k_c - 1.2).abs() / 1.2 < 0.05, "k_c {}", p.k_c);
    }

    #[test]
    fn fit_result_round_trips_through_json_and_loss_csv() {
        let fit = FitResult {
            params: FrictionModel::Cv(CvParams::new(10.0, 1.0, 0.2)),
            final_mse: 1.25e-5,
            loss_curve: vec![1.0, 0.5, 1.25e-5],
            settings: AdamSettings::default(),
            dataset_hash: "ab12".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let jpath = dir.path().join("fit.json");
        fit.write_json(&jpath).unwrap();
        let back = FitResult::read_json(&jpath).unwrap();
        assert_eq!(back.params, fit.params);
        assert_eq!(back.final_mse, fit.final_mse);
        assert_eq!(back.loss_curve, fit.loss_curve);
        fit.write_loss_csv(&dir.path().join("loss.csv"), &[]).unwrap();
    }

    proptest! {
        #[test]
        fn heuristic_init_is_always_valid(
            seed in 0u64..1000,
            scale in 0.01f64..100.0,
        ) {
            use rand::Rng;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..50).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let tau: Vec<f64> = v.iter().map(|x| scale * x + rng.gen_range(-0.1..0.1)).collect();
            init_from_data(ModelKind::Cv, &v, &tau).validate().unwrap();
            init_from_data(ModelKind::Scv, &v, &tau).validate().unwrap();
        }
    }
}
