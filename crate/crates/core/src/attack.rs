//! White-box evasion attacks: fast gradient sign, projected gradient
//! descent, Jacobian saliency maps, and the Carlini-Wagner L2 formulation,
//! with per-sample perturbation accounting.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use crate::data::ClipBox;
use crate::error::{Error, Result};
use crate::net::{self, MlpModel};

fn sign_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FgsmConfig {
    pub eps: f64,
    pub clip: ClipBox,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Feature indices the attack must not touch.
    #[serde(default)]
    pub immutable_features: Vec<usize>,
}

fn default_batch() -> usize {
    1000
}

impl FgsmConfig {
    pub fn new(eps: f64, clip: ClipBox) -> Self {
        FgsmConfig {
            eps,
            clip,
            batch_size: default_batch(),
            immutable_features: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::config("fgsm eps must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PgdConfig {
    pub eps: f64,
    pub eps_step: f64,
    pub max_iter: usize,
    pub clip: ClipBox,
    #[serde(default)]
    pub random_start: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub immutable_features: Vec<usize>,
}

impl PgdConfig {
    pub fn new(eps: f64, eps_step: f64, max_iter: usize, clip: ClipBox) -> Self {
        PgdConfig {
            eps,
            eps_step,
            max_iter,
            clip,
            random_start: false,
            seed: 0,
            immutable_features: Vec::new(),
        }
    }

    /// The reference configuration: 100 iterations at eps/10 per step.
    pub fn reference(eps: f64, clip: ClipBox) -> Self {
        PgdConfig::new(eps, eps / 10.0, 100, clip)
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::config("pgd eps must be finite and >= 0"));
        }
        if !(self.eps_step > 0.0) && self.eps > 0.0 {
            return Err(Error::config("pgd eps_step must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("pgd max_iter must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsmaConfig {
    /// Signed step applied to each selected feature.
    pub theta: f64,
    /// Maximum fraction of features modified per sample.
    pub gamma: f64,
    pub clip: ClipBox,
    #[serde(default)]
    pub immutable_features: Vec<usize>,
}

impl JsmaConfig {
    pub fn new(theta: f64, gamma: f64, clip: ClipBox) -> Self {
        JsmaConfig {
            theta,
            gamma,
            clip,
            immutable_features: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.theta == 0.0 || !self.theta.is_finite() {
            return Err(Error::config("jsma theta must be finite and non-zero"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("jsma gamma must be in (0,1]"));
        }
        Ok(())
    }

    pub fn feature_budget(&self, d: usize) -> usize {
        ((self.gamma * d as f64).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CwConfig {
    pub learning_rate: f64,
    pub binary_search_steps: usize,
    pub max_iter: usize,
    pub initial_const: f64,
    /// Confidence margin k.
    pub confidence: f64,
    pub max_halving: usize,
    pub max_doubling: usize,
    pub clip: ClipBox,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub immutable_features: Vec<usize>,
}

impl CwConfig {
    /// The reference configuration: lr 0.02, 10x10 search, c0 = 0.01,
    /// halving/doubling caps of 5.
    pub fn reference(clip: ClipBox) -> Self {
        CwConfig {
            learning_rate: 0.02,
            binary_search_steps: 10,
            max_iter: 10,
            initial_const: 0.01,
            confidence: 0.0,
            max_halving: 5,
            max_doubling: 5,
            clip,
            batch_size: default_batch(),
            immutable_features: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("cw learning rate must be > 0"));
        }
        if self.binary_search_steps == 0 || self.max_iter == 0 || self.max_halving == 0 || self.max_doubling == 0 {
            return Err(Error::config("cw iteration counts must be >= 1"));
        }
        if !(self.confidence >= 0.0) {
            return Err(Error::config("cw confidence must be >= 0"));
        }
        Ok(())
    }
}

/// Adversarial batch: perturbed rows, deltas, per-sample norms, and
/// success flags (model label != true label after the attack).
#[derive(Debug, Clone)]
pub struct AdvBatch {
    pub x_adv: Array2<f64>,
    pub delta: Array2<f64>,
    pub linf: Vec<f64>,
    pub l0: Vec<usize>,
    pub l2: Vec<f64>,
    pub success: Vec<bool>,
    pub attack: String,
    pub config_echo: serde_json::Value,
}

impl AdvBatch {
    fn assemble(
        model: &MlpModel,
        x: &ArrayView2<f64>,
        y: &ArrayView1<u8>,
        x_adv: Array2<f64>,
        attack: &str,
        config_echo: serde_json::Value,
    ) -> Result<AdvBatch> {
        let delta = &x_adv - x;
        let n = x.nrows();
        let mut linf = Vec::with_capacity(n);
        let mut l0 = Vec::with_capacity(n);
        let mut l2 = Vec::with_capacity(n);
        for row in delta.rows() {
            linf.push(row.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            l0.push(row.iter().filter(|v| **v != 0.0).count());
            l2.push(row.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        let pred = net::predict(model, &x_adv.view(), 0.5)?;
        let success = pred.iter().zip(y.iter()).map(|(p, t)| p != t).collect();
        Ok(AdvBatch {
            x_adv,
            delta,
            linf,
            l0,
            l2,
            success,
            attack: attack.to_string(),
            config_echo,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.x_adv.nrows()
    }
}

/// Aggregate perturbation summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationSummary {
    pub attack: String,
    pub mean_linf: f64,
    pub max_linf: f64,
    pub mean_l0: f64,
    pub max_l0: usize,
    pub mean_l2: f64,
    pub max_l2: f64,
    pub success_rate: f64,
}

pub fn perturbation_stats(batch: &AdvBatch) -> Result<PerturbationSummary> {
    let n = batch.n_samples();
    if n == 0 {
        return Err(Error::data("empty adversarial batch"));
    }
    let nf = n as f64;
    Ok(PerturbationSummary {
        attack: batch.attack.clone(),
        mean_linf: batch.linf.iter().sum::<f64>() / nf,
        max_linf: batch.linf.iter().cloned().fold(0.0, f64::max),
        mean_l0: batch.l0.iter().sum::<usize>() as f64 / nf,
        max_l0: batch.l0.iter().cloned().max().unwrap_or(0),
        mean_l2: batch.l2.iter().sum::<f64>() / nf,
        max_l2: batch.l2.iter().cloned().fold(0.0, f64::max),
        success_rate: batch.success.iter().filter(|s| **s).count() as f64 / nf,
    })
}

fn check_clip_dim(clip: &ClipBox, d: usize) -> Result<()> {
    if clip.dim() != d {
        return Err(Error::dimension(d, clip.dim(), "clip box"));
    }
    Ok(())
}

fn frozen_mask(d: usize, immutable: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; d];
    for &j in immutable {
        if j >= d {
            return Err(Error::config(format!("immutable feature index {j} out of range")));
        }
        mask[j] = true;
    }
    Ok(mask)
}

/// One signed-gradient step followed by projection into the clip box and
/// then the L-inf ball around the original sample. Shared by FGSM and PGD
/// so the single-step collapse is bitwise.
fn signed_step(
    x_cur: &mut Array2<f64>,
    x_orig: &ArrayView2<f64>,
    grad: &Array2<f64>,
    step: f64,
    eps: f64,
    clip: &ClipBox,
    frozen: &[bool],
) {
    for ((mut row, orig), g) in x_cur
        .rows_mut()
        .into_iter()
        .zip(x_orig.rows())
        .zip(grad.rows())
    {
        for j in 0..row.len() {
            if frozen[j] {
                row[j] = orig[j];
                continue;
            }
            let mut v = row[j] + step * sign_zero(g[j]);
            v = clip.clamp_value(j, v);
            v = v.max(orig[j] - eps).min(orig[j] + eps);
            row[j] = v;
        }
    }
}

/// Fast gradient sign method: one step of size eps along the sign of the
/// input-loss gradient, clipped to the box.
pub fn fgsm(
    model: &MlpModel,
    x: &ArrayView2<f64>,
    y: &ArrayView1<u8>,
    config: &FgsmConfig,
) -> Result<AdvBatch> {
    config.validate()?;
    check_clip_dim(&config.clip, x.ncols())?;
    let frozen = frozen_mask(x.ncols(), &config.immutable_features)?;
    let grad = net::input_gradient(model, x, y)?;
    let mut x_adv = x.to_owned();
    signed_step(&mut x_adv, x, &grad, config.eps, config.eps, &config.clip, &frozen);
    AdvBatch::assemble(model, x, y, x_adv, "fgsm", serde_json::to_value(config)?)
}

/// Projected gradient descent: iterated signed steps projected back into
/// the eps-ball intersected with the clip box.
pub fn pgd(
    model: &MlpModel,
    x: &ArrayView2<f64>,
    y: &ArrayView1<u8>,
    config: &PgdConfig,
) -> Result<AdvBatch> {
    config.validate()?;
    check_clip_dim(&config.clip, x.ncols())?;
    let frozen = frozen_mask(x.ncols(), &config.immutable_features)?;

    let mut x_adv = x.to_owned();
    if config.random_start && config.eps > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for (mut row, orig) in x_adv.rows_mut().into_iter().zip(x.rows()) {
            for j in 0..row.len() {
                if frozen[j] {
                    continue;
                }
                let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
                let v = config.clip.clamp_value(j, row[j] + u * config.eps);
                row[j] = v.max(orig[j] - config.eps).min(orig[j] + config.eps);
            }
        }
    }

    for _ in 0..config.max_iter {
        let grad = net::input_gradient(model, &x_adv.view(), y)?;
        signed_step(
            &mut x_adv,
            x,
            &grad,
            config.eps_step,
            config.eps,
            &config.clip,
            &frozen,
        );
        if config.eps == 0.0 {
            break;
        }
    }
    AdvBatch::assemble(model, x, y, x_adv, "pgd", serde_json::to_value(config)?)
}

/// Jacobian saliency map attack: greedily perturb the feature whose score
/// Jacobian most pushes the target class, bounded in L0 by gamma.
pub fn jsma(
    model: &MlpModel,
    x: &ArrayView2<f64>,
    y: &ArrayView1<u8>,
    config: &JsmaConfig,
) -> Result<AdvBatch> {
    config.validate()?;
    let d = x.ncols();
    check_clip_dim(&config.clip, d)?;
    let frozen = frozen_mask(d, &config.immutable_features)?;
    let budget = config.feature_budget(d);
    let step_sign = sign_zero(config.theta);

    let mut x_adv = x.to_owned();
    for (i, &yi) in y.iter().enumerate() {
        let target = 1 - yi;
        let mut changed: std::collections::BTreeSet<usize> = Default::default();
        let mut saturated = vec![false; d];
        // iteration cap: each feature can move at most the box span per
        // theta, so budget * span/|theta| bounds useful iterations
        let max_iters = 2 * budget
            * ((config
                .clip
                .hi
                .iter()
                .zip(&config.clip.lo)
                .map(|(h, l)| h - l)
                .fold(0.0f64, f64::max)
                / config.theta.abs())
            .ceil() as usize)
                .max(1);

        for _ in 0..max_iters {
            let row = x_adv.row(i).to_owned();
            let pred = net::predict(model, &row.view().insert_axis(Axis(0)), 0.5)?[0];
            if pred == target {
                break;
            }
            let jac = net::class_score_jacobian(model, &row.view())?;
            let target_row = jac.row(target as usize);
            let other_row = jac.row((1 - target) as usize);

            // saliency: moving feature j by theta must raise the target
            // score and lower the other one
            let mut best: Option<(usize, f64)> = None;
            for j in 0..d {
                if frozen[j] || saturated[j] {
                    continue;
                }
                if changed.len() >= budget && !changed.contains(&j) {
                    continue;
                }
                let dt = target_row[j] * step_sign;
                let dn = other_row[j] * step_sign;
                if dt <= 0.0 || dn >= 0.0 {
                    continue;
                }
                let score = dt * dn.abs();
                if best.map(|(_, s)| score > s).unwrap_or(true) {
                    best = Some((j, score));
                }
            }
            let Some((j, _)) = best else { break };

            let v = config.clip.clamp_value(j, x_adv[[i, j]] + config.theta);
            if v == config.clip.lo[j] || v == config.clip.hi[j] {
                saturated[j] = true;
            }
            if v != x[[i, j]] {
                changed.insert(j);
            }
            x_adv[[i, j]] = v;
        }
    }
    AdvBatch::assemble(model, x, y, x_adv, "jsma", serde_json::to_value(config)?)
}

fn atanh(v: f64) -> f64 {
    0.5 * ((1.0 + v) / (1.0 - v)).ln()
}

/// Carlini-Wagner L2: minimize ||delta||_2^2 + c * f(x') with the
/// box-respecting tanh change of variables, line-searched gradient
/// descent inside, and a binary search on c outside. Untargeted: f is the
/// margin of the true class over the other one, floored at -k.
pub fn cw_l2(
    model: &MlpModel,
    x: &ArrayView2<f64>,
    y: &ArrayView1<u8>,
    config: &CwConfig,
) -> Result<AdvBatch> {
    config.validate()?;
    let d = x.ncols();
    check_clip_dim(&config.clip, d)?;
    let frozen = frozen_mask(d, &config.immutable_features)?;

    let mid: Vec<f64> = config.clip.lo.iter().zip(&config.clip.hi).map(|(l, h)| (l + h) / 2.0).collect();
    let half: Vec<f64> = config.clip.lo.iter().zip(&config.clip.hi).map(|(l, h)| (h - l) / 2.0).collect();

    let to_x = |w: &Array1<f64>, orig: &ArrayView1<f64>| -> Array1<f64> {
        Array1::from_shape_fn(d, |j| {
            if frozen[j] || half[j] == 0.0 {
                orig[j]
            } else {
                mid[j] + half[j] * w[j].tanh()
            }
        })
    };

    let margin = |xp: &Array1<f64>, yi: u8| -> Result<f64> {
        let (_, scores) = net::forward(model, &xp.view().insert_axis(Axis(0)))?;
        Ok(scores.z(0, yi) - scores.z(0, 1 - yi))
    };

    let mut x_adv = x.to_owned();

    for (i, &yi) in y.iter().enumerate() {
        let orig = x.row(i);

        // already misclassified with margin beyond k: delta = 0 is optimal
        let clean_margin = margin(&orig.to_owned(), yi)?;
        if clean_margin <= -config.confidence {
            continue;
        }

        let w_init = Array1::from_shape_fn(d, |j| {
            if frozen[j] || half[j] == 0.0 {
                0.0
            } else {
                atanh(((orig[j] - mid[j]) / half[j]).clamp(-0.999999, 0.999999))
            }
        });

        let objective = |w: &Array1<f64>, c: f64| -> Result<(f64, f64, Array1<f64>)> {
            let xp = to_x(w, &orig);
            let l2sq: f64 = xp
                .iter()
                .zip(orig.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let m = margin(&xp, yi)?;
            let f = m.max(-config.confidence);
            Ok((l2sq + c * f, m, xp))
        };

        let grad = |w: &Array1<f64>, c: f64| -> Result<Array1<f64>> {
            let xp = to_x(w, &orig);
            let m = margin(&xp, yi)?;
            // d margin / d x' = +-2 * dz1/dx'
            let jac = net::class_score_jacobian(model, &xp.view())?;
            let dm_dx = if yi == 1 {
                jac.row(1).mapv(|v| 2.0 * v)
            } else {
                jac.row(1).mapv(|v| -2.0 * v)
            };
            let active = m > -config.confidence;
            Ok(Array1::from_shape_fn(d, |j| {
                if frozen[j] || half[j] == 0.0 {
                    return 0.0;
                }
                let dxdw = half[j] * (1.0 - w[j].tanh().powi(2));
                let d_l2 = 2.0 * (xp[j] - orig[j]);
                let d_f = if active { c * dm_dx[j] } else { 0.0 };
                (d_l2 + d_f) * dxdw
            }))
        };

        let mut best_l2 = f64::INFINITY;
        let mut best_x: Option<Array1<f64>> = None;

        let mut c = config.initial_const;
        let mut c_lo = 0.0f64;
        let mut c_hi = f64::INFINITY;

        for _ in 0..config.binary_search_steps {
            let mut w = w_init.clone();
            let mut lr = config.learning_rate;
            let (mut cur_obj, mut cur_m, mut cur_x) = objective(&w, c)?;
            let mut round_success = false;

            let consider = |m: f64,
                            xp: &Array1<f64>,
                            best_l2: &mut f64,
                            best_x: &mut Option<Array1<f64>>,
                            round_success: &mut bool| {
                if m < 0.0 {
                    *round_success = true;
                    let l2: f64 = xp
                        .iter()
                        .zip(orig.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    if l2 < *best_l2 {
                        *best_l2 = l2;
                        *best_x = Some(xp.clone());
                    }
                }
            };
            consider(cur_m, &cur_x, &mut best_l2, &mut best_x, &mut round_success);

            for _ in 0..config.max_iter {
                let g = grad(&w, c)?;
                // halve until the step stops increasing the objective
                let mut step_lr = lr;
                let mut accepted = false;
                for _ in 0..=config.max_halving {
                    let w_try = &w - &g.mapv(|v| step_lr * v);
                    let (obj_try, m_try, x_try) = objective(&w_try, c)?;
                    if obj_try < cur_obj {
                        // keep doubling while it still improves
                        let mut best_step = (step_lr, obj_try, m_try, x_try, w_try);
                        for _ in 0..config.max_doubling {
                            let bigger = best_step.0 * 2.0;
                            let w_big = &w - &g.mapv(|v| bigger * v);
                            let (obj_big, m_big, x_big) = objective(&w_big, c)?;
                            if obj_big < best_step.1 {
                                best_step = (bigger, obj_big, m_big, x_big, w_big);
                            } else {
                                break;
                            }
                        }
                        lr = best_step.0;
                        cur_obj = best_step.1;
                        cur_m = best_step.2;
                        cur_x = best_step.3;
                        w = best_step.4;
                        accepted = true;
                        break;
                    }
                    step_lr /= 2.0;
                }
                if !accepted {
                    break;
                }
                consider(cur_m, &cur_x, &mut best_l2, &mut best_x, &mut round_success);
            }

            if round_success {
                c_hi = c;
                c = (c_lo + c_hi) / 2.0;
            } else {
                c_lo = c;
                c = if c_hi.is_finite() { (c_lo + c_hi) / 2.0 } else { c * 2.0 };
            }
        }

        if let Some(bx) = best_x {
            x_adv.row_mut(i).assign(&bx);
        }
    }

    // assemble re-derives success flags from the model's verdict on the
    // final rows, so the flag is truthful by construction
    AdvBatch::assemble(model, x, y, x_adv, "cw_l2", serde_json::to_value(config)?)
}

/// Tagged union of the four attack configurations, used by defences, the
/// evaluation pipeline, the simulator, and the run-config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum AttackConfig {
    Fgsm(FgsmConfig),
    Pgd(PgdConfig),
    Jsma(JsmaConfig),
    Cw(CwConfig),
}

impl AttackConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AttackConfig::Fgsm(_) => "fgsm",
            AttackConfig::Pgd(_) => "pgd",
            AttackConfig::Jsma(_) => "jsma",
            AttackConfig::Cw(_) => "cw_l2",
        }
    }

    pub fn run(
        &self,
        model: &MlpModel,
        x: &ArrayView2<f64>,
        y: &ArrayView1<u8>,
    ) -> Result<AdvBatch> {
        let out = match self {
            AttackConfig::Fgsm(c) => fgsm(model, x, y, c),
            AttackConfig::Pgd(c) => pgd(model, x, y, c),
            AttackConfig::Jsma(c) => jsma(model, x, y, c),
            AttackConfig::Cw(c) => cw_l2(model, x, y, c),
        };
        out.map_err(|e| Error::Attack {
            attack: self.name().to_string(),
            source: Box::new(e),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::test_support::toy_t1;
    use crate::net::{init_model, Architecture};
    use ndarray::array;

    fn wide_clip(d: usize) -> ClipBox {
        ClipBox::global(-100.0, 100.0, d).unwrap()
    }

    #[test]
    fn fgsm_zero_eps_is_identity() {
        let m = toy_t1();
        let x = array![[0.5, 0.5], [-3.0, 7.0]];
        let y = array![0u8, 1];
        let cfg = FgsmConfig::new(0.0, wide_clip(2));
        let b = fgsm(&m, &x.view(), &y.view(), &cfg).unwrap();
        assert_eq!(b.x_adv, x);
        assert!(b.linf.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fgsm_toy_direction() {
        let m = toy_t1();
        let x = array![[0.5, 0.5]];
        let y = array![0u8];
        let cfg = FgsmConfig::new(0.1, wide_clip(2));
        let b = fgsm(&m, &x.view(), &y.view(), &cfg).unwrap();
        assert!((b.x_adv[[0, 0]] - 0.6).abs() < 1e-15);
        assert!((b.x_adv[[0, 1]] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn fgsm_budget_and_clip() {
        let arch = Architecture::new(4, vec![6], 0.0).unwrap();
        let m = init_model(&arch, 3).unwrap();
        let x = Array2::from_shape_fn((10, 4), |(i, j)| ((i * 4 + j) as f64 * 0.13).sin() * 0.9);
        let y = Array1::from_iter((0..10).map(|i| (i % 2) as u8));
        let clip = ClipBox::narrow_preset(4);
        let cfg = FgsmConfig::new(0.003, clip.clone());
        let b = fgsm(&m, &x.view(), &y.view(), &cfg).unwrap();
        for &v in &b.linf {
            assert!(v <= 0.003 + 1e-12);
        }
        for (i, row) in b.x_adv.rows().into_iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert!(v >= clip.lo[j] && v <= clip.hi[j], "sample {i} feature {j}");
            }
        }
    }

    #[test]
    fn fgsm_respects_immutable_features() {
        let m = toy_t1();
        let x = array![[0.5, 0.5]];
        let y = array![0u8];
        let mut cfg = FgsmConfig::new(0.1, wide_clip(2));
        cfg.immutable_features = vec![0];
        let b = fgsm(&m, &x.view(), &y.view(), &cfg).unwrap();
        assert_eq!(b.x_adv[[0, 0]], 0.5);
        assert!((b.x_adv[[0, 1]] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn pgd_zero_eps_is_identity() {
        let m = toy_t1();
        let x = array![[0.5, 0.5]];
        let y = array![0u8];
        let mut cfg = PgdConfig::new(0.0, 0.1, 50, wide_clip(2));
        cfg.random_start = true;
        let b = pgd(&m, &x.view(), &y.view(), &cfg).unwrap();
        assert_eq!(b.x_adv, x);
    }

    #[test]
    fn pgd_single_step_equals_fgsm() {
        let arch = Architecture::new(5, vec![7, 3], 0.0).unwrap();
        let m = init_model(&arch, 11).unwrap();
        let x = Array2::from_shape_fn((6, 5), |(i, j)| ((i + 2 * j) as f64 * 0.37).cos() * 0.8);
        let y = Array1::from_iter((0..6).map(|i| (i % 2) as u8));
        let clip = ClipBox::global(-0.9, 0.9, 5).unwrap();
        let f = fgsm(&m, &x.view(), &y.view(), &FgsmConfig::new(0.05, clip.clone())).unwrap();
        let p = pgd(&m, &x.view(), &y.view(), &PgdConfig::new(0.05, 0.05, 1, clip)).unwrap();
        assert_eq!(f.x_adv, p.x_adv);
    }

    #[test]
    fn pgd_budget_after_iterations() {
        let arch = Architecture::new(3, vec![5], 0.0).unwrap();
        let m = init_model(&arch, 2).unwrap();
        let x = Array2::from_shape_fn((8, 3), |(i, j)| ((i + j) as f64 * 0.21).sin() * 0.5);
        let y = Array1::from_iter((0..8).map(|i| (i % 2) as u8));
        let cfg = PgdConfig::reference(0.1, ClipBox::global(-1.0, 1.0, 3).unwrap());
        let b = pgd(&m, &x.view(), &y.view(), &cfg).unwrap();
        for &v in &b.linf {
            assert!(v <= 0.1 + 1e-12);
        }
    }

    #[test]
    fn pgd_random_start_is_deterministic() {
        let arch = Architecture::new(3, vec![4], 0.0).unwrap();
        let m = init_model(&arch, 5).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - j as f64) * 0.1);
        let y = array![0u8, 1, 0, 1];
        let mut cfg = PgdConfig::new(0.2, 0.05, 10, wide_clip(3));
        cfg.random_start = true;
        cfg.seed = 77;
        let a = pgd(&m, &x.view(), &y.view(), &cfg).unwrap();
        let b = pgd(&m, &x.view(), &y.view(), &cfg).unwrap();
        assert_eq!(a.x_adv, b.x_adv);
    }

    #[test]
    fn jsma_budget_arithmetic() {
        let clip = wide_clip(79);
        let cfg = JsmaConfig::new(0.03, 0.02, clip);
        assert_eq!(cfg.feature_budget(79), 2);
        let cfg2 = JsmaConfig::new(0.5, 0.01, wide_clip(10));
        assert_eq!(cfg2.feature_budget(10), 1);
    }

    #[test]
    fn jsma_toy_selects_strongest_feature() {
        let m = toy_t1();
        // z = 2*0.1 - 0.5 = -0.3 < 0, correctly classified as y=0;
        // target 1: dz1/dx = [2,-1], so feature 0 raises z1 fastest
        let x = array![[0.1, 0.5]];
        let y = array![0u8];
        let cfg = JsmaConfig::new(0.5, 0.5, wide_clip(2));
        let b = jsma(&m, &x.view(), &y.view(), &cfg).unwrap();
        // one theta step on feature 0 flips the sign: 2*0.6 - 0.5 = 0.7
        assert!((b.x_adv[[0, 0]] - 0.6).abs() < 1e-15);
        assert_eq!(b.x_adv[[0, 1]], 0.5);
        assert!(b.success[0]);
        assert_eq!(b.l0[0], 1);
    }

    #[test]
    fn jsma_l0_budget_holds() {
        let arch = Architecture::new(20, vec![10], 0.0).unwrap();
        let m = init_model(&arch, 7).unwrap();
        let x = Array2::from_shape_fn((6, 20), |(i, j)| ((i * j) as f64 * 0.17).sin());
        let y = Array1::from_iter((0..6).map(|i| (i % 2) as u8));
        let cfg = JsmaConfig::new(0.1, 0.2, ClipBox::global(-2.0, 2.0, 20).unwrap());
        let b = jsma(&m, &x.view(), &y.view(), &cfg).unwrap();
        let budget = cfg.feature_budget(20);
        for &l0 in &b.l0 {
            assert!(l0 <= budget);
        }
    }

    #[test]
    fn cw_already_misclassified_returns_input() {
        let m = toy_t1();
        // z = 2*0.5 - 0.5 = 0.5 > 0 so the model says 1; true label 0
        // means it is already wrong with margin beyond k=0
        let x = array![[0.5, 0.5]];
        let y = array![0u8];
        let cfg = CwConfig::reference(wide_clip(2));
        let b = cw_l2(&m, &x.view(), &y.view(), &cfg).unwrap();
        assert_eq!(b.x_adv, x);
        assert!(b.success[0]);
    }

    #[test]
    fn cw_toy_near_projection() {
        let m = toy_t1();
        // true label 1, predicted 1: must flip to 0. Closest boundary
        // point to [0.5,0.5] on 2x0 - x1 = 0 is [0.3, 0.6], L2 = sqrt(0.05)
        let x = array![[0.5, 0.5]];
        let y = array![1u8];
        let mut cfg = CwConfig::reference(ClipBox::global(-2.0, 2.0, 2).unwrap());
        cfg.max_iter = 50;
        let b = cw_l2(&m, &x.view(), &y.view(), &cfg).unwrap();
        assert!(b.success[0]);
        let ideal = 0.05f64.sqrt();
        assert!(
            b.l2[0] <= ideal * 1.10,
            "L2 {} exceeds 110% of projection {}",
            b.l2[0],
            ideal
        );
        // truthful flag
        let pred = net::predict(&m, &b.x_adv.view(), 0.5).unwrap();
        assert_eq!(pred[0], 0);
    }

    #[test]
    fn cw_failure_leaves_input_unchanged() {
        // tight clip box around the input makes any flip impossible
        let m = toy_t1();
        let x = array![[0.5, 0.5]];
        let y = array![1u8];
        let clip = ClipBox::new(vec![0.49, 0.49], vec![0.51, 0.51]).unwrap();
        let cfg = CwConfig::reference(clip);
        let b = cw_l2(&m, &x.view(), &y.view(), &cfg).unwrap();
        assert!(!b.success[0]);
        assert_eq!(b.x_adv, x);
    }

    #[test]
    fn perturbation_stats_hand_values() {
        let m = toy_t1();
        let x = array![[0.0, 0.0]];
        let y = array![0u8];
        let mut b = fgsm(&m, &x.view(), &y.view(), &FgsmConfig::new(0.0, wide_clip(2))).unwrap();
        b.delta = array![[0.3, -0.4]];
        b.linf = vec![0.4];
        b.l0 = vec![2];
        b.l2 = vec![0.5];
        let s = perturbation_stats(&b).unwrap();
        assert_eq!(s.max_linf, 0.4);
        assert_eq!(s.mean_l0, 2.0);
        assert_eq!(s.mean_l2, 0.5);
    }

    #[test]
    fn loss_ascends_under_fgsm_on_smooth_toy() {
        let m = toy_t1();
        let x = array![[0.5, 0.5], [-0.2, 0.3]];
        let y = array![0u8, 1];
        let b = fgsm(&m, &x.view(), &y.view(), &FgsmConfig::new(0.05, wide_clip(2))).unwrap();
        for i in 0..2 {
            let before = net::loss(
                &m,
                &x.row(i).insert_axis(Axis(0)),
                &array![y[i]].view(),
            )
            .unwrap();
            let after = net::loss(
                &m,
                &b.x_adv.row(i).insert_axis(Axis(0)),
                &array![y[i]].view(),
            )
            .unwrap();
            assert!(after >= before - 1e-9);
        }
    }
}
