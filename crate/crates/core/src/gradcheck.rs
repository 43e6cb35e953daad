//! Central finite-difference checks of the analytic gradients.
//!
//! The reference side only ever evaluates losses; it never calls a
//! backward routine.

use crate::error::Result;
use crate::head::{CosineReduction, Head, HeadMode, LossKind};
use crate::net::Mlp;
use crate::numerics::{Matrix, Rng};
use crate::projection::random_orthonormal;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-6;

/// Magnitude below which errors are measured against this floor instead
/// of the gradient itself. Central differences at `h = 1e-6` carry about
/// `1e-10` of rounding noise on O(1) losses, so a pure relative measure is
/// meaningless for gradients much smaller than this.
pub const REL_FLOOR: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub worst: String,
    pub compared: usize,
}

impl GradReport {
    fn record(&mut self, name: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric);
        self.compared += 1;
        if e > self.max_rel_error || self.compared == 1 {
            self.max_rel_error = e;
            self.worst = format!("{} (analytic {analytic:e}, numeric {numeric:e})", name());
        }
    }

    pub fn merge(&mut self, other: &GradReport) {
        if other.max_rel_error > self.max_rel_error || self.worst.is_empty() {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst.clone();
        }
        self.compared += other.compared;
    }
}

/// Checks every head-level gradient (`d_input`, `d_alpha`, `d_bias`,
/// `d_weights`) of `loss` at `(x, t)`.
pub fn check_head(head: &Head, loss: LossKind, x: &[f64], t: usize) -> Result<GradReport> {
    let (_, g) = head.loss_and_grads_for(loss, x, t)?;
    let mut report = GradReport::default();
    let eval = |h: &Head, x: &[f64]| -> f64 {
        match loss {
            LossKind::CrossEntropy => {
                crate::head::nll_loss(&h.logits(x).expect("logits"), t).expect("nll")
            }
            LossKind::Cosine(r) => cosine_reference(h, x, t, r),
        }
    };

    for i in 0..x.len() {
        let num = central_difference(&mut |xx| eval(head, xx), x, i, FD_STEP);
        report.record(|| format!("d_input[{i}]"), g.d_input[i], num);
    }

    if loss == LossKind::CrossEntropy {
        let bias = head.bias().to_vec();
        for j in 0..bias.len() {
            let num = central_difference(
                &mut |b| eval(&head.clone().with_bias(b.to_vec()).unwrap(), x),
                &bias,
                j,
                FD_STEP,
            );
            report.record(|| format!("d_bias[{j}]"), g.d_bias[j], num);
        }

        if head.mode().is_fixed() {
            let num = central_difference(
                &mut |a| {
                    let mut h = head.clone();
                    h.set_alpha(a[0]);
                    eval(&h, x)
                },
                &[head.alpha()],
                0,
                FD_STEP,
            );
            report.record(|| "d_alpha".to_string(), g.d_alpha, num);
        }

        if let (Some(w), Some(dw)) = (head.weights(), &g.d_weights) {
            let flat = w.as_slice().to_vec();
            for k in 0..flat.len() {
                let num = central_difference(
                    &mut |v| {
                        let mut h = head.clone();
                        h.learned_weights_mut()
                            .expect("learned weights")
                            .as_mut_slice()
                            .copy_from_slice(v);
                        eval(&h, x)
                    },
                    &flat,
                    k,
                    FD_STEP,
                );
                report.record(|| format!("d_weights[{k}]"), dw.as_slice()[k], num);
            }
        }
    }
    Ok(report)
}

/// Cosine loss evaluated straight from the explicit class directions.
fn cosine_reference(head: &Head, x: &[f64], t: usize, reduction: CosineReduction) -> f64 {
    let norm = x
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(crate::head::NORM_EPS);
    let x_hat: Vec<f64> = x.iter().map(|v| v / norm).collect();
    let dirs = class_directions(head);
    let mut loss = 0.0;
    for (i, q) in dirs.iter().enumerate() {
        let s: f64 = q.iter().zip(&x_hat).map(|(a, b)| a * b).sum();
        loss += if i == t { 1.0 - s } else { 1.0 + s };
    }
    match reduction {
        CosineReduction::Sum => loss,
        CosineReduction::Mean => loss / dirs.len() as f64,
    }
}

/// Explicit unit class directions of a fixed head, restricted to the first
/// `N` coordinates (Hadamard padding coordinates are always zero in `x̂`).
fn class_directions(head: &Head) -> Vec<Vec<f64>> {
    let n = head.n_features();
    match head.mode() {
        HeadMode::Orthonormal => {
            let q = head.weights().unwrap();
            (0..q.cols()).map(|j| q.column(j)).collect()
        }
        HeadMode::Hadamard => {
            let dense = head.hadamard_geometry().unwrap().dense_rows().unwrap();
            (0..dense.rows())
                .map(|r| dense.row(r)[..n].to_vec())
                .collect()
        }
        HeadMode::Learned => unreachable!("learned heads have no fixed directions"),
    }
}

/// End-to-end check of every trainable parameter of `mlp` for one sample.
pub fn check_mlp(mlp: &Mlp, z: &[f64], t: usize) -> Result<GradReport> {
    let mut work = mlp.clone();
    work.zero_grad();
    work.forward(z)?;
    work.backward(t)?;
    let analytic = work.gradient_vector();
    let params = work.parameters();
    let loss_kind = mlp.loss_kind();
    let mut probe = mlp.clone();
    let mut report = GradReport::default();
    for k in 0..params.len() {
        let num = central_difference(
            &mut |p| {
                probe.set_parameters(p).expect("parameter count");
                let (x, logits) = probe.predict(z).expect("predict");
                match loss_kind {
                    LossKind::CrossEntropy => crate::head::nll_loss(&logits, t).expect("nll"),
                    LossKind::Cosine(r) => cosine_reference(probe.head(), &x, t, r),
                }
            },
            &params,
            k,
            FD_STEP,
        );
        report.record(|| format!("param[{k}]"), analytic[k], num);
    }
    Ok(report)
}

/// One randomized configuration of the suite.
#[derive(Clone, Debug)]
pub struct CaseReport {
    pub mode: HeadMode,
    pub loss: LossKind,
    pub case: usize,
    pub head: GradReport,
    pub network: GradReport,
}

#[derive(Clone, Debug, Default)]
pub struct SuiteReport {
    pub cases: Vec<CaseReport>,
    pub overall: GradReport,
}

/// Head-mode / loss combinations that are defined.
pub const COMBINATIONS: [(HeadMode, LossKind); 5] = [
    (HeadMode::Learned, LossKind::CrossEntropy),
    (HeadMode::Orthonormal, LossKind::CrossEntropy),
    (HeadMode::Hadamard, LossKind::CrossEntropy),
    (
        HeadMode::Orthonormal,
        LossKind::Cosine(CosineReduction::Sum),
    ),
    (HeadMode::Hadamard, LossKind::Cosine(CosineReduction::Sum)),
];

fn random_head(mode: HeadMode, n: usize, c: usize, rng: &mut Rng) -> Result<Head> {
    let mut head = match mode {
        HeadMode::Learned => Head::learned(Matrix::from_vec(n, c, rng.normal_vec(n * c))?),
        HeadMode::Orthonormal => Head::orthonormal(random_orthonormal(n, c, rng.next_u64())?),
        HeadMode::Hadamard => Head::hadamard(n, c)?,
    };
    if mode.is_fixed() {
        head.set_alpha(0.5 + 9.5 * rng.uniform());
    }
    let bias = rng.normal_vec(c).into_iter().map(|b| 0.5 * b).collect();
    head.with_bias(bias)
}

/// Runs `cases_per_combination` random configurations of every
/// head-mode / loss combination: a head-level check on a random
/// representation and an end-to-end check of an MLP with 1 to 3 layers of
/// width at most 16.
pub fn run_suite(seed: u64, cases_per_combination: usize) -> Result<SuiteReport> {
    let mut rng = Rng::new(seed);
    let mut suite = SuiteReport::default();
    for &(mode, loss) in &COMBINATIONS {
        for case in 0..cases_per_combination {
            let n = 2 + rng.below(15);
            let c = 2 + rng.below(n.min(8) - 1);
            let head = random_head(mode, n, c, &mut rng)?;
            let x: Vec<f64> = rng.normal_vec(n);
            let t = rng.below(c);
            let head_report = check_head(&head, loss, &x, t)?;

            let input = 2 + rng.below(7);
            let depth = 1 + rng.below(3);
            let mut widths: Vec<usize> = (0..depth - 1).map(|_| 2 + rng.below(15)).collect();
            widths.push(n);
            let mut mlp = Mlp::new(input, &widths, head, loss)?;
            mlp.init_params(rng.next_u64());
            // Nonzero biases so the bias gradients are exercised away from 0.
            for layer in mlp.layers_mut() {
                for b in &mut layer.b {
                    *b = 0.1 * rng.normal();
                }
            }
            let z = rng.normal_vec(input);
            let net_report = check_mlp(&mlp, &z, t)?;

            suite.overall.merge(&head_report);
            suite.overall.merge(&net_report);
            suite.cases.push(CaseReport {
                mode,
                loss,
                case,
                head: head_report,
                network: net_report,
            });
        }
    }
    Ok(suite)
}
