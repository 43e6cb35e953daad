//! Timing of truncated-Hadamard classification: the fast transform against
//! a dense `c x n` matrix-vector product with the same `±1/√n` entries.

use std::fmt::Write as _;
use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::hadamard::{hadamard_logits_into, HadamardHeadGeometry};
use crate::head::normalize;
use crate::numerics::{gemv_into, Rng};

pub const MIN_REPS: usize = 30;
pub const WARMUP_REPS: usize = 5;
/// Largest tolerated disagreement between the two paths.
pub const AGREEMENT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub n: usize,
    pub c: usize,
    pub reps: usize,
    pub median_ns_dense: f64,
    pub median_ns_fwht: f64,
    pub speedup: f64,
    /// Largest absolute difference between the two outputs.
    pub max_abs_diff: f64,
    /// Sum of all timed outputs, so the work cannot be optimized away.
    pub checksum: f64,
    pub samples_ns_dense: Vec<u64>,
    pub samples_ns_fwht: Vec<u64>,
}

pub const REPORT_HEADER: &str = "n,c,median_ns_dense,median_ns_fwht,speedup";

impl BenchReport {
    pub fn csv(&self) -> String {
        format!(
            "{REPORT_HEADER}\n{},{},{},{},{}\n",
            self.n, self.c, self.median_ns_dense, self.median_ns_fwht, self.speedup
        )
    }

    /// Raw timings, one row per repetition.
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("rep,ns_dense,ns_fwht\n");
        for (i, (d, f)) in self
            .samples_ns_dense
            .iter()
            .zip(&self.samples_ns_fwht)
            .enumerate()
        {
            let _ = writeln!(out, "{i},{d},{f}");
        }
        out
    }

    pub fn write(&self, report: impl AsRef<Path>, samples: impl AsRef<Path>) -> Result<()> {
        for (path, body) in [
            (report.as_ref(), self.csv()),
            (samples.as_ref(), self.samples_csv()),
        ] {
            std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Median of integer samples (mean of the two middle values for even counts).
pub fn median_ns(samples: &[u64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_unstable();
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m] as f64
    } else {
        (s[m - 1] as f64 + s[m] as f64) / 2.0
    }
}

/// Benchmarks both classification paths for an `n`-wide representation and
/// `c` classes. Outputs are compared before any timing happens; a mismatch
/// is an error and no timings are produced.
pub fn bench_head(n: usize, c: usize, reps: usize) -> Result<BenchReport> {
    if reps < MIN_REPS {
        return Err(Error::InvalidArgument(format!(
            "bench needs at least {MIN_REPS} repetitions, got {reps}"
        )));
    }
    let geom = HadamardHeadGeometry::new(n, c)?;
    let dense = geom.dense_rows()?;
    let mut rng = Rng::new(0xBE7C);
    let x_hat = normalize(&rng.normal_vec(n)).x_hat;
    let bias = rng.normal_vec(c);
    let alpha = 1.0;

    let mut out_dense = vec![0.0; c];
    let mut out_fast = vec![0.0; c];
    let mut scratch = vec![0.0; n];

    let dense_run = |out: &mut [f64]| -> Result<()> {
        gemv_into(&dense, &x_hat, out)?;
        for (o, b) in out.iter_mut().zip(&bias) {
            *o = alpha * *o + b;
        }
        Ok(())
    };

    dense_run(&mut out_dense)?;
    hadamard_logits_into(&geom, &x_hat, alpha, &bias, &mut scratch, &mut out_fast)?;
    let max_abs_diff = out_dense
        .iter()
        .zip(&out_fast)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if !(max_abs_diff <= AGREEMENT_TOL) {
        return Err(Error::BenchMismatch { max_abs_diff });
    }

    let mut checksum = 0.0;
    for _ in 0..WARMUP_REPS {
        dense_run(black_box(&mut out_dense))?;
        hadamard_logits_into(
            &geom,
            black_box(&x_hat),
            alpha,
            &bias,
            &mut scratch,
            &mut out_fast,
        )?;
    }
    let mut samples_ns_dense = Vec::with_capacity(reps);
    let mut samples_ns_fwht = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        dense_run(black_box(&mut out_dense))?;
        samples_ns_dense.push(t.elapsed().as_nanos() as u64);
        checksum += black_box(&out_dense).iter().sum::<f64>();

        let t = Instant::now();
        hadamard_logits_into(
            &geom,
            black_box(&x_hat),
            alpha,
            &bias,
            &mut scratch,
            &mut out_fast,
        )?;
        samples_ns_fwht.push(t.elapsed().as_nanos() as u64);
        checksum += black_box(&out_fast).iter().sum::<f64>();
    }
    let median_ns_dense = median_ns(&samples_ns_dense);
    let median_ns_fwht = median_ns(&samples_ns_fwht).max(1.0);
    Ok(BenchReport {
        n,
        c,
        reps,
        median_ns_dense,
        median_ns_fwht,
        speedup: median_ns_dense / median_ns_fwht,
        max_abs_diff,
        checksum,
        samples_ns_dense,
        samples_ns_fwht,
    })
}

/// Per-machine speedup baselines: lines of `n,c,min_speedup`, `#` comments
/// allowed. Returns the entry for `(n, c)` if present.
pub fn baseline_speedup(text: &str, n: usize, c: usize) -> Option<f64> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            (f.len() == 3).then_some(())?;
            Some((f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?))
        })
        .find(|&(bn, bc, _): &(usize, usize, f64)| bn == n && bc == c)
        .map(|(_, _, s)| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_reps() {
        assert!(bench_head(64, 64, 29).is_err());
        assert!(bench_head(64, 64, 30).is_ok());
    }

    #[test]
    fn outputs_agree_small() {
        let r = bench_head(64, 64, 30).unwrap();
        assert!(r.max_abs_diff <= 1e-10);
        assert_eq!(r.samples_ns_dense.len(), 30);
        assert!((r.speedup - r.median_ns_dense / r.median_ns_fwht).abs() < 1e-12);
        assert!(r
            .csv()
            .starts_with("n,c,median_ns_dense,median_ns_fwht,speedup\n64,64,"));
    }

    #[test]
    fn bad_sizes() {
        assert!(bench_head(48, 10, 30).is_err());
        assert!(bench_head(16, 17, 30).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median_ns(&[5, 1, 3]), 3.0);
        assert_eq!(median_ns(&[4, 1, 3, 2]), 2.5);
    }

    #[test]
    fn baseline_lookup() {
        let text = "# machine: ci\n1024,1024,2.0\n64, 64, 1.1\nbad line\n";
        assert_eq!(baseline_speedup(text, 1024, 1024), Some(2.0));
        assert_eq!(baseline_speedup(text, 64, 64), Some(1.1));
        assert_eq!(baseline_speedup(text, 8, 8), None);
    }
}
