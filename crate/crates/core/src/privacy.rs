//! Privacy verification on the pencil `D(z)`.
//!
//! An entry of `x(0)` or `u` is certified private when some vector `v` in the
//! kernel of `D(z)` is nonzero at that coordinate: shifting the initial state
//! by `m v1` and the inputs by `m z^k v2` leaves every released output
//! unchanged, so no observer can pin the entry down. The checks here are
//! sufficient conditions only. A "not certified" entry may still be safe.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    complex_rank, finite_generalized_eigenvalues, null_space_at_scale, rank_tol, Matrix, Tolerance, Vector,
    C64,
};
use crate::model::{pencil, simulate, LinearSystem};

/// Default number of random kernel combinations tried when looking for a
/// witness that is nonzero on every target at once.
pub const DEFAULT_TRIALS: usize = 8;

/// Largest `|z|^k` tolerated by the witness simulation before the horizon is cut.
const POWER_CAP: f64 = 1e150;

/// Protected coordinates of `x(0)` and `u`, stored zero-based.
///
/// The text form is one-based, e.g. `x0:1,7;u:6`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub state_targets: Vec<usize>,
    pub input_targets: Vec<usize>,
}

impl TargetSpec {
    pub fn new(mut state_targets: Vec<usize>, mut input_targets: Vec<usize>) -> Self {
        state_targets.sort_unstable();
        state_targets.dedup();
        input_targets.sort_unstable();
        input_targets.dedup();
        Self {
            state_targets,
            input_targets,
        }
    }

    /// Every state and input coordinate.
    pub fn all(n: usize, p: usize) -> Self {
        Self::new((0..n).collect(), (0..p).collect())
    }

    pub fn is_empty(&self) -> bool {
        self.state_targets.is_empty() && self.input_targets.is_empty()
    }

    pub fn len(&self) -> usize {
        self.state_targets.len() + self.input_targets.len()
    }

    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        if let Some(i) = self.state_targets.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidArgument(format!(
                "state target x0[{}] out of range (n = {n})",
                i + 1
            )));
        }
        if let Some(j) = self.input_targets.iter().find(|&&j| j >= p) {
            return Err(Error::InvalidArgument(format!(
                "input target u[{}] out of range (p = {p})",
                j + 1
            )));
        }
        Ok(())
    }

    /// Coordinates in the stacked vector `[x(0); u]`.
    pub fn stacked_indices(&self, n: usize) -> Vec<usize> {
        self.state_targets
            .iter()
            .copied()
            .chain(self.input_targets.iter().map(|j| n + j))
            .collect()
    }
}

impl FromStr for TargetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut states = Vec::new();
        let mut inputs = Vec::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (kind, list) = part.split_once(':').ok_or_else(|| {
                Error::InvalidArgument(format!("target group '{part}' lacks a ':'"))
            })?;
            let dst = match kind.trim() {
                "x0" | "x" => &mut states,
                "u" => &mut inputs,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown target kind '{other}', expected 'x0' or 'u'"
                    )))
                }
            };
            for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let idx: usize = tok.parse().map_err(|_| {
                    Error::InvalidArgument(format!("target index '{tok}' is not a positive integer"))
                })?;
                if idx == 0 {
                    return Err(Error::InvalidArgument("target indices are 1-based".into()));
                }
                dst.push(idx - 1);
            }
        }
        Ok(Self::new(states, inputs))
    }
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| {
            v.iter()
                .map(|i| (i + 1).to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut parts = Vec::new();
        if !self.state_targets.is_empty() {
            parts.push(format!("x0:{}", join(&self.state_targets)));
        }
        if !self.input_targets.is_empty() {
            parts.push(format!("u:{}", join(&self.input_targets)));
        }
        write!(f, "{}", parts.join(";"))
    }
}

/// Outcome of the full-row-rank check on `D(z)` over the complex plane.
#[derive(Debug, Clone, PartialEq)]
pub struct RowRankReport {
    pub holds: bool,
    /// Rank of `D(z0)` at the random probe point.
    pub probe_rank: usize,
    pub probe_z: f64,
    /// Finite points where `D(z)` loses row rank.
    pub invariant_zeros: Vec<C64>,
}

/// Decide whether `D(z)` has full row rank `n + q` for every complex `z`.
///
/// A random real probe decides the generic rank. If that is full, candidate
/// rank-drop points come from the square pencils `D(z) W` for three random
/// compressions `W`. A candidate counts as an invariant zero when it recurs in
/// at least two compressions and the uncompressed pencil loses rank there.
pub fn check_full_row_rank_everywhere(
    sys: &LinearSystem,
    tol: &Tolerance,
    seed: u64,
) -> Result<RowRankReport> {
    let (n, p, q) = (sys.n(), sys.p(), sys.q());
    if q > p {
        return Err(Error::StructuralViolation(format!(
            "D(z) is {}x{} with q = {q} > p = {p}, so it can never have full row rank",
            n + q,
            n + p
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe_z = Uniform::new(-3.0, 3.0).expect("valid range").sample(&mut rng);
    let probe_rank = rank_tol(&pencil(sys, probe_z), tol)?;
    if probe_rank < n + q {
        return Ok(RowRankReport {
            holds: false,
            probe_rank,
            probe_z,
            invariant_zeros: Vec::new(),
        });
    }

    let d0 = pencil(sys, 0.0);
    let mut e = Matrix::zeros(n + q, n + p);
    e.view_mut((0, 0), (n, n)).fill_with_identity();
    let confirm = Tolerance {
        rank_tol: tol.rank_tol.max(1e-6),
        zero_tol: tol.zero_tol,
    };

    let near = |a: C64, b: C64| (a - b).norm() <= 1e-6 * (1.0 + a.norm().max(b.norm()));
    let mut draws: Vec<Vec<C64>> = Vec::with_capacity(3);
    for _ in 0..3 {
        let w = Matrix::from_fn(n + p, n + q, |_, _| StandardNormal.sample(&mut rng));
        let cands = finite_generalized_eigenvalues(&(&d0 * &w), &(&e * &w))?;
        draws.push(
            cands
                .into_iter()
                .filter(|l| l.re.is_finite() && l.im.is_finite())
                .collect(),
        );
    }

    let mut zeros: Vec<C64> = Vec::new();
    for (d, cands) in draws.iter().enumerate() {
        for &lam in cands {
            if zeros.iter().any(|&z| near(z, lam)) {
                continue;
            }
            // A true zero is a root of det(D(z) W) for every W, while roots
            // introduced by one compression (including badly resolved
            // infinite eigenvalues) generally do not recur.
            let hits = draws
                .iter()
                .enumerate()
                .filter(|(o, other)| *o != d && other.iter().any(|&c| near(c, lam)))
                .count();
            if hits == 0 {
                continue;
            }
            // Balance the z-dependent rows before the rank test so that a
            // large |lambda| does not swamp the output rows.
            let scale = 1.0 / lam.norm().max(1.0);
            let mut re = pencil(sys, lam.re);
            let mut im = &e * lam.im;
            re.rows_mut(0, n).scale_mut(scale);
            im.rows_mut(0, n).scale_mut(scale);
            if complex_rank(&re, &im, &confirm)? < n + q {
                zeros.push(lam);
            }
        }
    }
    zeros.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(RowRankReport {
        holds: zeros.is_empty(),
        probe_rank,
        probe_z,
        invariant_zeros: zeros,
    })
}

/// Per-entry verdicts at a fixed `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtectionReport {
    /// `(index, certified)` per state target, zero-based.
    pub state_flags: Vec<(usize, bool)>,
    pub input_flags: Vec<(usize, bool)>,
    pub witness_z: f64,
    /// A kernel vector nonzero on every target, when one was found.
    pub witness_vector: Option<Vector>,
    pub all_protected: bool,
    pub kernel_dim: usize,
}

impl ProtectionReport {
    pub fn certified_count(&self) -> usize {
        self.state_flags
            .iter()
            .chain(&self.input_flags)
            .filter(|(_, f)| *f)
            .count()
    }

    /// JSON view with one-based `x0[i]` / `u[j]` keys.
    pub fn to_json(&self) -> serde_json::Value {
        let label = |b: bool| serde_json::Value::from(if b { "certified" } else { "not certified" });
        let flags: serde_json::Map<String, serde_json::Value> = self
            .state_flags
            .iter()
            .map(|(i, f)| (format!("x0[{}]", i + 1), label(*f)))
            .chain(self.input_flags.iter().map(|(j, f)| (format!("u[{}]", j + 1), label(*f))))
            .collect();
        serde_json::json!({
            "z": self.witness_z,
            "kernel_dim": self.kernel_dim,
            "all_protected": self.all_protected,
            "flags": flags,
        })
    }
}

fn supported(v: &[f64], idx: &[usize], scale: f64, zero_tol: f64) -> bool {
    idx.iter().all(|&i| v[i].abs() > zero_tol * scale)
}

/// Certify target entries of a (perturbed) system at the point `z`.
pub fn protected_entries(
    perturbed: &LinearSystem,
    targets: &TargetSpec,
    z: f64,
    tol: &Tolerance,
    trials: usize,
    seed: u64,
) -> Result<ProtectionReport> {
    protected_entries_at_scale(perturbed, targets, z, tol, trials, seed, 0.0)
}

/// [`protected_entries`] with the kernel cutoff taken relative to
/// `max(sigma_1, scale)`, typically the norm of the unperturbed pencil.
pub fn protected_entries_at_scale(
    perturbed: &LinearSystem,
    targets: &TargetSpec,
    z: f64,
    tol: &Tolerance,
    trials: usize,
    seed: u64,
    scale: f64,
) -> Result<ProtectionReport> {
    let n = perturbed.n();
    targets.validate(n, perturbed.p())?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if !z.is_finite() {
        return Err(Error::InvalidArgument("z must be finite".into()));
    }
    let basis = null_space_at_scale(&pencil(perturbed, z), tol, scale)?;
    let kdim = basis.ncols();
    let z_ok = z.abs() > tol.zero_tol;

    let row_supported = |r: usize| {
        (0..kdim).any(|j| {
            let col = basis.column(j);
            col[r].abs() > tol.zero_tol * col.norm()
        })
    };
    let state_flags: Vec<(usize, bool)> = targets
        .state_targets
        .iter()
        .map(|&i| (i, row_supported(i)))
        .collect();
    let input_flags: Vec<(usize, bool)> = targets
        .input_targets
        .iter()
        .map(|&j| (j, z_ok && row_supported(n + j)))
        .collect();

    let all_flagged = state_flags.iter().chain(&input_flags).all(|(_, f)| *f);
    let idx = targets.stacked_indices(n);
    let mut witness = None;
    if kdim > 0 && all_flagged {
        // A single basis column with full support is the cheapest witness.
        for j in 0..kdim {
            let col = basis.column(j);
            if supported(col.as_slice(), &idx, col.norm(), tol.zero_tol) {
                witness = Some(col.into_owned());
                break;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..trials {
            if witness.is_some() {
                break;
            }
            let g = Vector::from_fn(kdim, |_, _| StandardNormal.sample(&mut rng));
            let v = &basis * g;
            if supported(v.as_slice(), &idx, v.norm(), tol.zero_tol) {
                witness = Some(v);
            }
        }
    }
    Ok(ProtectionReport {
        state_flags,
        input_flags,
        witness_z: z,
        all_protected: witness.is_some() && !targets.is_empty(),
        witness_vector: witness,
        kernel_dim: kdim,
    })
}

/// Lower bound `n + p - rank D(z)` on the number of protectable entries.
pub fn min_protected_count(perturbed: &LinearSystem, z: f64, tol: &Tolerance) -> Result<usize> {
    let d = pencil(perturbed, z);
    Ok(d.ncols() - rank_tol(&d, tol)?)
}

/// Result of replaying a trajectory against its kernel-shifted shadow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessCheck {
    /// `max_k |y''(k) - y'(k)|`.
    pub deviation: f64,
    /// Largest output norm on the nominal path.
    pub max_output_norm: f64,
    pub horizon_used: usize,
    pub capped: bool,
}

/// Simulate `(x0, u)` and `(x0 + m v1, u(k) + m z^k v2)` and compare outputs.
pub fn output_invariance_witness_test(
    perturbed: &LinearSystem,
    z: f64,
    v: &Vector,
    m: f64,
    horizon: usize,
    x0: &Vector,
    inputs: &[Vector],
) -> Result<WitnessCheck> {
    let (n, p) = (perturbed.n(), perturbed.p());
    if v.len() != n + p {
        return Err(Error::Dimension(format!(
            "witness has length {}, expected {}",
            v.len(),
            n + p
        )));
    }
    let mut used = horizon;
    if z.abs() > 1.0 {
        let max_k = (POWER_CAP.ln() / z.abs().ln()).floor() as usize;
        if max_k < horizon {
            log::warn!("|z|^k overflows past k = {max_k}; horizon capped from {horizon}");
            used = max_k;
        }
    }
    let capped = used < horizon;
    if inputs.len() < used + 1 {
        return Err(Error::InvalidArgument(format!(
            "need {} input samples, got {}",
            used + 1,
            inputs.len()
        )));
    }
    let inputs = &inputs[..=used];
    let v1 = v.rows(0, n).into_owned();
    let v2 = v.rows(n, p).into_owned();
    let nominal = simulate(perturbed, x0, inputs, used)?;
    let shifted_inputs: Vec<Vector> = inputs
        .iter()
        .enumerate()
        .map(|(k, u)| u + &v2 * (m * z.powi(k as i32)))
        .collect();
    let shadow = simulate(perturbed, &(x0 + &v1 * m), &shifted_inputs, used)?;
    let deviation = nominal
        .outputs
        .iter()
        .zip(&shadow.outputs)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    Ok(WitnessCheck {
        deviation,
        max_output_norm: nominal.max_output_norm(),
        horizon_used: used,
        capped,
    })
}
