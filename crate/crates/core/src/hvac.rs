//! Building thermal network case study.
//!
//! Each zone has one temperature state, an occupancy count as exogenous input
//! and a supply-air temperature as control input. Zones exchange heat with
//! their neighbours through symmetric conductances. The discrete model comes
//! from a trapezoidal step of the zone heat balance.
//!
//! Closed-loop runs stabilise every zone at a set point with an LQR gain
//! computed on the perturbed matrices. The true and the released outputs are
//! evaluated on one and the same state trajectory, so their difference is
//! exactly the output perturbation.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, hstack, pinv, rank_tol, Matrix, Tolerance, Vector};
use crate::model::{apply_perturbation, LinearSystem, Perturbation, ReleaseMap};
use crate::privacy::check_full_row_rank_everywhere;

/// Number of output-map draws tried before a fixture gives up.
pub const MAX_FIXTURE_ATTEMPTS: usize = 20;

/// Undirected heat path between two zones (zero-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Thermal conductance in W/K.
    pub conductance: f64,
}

/// Physical parameters of the zone network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneParams {
    /// Thermal capacity of each zone in J/K.
    pub capacity: Vec<f64>,
    pub edges: Vec<Edge>,
    /// Discretisation step in seconds.
    pub dt: f64,
    /// Heat load per occupant in W.
    pub occupant_load: f64,
    /// Specific heat of air in J/(kg K).
    pub air_heat_capacity: f64,
    /// Constant supply mass flow per zone in kg/s.
    pub supply_flow: Vec<f64>,
}

impl ZoneParams {
    /// `zones` rooms in a row with the default physical constants.
    pub fn path(zones: usize) -> Self {
        Self {
            capacity: vec![2.5e5; zones],
            edges: (1..zones)
                .map(|i| Edge {
                    a: i - 1,
                    b: i,
                    conductance: 20.0,
                })
                .collect(),
            dt: 60.0,
            occupant_load: 100.0,
            air_heat_capacity: 1005.0,
            supply_flow: vec![0.2; zones],
        }
    }

    pub fn zones(&self) -> usize {
        self.capacity.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.zones();
        if n == 0 {
            return Err(Error::InvalidArgument("at least one zone is required".into()));
        }
        if self.supply_flow.len() != n {
            return Err(Error::Dimension(format!(
                "supply_flow has {} entries for {n} zones",
                self.supply_flow.len()
            )));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self.capacity.iter().all(|&v| positive(v))
            || !self.supply_flow.iter().all(|&v| positive(v))
            || ![self.dt, self.occupant_load, self.air_heat_capacity]
                .iter()
                .all(|&v| positive(v))
        {
            return Err(Error::InvalidArgument(
                "physical parameters must be finite and positive".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.edges {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) is a self-loop or leaves the {n} zones",
                    e.a, e.b
                )));
            }
            if !positive(e.conductance) {
                return Err(Error::InvalidArgument("conductances must be positive".into()));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(Error::InvalidArgument(format!(
                    "edge ({}, {}) is listed twice",
                    e.a, e.b
                )));
            }
        }
        Ok(())
    }
}

/// The thermal matrices `(A, B_occupancy, B_supply)`.
pub fn thermal_matrices(params: &ZoneParams) -> Result<(Matrix, Matrix, Matrix)> {
    params.validate()?;
    let n = params.zones();
    let mut coupling = Matrix::zeros(n, n);
    for e in &params.edges {
        coupling[(e.a, e.b)] = e.conductance;
        coupling[(e.b, e.a)] = e.conductance;
    }
    let mut a = Matrix::zeros(n, n);
    let mut be = Matrix::zeros(n, n);
    let mut bc = Matrix::zeros(n, n);
    for i in 0..n {
        let lag = params.capacity[i] / params.dt;
        let supply = params.supply_flow[i] * params.air_heat_capacity;
        let exchange: f64 = coupling.row(i).sum();
        let den = lag + supply / 2.0 + exchange / 2.0;
        a[(i, i)] = (lag - supply / 2.0 - exchange / 2.0) / den;
        for j in 0..n {
            if j != i && coupling[(i, j)] > 0.0 {
                a[(i, j)] = coupling[(i, j)] / den;
            }
        }
        be[(i, i)] = params.occupant_load / den;
        bc[(i, i)] = supply / den;
    }
    Ok((a, be, bc))
}

/// Assemble the system with inputs `[occupancy; supply temperature]`, the
/// supply temperatures declared as control inputs.
pub fn build_hvac(
    params: &ZoneParams,
    g: Matrix,
    h: Matrix,
    pi: Option<Matrix>,
) -> Result<(LinearSystem, ReleaseMap)> {
    let (a, be, bc) = thermal_matrices(params)?;
    let n = params.zones();
    let sys = LinearSystem::new(a, hstack(&[&be, &bc]), g, h)?
        .with_control_inputs((n..2 * n).collect())?;
    let rel = match pi {
        Some(pi) => ReleaseMap::new(pi),
        None => ReleaseMap::identity(sys.q()),
    };
    rel.validate(&sys)?;
    Ok((sys, rel))
}

fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..=1.0))
}

/// Fixture for the analytic design: `q = N` outputs, occupancy not fed
/// through to the outputs, random `G` and supply feed-through.
///
/// Output maps are redrawn until the occupancy subsystem keeps full row rank
/// at every `z`.
pub fn l2_fixture(params: &ZoneParams, seed: u64) -> Result<(LinearSystem, ReleaseMap)> {
    let n = params.zones();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = Tolerance::default();
    for attempt in 0..MAX_FIXTURE_ATTEMPTS {
        let g = uniform_matrix(&mut rng, n, n);
        let h = hstack(&[&Matrix::zeros(n, n), &uniform_matrix(&mut rng, n, n)]);
        let (sys, rel) = build_hvac(params, g, h, None)?;
        let report = check_full_row_rank_everywhere(&sys.exogenous_part(), &tol, seed ^ 0x9e37)?;
        if report.holds {
            return Ok((sys, rel));
        }
        log::debug!("fixture draw {attempt} violates the full-row-rank condition, redrawing");
    }
    Err(Error::Precondition(format!(
        "no output map satisfying the full-row-rank condition in {MAX_FIXTURE_ATTEMPTS} draws"
    )))
}

/// Fixture for the sparse design: `q = 2N` random outputs, both input groups
/// perturbed (no control partition) and identity release map.
pub fn l0_fixture(params: &ZoneParams, seed: u64) -> Result<(LinearSystem, ReleaseMap)> {
    let n = params.zones();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = uniform_matrix(&mut rng, 2 * n, n);
    let h = uniform_matrix(&mut rng, 2 * n, 2 * n);
    let (mut sys, rel) = build_hvac(params, g, h, None)?;
    sys.control_inputs = None;
    Ok((sys, rel))
}

/// Gain `F` of the discrete LQR, to be used as `u = F x`.
///
/// The Riccati equation is solved by fixed-point iteration from `P = Q`,
/// which converges whenever `(A, B)` is stabilisable.
pub fn dlqr(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix> {
    let mut p = q.clone();
    let gain = |p: &Matrix| -> Result<Matrix> {
        let s = r + b.transpose() * p * b;
        let ch = nalgebra::Cholesky::new(s).ok_or_else(|| {
            Error::Precondition("R + B'PB is not positive definite".into())
        })?;
        Ok(-ch.solve(&(b.transpose() * p * a)))
    };
    for _ in 0..100_000 {
        let f = gain(&p)?;
        // Joseph-like form keeps P symmetric positive semidefinite.
        let acl = a + b * &f;
        let next = q + f.transpose() * r * &f + acl.transpose() * &p * &acl;
        let next = (&next + next.transpose()) * 0.5;
        let diff = (&next - &p).amax();
        p = next;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Precondition("Riccati iteration diverged".into()));
        }
        if diff <= 1e-12 * (1.0 + p.amax()) {
            return gain(&p);
        }
    }
    Err(Error::Precondition("Riccati iteration did not converge".into()))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// Simulation settings shared by the closed-loop runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Temperature every zone is regulated to.
    pub setpoint: f64,
    /// Number of steps after the initial sample.
    pub horizon: usize,
    /// Occupancy per zone is drawn uniformly from `0..=occupancy_max`.
    pub occupancy_max: u32,
    /// Temperature of every zone at `k = 0`.
    pub initial_temperature: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            setpoint: 21.5,
            horizon: 200,
            occupancy_max: 10,
            initial_temperature: 18.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Released outputs come from the perturbed system.
    InputOutputPerturbation,
    /// Released outputs are the true outputs plus Gaussian noise.
    GaussianNoise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub mechanism: Mechanism,
    pub y_true: Vec<Vector>,
    /// Outputs handed to the data requester.
    pub y_pert: Vec<Vector>,
    /// `||y_pert(k) - y_true(k)||_2`.
    pub disutility_series: Vec<f64>,
    /// Disutility over `||y_true(k)||_2`, infinite where the latter vanishes.
    pub relative_series: Vec<f64>,
    pub temperatures: Vec<Vector>,
    /// Full input vectors `[occupancy; supply temperature]` actually applied.
    pub inputs: Vec<Vector>,
    pub seed: u64,
}

impl SimReport {
    /// Largest relative disutility from step `from` on.
    pub fn max_relative_from(&self, from: usize) -> f64 {
        self.relative_series.iter().skip(from).cloned().fold(0.0, f64::max)
    }

    /// Mean absolute disutility over the last `window` samples.
    pub fn steady_state_disutility(&self, window: usize) -> f64 {
        let n = self.disutility_series.len();
        let w = window.clamp(1, n.max(1));
        self.disutility_series[n.saturating_sub(w)..].iter().sum::<f64>() / w as f64
    }

    /// CSV with one row per step: `k, disutility, relative, y_true_norm,
    /// y_pert_norm, T1..TN`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        use crate::io::fmt_num;
        let mut w = csv::Writer::from_writer(out);
        let zones = self.temperatures.first().map_or(0, |t| t.len());
        let mut header: Vec<String> = ["k", "disutility", "relative", "y_true_norm", "y_pert_norm"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((1..=zones).map(|i| format!("T{i}")));
        w.write_record(&header)?;
        for k in 0..self.y_true.len() {
            let mut row = vec![
                k.to_string(),
                fmt_num(self.disutility_series[k]),
                fmt_num(self.relative_series[k]),
                fmt_num(self.y_true[k].norm()),
                fmt_num(self.y_pert[k].norm()),
            ];
            row.extend(self.temperatures[k].iter().map(|&t| fmt_num(t)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-sample distance between released and true outputs, and its ratio to
/// the true output norm.
pub fn disutility(y_pert: &[Vector], y_true: &[Vector]) -> Result<(Vec<f64>, Vec<f64>)> {
    if y_pert.len() != y_true.len() {
        return Err(Error::Dimension(format!(
            "trajectories have {} and {} samples",
            y_pert.len(),
            y_true.len()
        )));
    }
    let zero = Tolerance::default().zero_tol;
    let mut abs = Vec::with_capacity(y_true.len());
    let mut rel = Vec::with_capacity(y_true.len());
    for (yp, yt) in y_pert.iter().zip(y_true) {
        if yp.len() != yt.len() {
            return Err(Error::Dimension("output samples differ in length".into()));
        }
        let d = (yp - yt).norm();
        let base = yt.norm();
        abs.push(d);
        rel.push(if base < zero { f64::INFINITY } else { d / base });
    }
    Ok((abs, rel))
}

/// Reference operating point `(x_ref, u_ref)` for a uniform set point under
/// a constant occupancy level.
pub fn steady_state(
    perturbed: &LinearSystem,
    setpoint: f64,
    occupancy: f64,
) -> Result<(Vector, Vector)> {
    let n = perturbed.n();
    let ctrl = perturbed.control_indices();
    let exo = perturbed.exogenous_indices();
    let bc = perturbed.b.select_columns(&ctrl);
    let be = perturbed.b.select_columns(&exo);
    let tol = Tolerance::default();
    let rank = rank_tol(&bc, &tol)?;
    if rank < n {
        return Err(Error::SingularSteadyState { rank, expected: n });
    }
    let x_ref = Vector::from_element(n, setpoint);
    let u_exo = Vector::from_element(exo.len(), occupancy);
    let rhs = (Matrix::identity(n, n) - &perturbed.a) * &x_ref - &be * &u_exo;
    let u_ctrl = pinv(&bc, &tol)? * rhs;
    Ok((x_ref, u_ctrl))
}

/// Closed-loop run shared by the public entry points.
struct Run {
    y_true: Vec<Vector>,
    y_pert: Vec<Vector>,
    states: Vec<Vector>,
    inputs: Vec<Vector>,
}

fn run_closed_loop(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    k: &Perturbation,
    scenario: &Scenario,
) -> Result<Run> {
    let perturbed = apply_perturbation(sys, rel, k)?;
    let ctrl = sys.control_indices();
    if ctrl.is_empty() {
        return Err(Error::InvalidArgument(
            "closed-loop simulation needs declared control inputs".into(),
        ));
    }
    let exo = sys.exogenous_indices();
    let n = sys.n();
    let bc = perturbed.b.select_columns(&ctrl);
    let f = dlqr(
        &perturbed.a,
        &bc,
        &Matrix::identity(n, n),
        &(Matrix::identity(ctrl.len(), ctrl.len()) * 0.1),
    )?;
    let rho = spectral_radius(&(&perturbed.a + &bc * &f))?;
    if rho >= 1.0 {
        return Err(Error::Precondition(format!(
            "feedback gain is not stabilising (spectral radius {rho})"
        )));
    }
    let (x_ref, u_ref) = steady_state(&perturbed, scenario.setpoint, scenario.occupancy_max as f64 / 2.0)?;

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let steps = scenario.horizon + 1;
    let mut run = Run {
        y_true: Vec::with_capacity(steps),
        y_pert: Vec::with_capacity(steps),
        states: Vec::with_capacity(steps),
        inputs: Vec::with_capacity(steps),
    };
    let mut x = Vector::from_element(n, scenario.initial_temperature);
    for _ in 0..steps {
        let mut u = Vector::zeros(sys.p());
        for &j in &exo {
            u[j] = rng.random_range(0..=scenario.occupancy_max) as f64;
        }
        let u_ctrl = &u_ref + &f * (&x - &x_ref);
        for (pos, &j) in ctrl.iter().enumerate() {
            u[j] = u_ctrl[pos];
        }
        run.y_true.push(&sys.g * &x + &sys.h * &u);
        run.y_pert.push(&perturbed.g * &x + &perturbed.h * &u);
        let next = &perturbed.a * &x + &perturbed.b * &u;
        run.states.push(std::mem::replace(&mut x, next));
        run.inputs.push(u);
    }
    Ok(run)
}

/// Regulate the perturbed plant and compare released and true outputs.
pub fn closed_loop_sim(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    k: &Perturbation,
    scenario: &Scenario,
) -> Result<SimReport> {
    let run = run_closed_loop(sys, rel, k, scenario)?;
    let (disutility_series, relative_series) = disutility(&run.y_pert, &run.y_true)?;
    Ok(SimReport {
        mechanism: Mechanism::InputOutputPerturbation,
        y_true: run.y_true,
        y_pert: run.y_pert,
        disutility_series,
        relative_series,
        temperatures: run.states,
        inputs: run.inputs,
        seed: scenario.seed,
    })
}

/// Noise calibration of a differentially private release.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Bound on how far one private record moves an output sample.
    pub sensitivity: f64,
}

impl Default for DpParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            delta: 1e-4,
            sensitivity: 1.0,
        }
    }
}

impl DpParams {
    /// Standard deviation of the Gaussian mechanism,
    /// `sensitivity * sqrt(2 ln(1.25 / delta)) / epsilon`.
    pub fn sigma(&self) -> Result<f64> {
        if !(self.epsilon > 0.0) || !(self.delta > 0.0 && self.delta < 1.0) || !(self.sensitivity > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need epsilon > 0, delta in (0, 1) and sensitivity > 0, got {self:?}"
            )));
        }
        Ok(self.sensitivity * (2.0 * (1.25 / self.delta).ln()).sqrt() / self.epsilon)
    }
}

/// Same closed loop as [`closed_loop_sim`] without perturbation, releasing
/// the true outputs plus i.i.d. Gaussian noise.
pub fn dp_baseline(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    dp: &DpParams,
    scenario: &Scenario,
) -> Result<SimReport> {
    let sigma = dp.sigma()?;
    let zero = Perturbation::zeros(sys.n(), sys.p(), rel.l());
    let run = run_closed_loop(sys, rel, &zero, scenario)?;
    // A separate stream keeps the occupancy draws identical to the IOP run.
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    rng.set_stream(1);
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise level {sigma}: {e}")))?;
    let y_pert: Vec<Vector> = run
        .y_true
        .iter()
        .map(|y| y.map(|v| v + normal.sample(&mut rng)))
        .collect();
    let (disutility_series, relative_series) = disutility(&y_pert, &run.y_true)?;
    Ok(SimReport {
        mechanism: Mechanism::GaussianNoise,
        y_true: run.y_true,
        y_pert,
        disutility_series,
        relative_series,
        temperatures: run.states,
        inputs: run.inputs,
        seed: scenario.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllability::{is_controllable, Method};

    #[test]
    fn single_zone_coefficient() {
        let params = ZoneParams::path(1);
        let (a, be, bc) = thermal_matrices(&params).unwrap();
        let lag = 2.5e5 / 60.0;
        let half = 0.2 * 1005.0 / 2.0;
        let want = (lag - half) / (lag + half);
        assert!((a[(0, 0)] - want).abs() < 1e-15);
        assert!(a[(0, 0)] < 1.0);
        assert!((be[(0, 0)] - 100.0 / (lag + half)).abs() < 1e-15);
        assert!((bc[(0, 0)] - 2.0 * half / (lag + half)).abs() < 1e-15);
    }

    #[test]
    fn path_sparsity_and_positive_supply() {
        let params = ZoneParams::path(5);
        let (a, _, bc) = thermal_matrices(&params).unwrap();
        for i in 0..5usize {
            for j in 0..5 {
                let neighbours = i.abs_diff(j) == 1;
                if i != j {
                    assert_eq!(a[(i, j)] != 0.0, neighbours, "({i}, {j})");
                }
            }
            assert!(bc[(i, i)] > 0.0);
        }
        assert!(bc.is_square() && (bc.clone() - Matrix::from_diagonal(&bc.diagonal())).amax() == 0.0);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut p = ZoneParams::path(3);
        p.edges.push(Edge {
            a: 1,
            b: 1,
            conductance: 1.0,
        });
        assert!(p.validate().is_err());
        let mut p = ZoneParams::path(3);
        p.dt = 0.0;
        assert!(p.validate().is_err());
        let mut p = ZoneParams::path(3);
        p.edges.push(Edge {
            a: 1,
            b: 0,
            conductance: 5.0,
        });
        assert!(p.validate().is_err());
    }

    #[test]
    fn fixtures_have_the_documented_shapes() {
        let params = ZoneParams::path(4);
        let (sys, rel) = l2_fixture(&params, 1).unwrap();
        assert_eq!((sys.n(), sys.p(), sys.q(), rel.l()), (4, 8, 4, 4));
        assert_eq!(sys.control_indices(), vec![4, 5, 6, 7]);
        assert_eq!(sys.h.columns(0, 4).amax(), 0.0);
        let (sys, _) = l0_fixture(&params, 1).unwrap();
        assert_eq!((sys.n(), sys.p(), sys.q()), (4, 8, 8));
        assert!(sys.control_inputs.is_none());
    }

    #[test]
    fn lqr_stabilises_an_unstable_pair() {
        let a = Matrix::from_row_slice(2, 2, &[1.2, 1.0, 0.0, 0.9]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let f = dlqr(&a, &b, &Matrix::identity(2, 2), &Matrix::identity(1, 1)).unwrap();
        assert!(spectral_radius(&(&a + &b * &f)).unwrap() < 1.0);
    }

    #[test]
    fn zero_perturbation_has_zero_disutility() {
        let params = ZoneParams::path(3);
        let (sys, rel) = l2_fixture(&params, 2).unwrap();
        let k = Perturbation::zeros(3, 6, 3);
        let report = closed_loop_sim(&sys, &rel, &k, &Scenario::default()).unwrap();
        assert_eq!(report.y_true.len(), 201);
        assert!(report.disutility_series.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn temperatures_settle_without_occupancy() {
        let params = ZoneParams::path(4);
        let (sys, rel) = l2_fixture(&params, 3).unwrap();
        let k = Perturbation::zeros(4, 8, 4);
        let scenario = Scenario {
            occupancy_max: 0,
            horizon: 100,
            ..Scenario::default()
        };
        let report = closed_loop_sim(&sys, &rel, &k, &scenario).unwrap();
        let last = report.temperatures.last().unwrap();
        assert!(last.iter().all(|t| (t - 21.5).abs() < 0.5), "{last}");
    }

    #[test]
    fn disutility_examples() {
        let y: Vec<Vector> = (0..4).map(|k| Vector::from_vec(vec![1.0 + k as f64, -2.0])).collect();
        let (abs, rel) = disutility(&y, &y).unwrap();
        assert!(abs.iter().chain(&rel).all(|&v| v == 0.0));
        let doubled: Vec<Vector> = y.iter().map(|v| v * 2.0).collect();
        let (_, rel) = disutility(&doubled, &y).unwrap();
        assert!(rel.iter().all(|&r| (r - 1.0).abs() < 1e-15));
        let zero = vec![Vector::zeros(2)];
        let (_, rel) = disutility(&[Vector::from_vec(vec![1.0, 0.0])], &zero).unwrap();
        assert!(rel[0].is_infinite());
        assert!(disutility(&y[..2], &y).is_err());
    }

    #[test]
    fn dp_noise_level_and_determinism() {
        let dp = DpParams::default();
        let want = 10.0 * (2.0 * (1.25f64 / 1e-4).ln()).sqrt();
        assert!((dp.sigma().unwrap() - want).abs() < 1e-12);
        assert!(DpParams { epsilon: 0.0, ..dp }.sigma().is_err());

        let params = ZoneParams::path(3);
        let (sys, rel) = l2_fixture(&params, 4).unwrap();
        let s = Scenario {
            horizon: 30,
            ..Scenario::default()
        };
        let a = dp_baseline(&sys, &rel, &dp, &s).unwrap();
        let b = dp_baseline(&sys, &rel, &dp, &s).unwrap();
        assert_eq!(a, b);
        let loose = DpParams {
            epsilon: 1e12,
            ..dp
        };
        let c = dp_baseline(&sys, &rel, &loose, &s).unwrap();
        assert!(c.disutility_series.iter().all(|&d| d < 1e-6));
        // Occupancy draws do not depend on the noise stream.
        let iop = closed_loop_sim(&sys, &rel, &Perturbation::zeros(3, 6, 3), &s).unwrap();
        assert_eq!(iop.inputs, a.inputs);
    }

    #[test]
    fn supply_inputs_keep_any_occupancy_perturbation_controllable() {
        let params = ZoneParams::path(4);
        let (sys, rel) = l2_fixture(&params, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let exo = sys.exogenous_indices();
        for _ in 0..50 {
            let small = Perturbation {
                k_ss: uniform_matrix(&mut rng, 4, 4) * 3.0,
                k_si: uniform_matrix(&mut rng, 4, 4) * 3.0,
                k_os: uniform_matrix(&mut rng, 4, 4),
                k_oi: uniform_matrix(&mut rng, 4, 4),
            };
            let k = small.embed_inputs(&exo, sys.p());
            let pert = apply_perturbation(&sys, &rel, &k).unwrap();
            let bc = pert.b.select_columns(&sys.control_indices());
            let v = is_controllable(&pert.a, &bc, &Tolerance::default(), Method::KalmanRank).unwrap();
            assert!(v.controllable);
        }
    }

    #[test]
    fn csv_layout() {
        let params = ZoneParams::path(2);
        let (sys, rel) = l2_fixture(&params, 7).unwrap();
        let s = Scenario {
            horizon: 2,
            ..Scenario::default()
        };
        let report = closed_loop_sim(&sys, &rel, &Perturbation::zeros(2, 4, 2), &s).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "k,disutility,relative,y_true_norm,y_pert_norm,T1,T2");
        assert_eq!(lines.count(), 3);
    }
}
