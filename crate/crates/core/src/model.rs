//! Discrete-time linear systems, release maps and input-output perturbations.
//!
//! A [`LinearSystem`] is `x(k+1) = A x(k) + B u(k)`, `y(k) = G x(k) + H u(k)`.
//! The released output is a mixture `y = Pi y'` of raw measurements, which is
//! what a [`ReleaseMap`] records. A [`Perturbation`] feeds state and input back
//! into both the actuation and the release, turning the system into
//! `(A + B Kss, B (I + Ksi), G + H Kss + Pi Kos, H + H Ksi + Pi Koi)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, block2x2, Matrix, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub g: Matrix,
    pub h: Matrix,
    /// Zero-based indices of the control inputs. The remaining inputs are
    /// exogenous. `None` means the whole input is exogenous.
    pub control_inputs: Option<Vec<usize>>,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix, g: Matrix, h: Matrix) -> Result<Self> {
        let sys = Self {
            a,
            b,
            g,
            h,
            control_inputs: None,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn with_control_inputs(mut self, control: Vec<usize>) -> Result<Self> {
        self.control_inputs = Some(control);
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn p(&self) -> usize {
        self.b.ncols()
    }
    pub fn q(&self) -> usize {
        self.g.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p, q) = (self.n(), self.p(), self.q());
        if n == 0 || p == 0 || q == 0 {
            return Err(Error::Dimension(format!(
                "dimensions must be positive, got n={n}, p={p}, q={q}"
            )));
        }
        let checks = [
            ("A", self.a.shape(), (n, n)),
            ("B", self.b.shape(), (n, p)),
            ("G", self.g.shape(), (q, n)),
            ("H", self.h.shape(), (q, p)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        for (name, m) in [("A", &self.a), ("B", &self.b), ("G", &self.g), ("H", &self.h)] {
            if !all_finite(m) {
                return Err(Error::InvalidArgument(format!("{name} has non-finite entries")));
            }
        }
        if let Some(ctrl) = &self.control_inputs {
            let mut seen = vec![false; p];
            for &j in ctrl {
                if j >= p || seen[j] {
                    return Err(Error::InvalidArgument(format!(
                        "control input index {j} out of range or repeated (p={p})"
                    )));
                }
                seen[j] = true;
            }
        }
        Ok(())
    }

    pub fn control_indices(&self) -> Vec<usize> {
        self.control_inputs.clone().unwrap_or_default()
    }

    pub fn exogenous_indices(&self) -> Vec<usize> {
        let ctrl = self.control_indices();
        (0..self.p()).filter(|j| !ctrl.contains(j)).collect()
    }

    /// The system seen through the given input columns only.
    pub fn restrict_inputs(&self, cols: &[usize]) -> LinearSystem {
        LinearSystem {
            a: self.a.clone(),
            b: self.b.select_columns(cols),
            g: self.g.clone(),
            h: self.h.select_columns(cols),
            control_inputs: None,
        }
    }

    /// The exogenous-input subsystem `(A, Be, G, He)`.
    pub fn exogenous_part(&self) -> LinearSystem {
        self.restrict_inputs(&self.exogenous_indices())
    }
}

/// Aggregation of raw measurements `y'` into the released output `y = Pi y'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseMap {
    pub pi: Matrix,
    pub g_raw: Option<Matrix>,
    pub h_raw: Option<Matrix>,
}

impl ReleaseMap {
    /// `Pi = I_q`, so the raw and released outputs coincide.
    pub fn identity(q: usize) -> Self {
        Self {
            pi: Matrix::identity(q, q),
            g_raw: None,
            h_raw: None,
        }
    }

    pub fn new(pi: Matrix) -> Self {
        Self {
            pi,
            g_raw: None,
            h_raw: None,
        }
    }

    pub fn l(&self) -> usize {
        self.pi.ncols()
    }

    pub fn validate(&self, sys: &LinearSystem) -> Result<()> {
        if self.pi.nrows() != sys.q() || self.l() == 0 {
            return Err(Error::Dimension(format!(
                "Pi is {}x{}, expected {} rows",
                self.pi.nrows(),
                self.pi.ncols(),
                sys.q()
            )));
        }
        if !all_finite(&self.pi) {
            return Err(Error::InvalidArgument("Pi has non-finite entries".into()));
        }
        if let Some(gr) = &self.g_raw {
            if gr.shape() != (self.l(), sys.n()) {
                return Err(Error::Dimension("raw G has wrong shape".into()));
            }
            let err = (&self.pi * gr - &sys.g).amax();
            if err > 1e-12 * (1.0 + sys.g.amax()) {
                return Err(Error::InvalidArgument(format!(
                    "Pi * G_raw differs from G by {err:e}"
                )));
            }
        }
        if let Some(hr) = &self.h_raw {
            if hr.shape() != (self.l(), sys.p()) {
                return Err(Error::Dimension("raw H has wrong shape".into()));
            }
            let err = (&self.pi * hr - &sys.h).amax();
            if err > 1e-12 * (1.0 + sys.h.amax()) {
                return Err(Error::InvalidArgument(format!(
                    "Pi * H_raw differs from H by {err:e}"
                )));
            }
        }
        Ok(())
    }
}

/// Feedback perturbation `K = [[Kss, Ksi], [Kos, Koi]]`, stored block-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub k_ss: Matrix,
    pub k_si: Matrix,
    pub k_os: Matrix,
    pub k_oi: Matrix,
}

impl Perturbation {
    pub fn zeros(n: usize, p: usize, l: usize) -> Self {
        Self {
            k_ss: Matrix::zeros(p, n),
            k_si: Matrix::zeros(p, p),
            k_os: Matrix::zeros(l, n),
            k_oi: Matrix::zeros(l, p),
        }
    }

    pub fn n(&self) -> usize {
        self.k_ss.ncols()
    }
    pub fn p(&self) -> usize {
        self.k_si.nrows()
    }
    pub fn l(&self) -> usize {
        self.k_os.nrows()
    }

    /// The `(p + l) x (n + p)` matrix `K`.
    pub fn assemble(&self) -> Matrix {
        block2x2(&self.k_ss, &self.k_si, &self.k_os, &self.k_oi)
    }

    /// Split an assembled `(p + l) x (n + p)` matrix into blocks.
    pub fn from_assembled(k: &Matrix, n: usize, p: usize, l: usize) -> Result<Self> {
        if k.shape() != (p + l, n + p) {
            return Err(Error::Dimension(format!(
                "K is {}x{}, expected {}x{}",
                k.nrows(),
                k.ncols(),
                p + l,
                n + p
            )));
        }
        Ok(Self {
            k_ss: k.view((0, 0), (p, n)).into_owned(),
            k_si: k.view((0, n), (p, p)).into_owned(),
            k_os: k.view((p, 0), (l, n)).into_owned(),
            k_oi: k.view((p, n), (l, p)).into_owned(),
        })
    }

    pub fn check_dims(&self, sys: &LinearSystem, rel: &ReleaseMap) -> Result<()> {
        let (n, p, l) = (sys.n(), sys.p(), rel.l());
        let ok = self.k_ss.shape() == (p, n)
            && self.k_si.shape() == (p, p)
            && self.k_os.shape() == (l, n)
            && self.k_oi.shape() == (l, p);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "perturbation blocks do not match n={n}, p={p}, l={l}"
            )))
        }
    }

    /// Embed a perturbation designed on a subset of inputs into the full
    /// input space; rows and columns of the other inputs stay zero.
    pub fn embed_inputs(&self, cols: &[usize], p_full: usize) -> Self {
        let (n, l) = (self.n(), self.l());
        let mut out = Perturbation::zeros(n, p_full, l);
        for (a, &ja) in cols.iter().enumerate() {
            for c in 0..n {
                out.k_ss[(ja, c)] = self.k_ss[(a, c)];
            }
            for (b, &jb) in cols.iter().enumerate() {
                out.k_si[(ja, jb)] = self.k_si[(a, b)];
            }
            for r in 0..l {
                out.k_oi[(r, ja)] = self.k_oi[(r, a)];
            }
        }
        out.k_os.copy_from(&self.k_os);
        out
    }
}

/// `D(z) = [[zI - A, -B], [G, H]]`.
pub fn pencil(sys: &LinearSystem, z: f64) -> Matrix {
    let n = sys.n();
    let top_left = Matrix::identity(n, n) * z - &sys.a;
    block2x2(&top_left, &(-&sys.b), &sys.g, &sys.h)
}

/// `F = [[-B, 0], [H, Pi]]`, the map through which `K` enters the pencil.
pub fn f_matrix(sys: &LinearSystem, rel: &ReleaseMap) -> Matrix {
    let zero = Matrix::zeros(sys.n(), rel.l());
    block2x2(&(-&sys.b), &zero, &sys.h, &rel.pi)
}

pub fn apply_perturbation(
    sys: &LinearSystem,
    rel: &ReleaseMap,
    k: &Perturbation,
) -> Result<LinearSystem> {
    k.check_dims(sys, rel)?;
    let p = sys.p();
    let a = &sys.a + &sys.b * &k.k_ss;
    let b = &sys.b * (Matrix::identity(p, p) + &k.k_si);
    let g = &sys.g + &sys.h * &k.k_ss + &rel.pi * &k.k_os;
    let h = &sys.h + &sys.h * &k.k_si + &rel.pi * &k.k_oi;
    Ok(LinearSystem {
        a,
        b,
        g,
        h,
        control_inputs: sys.control_inputs.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub outputs: Vec<Vector>,
    pub horizon: usize,
}

impl Trajectory {
    pub fn max_output_norm(&self) -> f64 {
        self.outputs.iter().map(|y| y.norm()).fold(0.0, f64::max)
    }
}

/// Run the recursion for `horizon + 1` samples, `k = 0..=horizon`.
pub fn simulate(
    sys: &LinearSystem,
    x0: &Vector,
    inputs: &[Vector],
    horizon: usize,
) -> Result<Trajectory> {
    if inputs.len() != horizon + 1 {
        return Err(Error::InvalidArgument(format!(
            "expected {} input samples for horizon {horizon}, got {}",
            horizon + 1,
            inputs.len()
        )));
    }
    if x0.len() != sys.n() || inputs.iter().any(|u| u.len() != sys.p()) {
        return Err(Error::Dimension("initial state or input sample has wrong length".into()));
    }
    let mut states = Vec::with_capacity(horizon + 1);
    let mut outputs = Vec::with_capacity(horizon + 1);
    let mut x = x0.clone();
    for (k, u) in inputs.iter().enumerate() {
        outputs.push(&sys.g * &x + &sys.h * u);
        let next = &sys.a * &x + &sys.b * u;
        states.push(std::mem::replace(&mut x, next));
        if k == horizon {
            break;
        }
    }
    Ok(Trajectory {
        states,
        inputs: inputs.to_vec(),
        outputs,
        horizon,
    })
}
