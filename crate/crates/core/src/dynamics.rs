//! Ground-truth structural dynamics: sine-sweep excitation, the Duffing
//! oscillator and a linear two-degree-of-freedom system, all integrated
//! with fixed-step classic RK4 from rest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sine sweep with linearly increasing instantaneous frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub amplitude: f64,
    pub f_low: f64,
    pub f_up: f64,
    pub duration: f64,
}

impl SweepSpec {
    pub fn new(amplitude: f64, f_low: f64, f_up: f64, duration: f64) -> Result<Self> {
        let spec = Self {
            amplitude,
            f_low,
            f_up,
            duration,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A = 5, 1 → 10 Hz over 2 s.
    pub fn duffing_default() -> Self {
        Self {
            amplitude: 5.0,
            f_low: 1.0,
            f_up: 10.0,
            duration: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_low > 0.0 && self.f_up >= self.f_low && self.f_up.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sweep needs f_up >= f_low > 0, got f_low={}, f_up={}",
                self.f_low, self.f_up
            )));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sweep duration must be positive, got {}",
                self.duration
            )));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidArgument("sweep amplitude must be finite".into()));
        }
        Ok(())
    }

    fn eval(&self, t: f64) -> f64 {
        let phase = self.f_low * t + (self.f_up - self.f_low) * t * t / (2.0 * self.duration);
        self.amplitude * (2.0 * std::f64::consts::PI * phase).sin()
    }
}

/// `A sin(2π [f_low t + (f_up − f_low) t² / (2T)])` for `t ∈ [0, T]`.
pub fn sweep_force(spec: &SweepSpec, t: f64) -> Result<f64> {
    if !(0.0..=spec.duration).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "sweep evaluated at t = {t} outside [0, {}]",
            spec.duration
        )));
    }
    Ok(spec.eval(t))
}

/// Stiffness, damping and cubic stiffness of a unit-mass Duffing oscillator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuffingParams {
    pub stiffness: f64,
    pub damping: f64,
    pub cubic: f64,
}

impl DuffingParams {
    pub fn new(stiffness: f64, damping: f64, cubic: f64) -> Result<Self> {
        if !(stiffness > 0.0 && damping >= 0.0 && cubic.is_finite() && stiffness.is_finite() && damping.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Duffing parameters need stiffness > 0, damping >= 0, finite cubic term; got ({stiffness}, {damping}, {cubic})"
            )));
        }
        Ok(Self {
            stiffness,
            damping,
            cubic,
        })
    }

    fn acceleration(&self, x: f64, v: f64, force: f64) -> f64 {
        -self.stiffness * x - self.damping * v - self.cubic * x * x * x + force
    }
}

/// Output sampling grid: `samples` points spaced `dt` apart starting at
/// `t = 0`, with `substeps` RK4 steps between consecutive samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimGrid {
    pub dt: f64,
    pub samples: usize,
    pub substeps: usize,
}

impl SimGrid {
    pub fn new(dt: f64, samples: usize, substeps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || samples == 0 || substeps == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid needs dt > 0, samples >= 1, substeps >= 1; got ({dt}, {samples}, {substeps})"
            )));
        }
        Ok(Self {
            dt,
            samples,
            substeps,
        })
    }

    /// Δt = 0.01 s, 200 samples, 10 RK4 substeps.
    pub fn duffing_default() -> Self {
        Self {
            dt: 0.01,
            samples: 200,
            substeps: 10,
        }
    }

    /// The same time span sampled `factor` times more densely; sample
    /// `factor·i` of the result lands exactly on sample `i` of `self`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument("refinement factor must be >= 1".into()));
        }
        Self::new(self.dt / factor as f64, self.samples * factor, self.substeps)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples).map(|i| i as f64 * self.dt).collect()
    }

    pub fn span(&self) -> f64 {
        self.samples as f64 * self.dt
    }

    /// `samples · dt` must equal the sweep duration.
    pub fn check_sweep(&self, sweep: &SweepSpec) -> Result<()> {
        let span = self.span();
        if (span - sweep.duration).abs() > 1e-9 * sweep.duration.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "grid spans {span} s but the sweep lasts {} s",
                sweep.duration
            )));
        }
        Ok(())
    }
}

/// Displacement, velocity and acceleration sampled on a [`SimGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct SdofResponse {
    pub time: Vec<f64>,
    pub displacement: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
}

pub(crate) fn rk4_step<const N: usize>(
    t: f64,
    y: &[f64; N],
    h: f64,
    rhs: &impl Fn(f64, &[f64; N]) -> [f64; N],
) -> [f64; N] {
    let axpy = |a: &[f64; N], k: &[f64; N], s: f64| -> [f64; N] {
        std::array::from_fn(|i| a[i] + s * k[i])
    };
    let k1 = rhs(t, y);
    let k2 = rhs(t + 0.5 * h, &axpy(y, &k1, 0.5 * h));
    let k3 = rhs(t + 0.5 * h, &axpy(y, &k2, 0.5 * h));
    let k4 = rhs(t + h, &axpy(y, &k3, h));
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Integrates from rest, recording the state at every grid sample.
fn integrate<const N: usize>(
    grid: &SimGrid,
    rhs: impl Fn(f64, &[f64; N]) -> [f64; N],
    mut record: impl FnMut(usize, f64, &[f64; N]),
) -> Result<()> {
    let h = grid.dt / grid.substeps as f64;
    let mut y = [0.0; N];
    record(0, 0.0, &y);
    for i in 1..grid.samples {
        let t0 = (i - 1) as f64 * grid.dt;
        for j in 0..grid.substeps {
            y = rk4_step(t0 + j as f64 * h, &y, h, &rhs);
        }
        let t = i as f64 * grid.dt;
        if let Some(k) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::SimulationDiverged {
                time: t,
                detail: format!("state component {k} became {}", y[k]),
            });
        }
        record(i, t, &y);
    }
    Ok(())
}

/// Duffing response to a sweep from zero initial conditions. Acceleration
/// is the equation of motion evaluated at each output instant.
pub fn simulate_duffing(p: &DuffingParams, sweep: &SweepSpec, grid: &SimGrid) -> Result<SdofResponse> {
    sweep.validate()?;
    grid.check_sweep(sweep)?;
    let n = grid.samples;
    let mut out = SdofResponse {
        time: vec![0.0; n],
        displacement: vec![0.0; n],
        velocity: vec![0.0; n],
        acceleration: vec![0.0; n],
    };
    let rhs = |t: f64, y: &[f64; 2]| [y[1], p.acceleration(y[0], y[1], sweep.eval(t))];
    integrate(grid, rhs, |i, t, y| {
        out.time[i] = t;
        out.displacement[i] = y[0];
        out.velocity[i] = y[1];
        out.acceleration[i] = p.acceleration(y[0], y[1], sweep.eval(t));
    })?;
    if let Some(i) = out.acceleration.iter().position(|a| !a.is_finite()) {
        return Err(Error::SimulationDiverged {
            time: out.time[i],
            detail: "non-finite acceleration".into(),
        });
    }
    Ok(out)
}

pub type Mat2 = [[f64; 2]; 2];

/// `M ẍ + C ẋ + K x = load · f(t)` with two degrees of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearTwoDof {
    pub mass: Mat2,
    pub stiffness: Mat2,
    pub damping: Mat2,
    pub load: [f64; 2],
}

impl LinearTwoDof {
    /// Unit masses, a two-spring chain (k = 100) with 5 % stiffness-
    /// proportional damping, forced at the free end.
    pub fn standin() -> Self {
        let stiffness = [[200.0, -100.0], [-100.0, 100.0]];
        let damping = stiffness.map(|row| row.map(|k| 0.05 * k));
        Self {
            mass: [[1.0, 0.0], [0.0, 1.0]],
            stiffness,
            damping,
            load: [0.0, 1.0],
        }
    }

    fn mass_inverse(&self) -> Result<Mat2> {
        let m = self.mass;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        if !det.is_finite() || det.abs() <= 1e-12 * scale * scale {
            return Err(Error::InvalidArgument(format!(
                "mass matrix {m:?} is singular (det = {det})"
            )));
        }
        Ok([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
    }
}

fn mat_vec(m: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

/// Two acceleration channels sampled on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoDofResponse {
    pub time: Vec<f64>,
    pub acceleration: [Vec<f64>; 2],
}

pub fn simulate_linear_2dof(sys: &LinearTwoDof, sweep: &SweepSpec, grid: &SimGrid) -> Result<TwoDofResponse> {
    sweep.validate()?;
    grid.check_sweep(sweep)?;
    let minv = sys.mass_inverse()?;
    let accel = |t: f64, y: &[f64; 4]| -> [f64; 2] {
        let f = sweep.eval(t);
        let kx = mat_vec(&sys.stiffness, [y[0], y[1]]);
        let cv = mat_vec(&sys.damping, [y[2], y[3]]);
        let net = [
            sys.load[0] * f - kx[0] - cv[0],
            sys.load[1] * f - kx[1] - cv[1],
        ];
        mat_vec(&minv, net)
    };
    let rhs = |t: f64, y: &[f64; 4]| {
        let a = accel(t, y);
        [y[2], y[3], a[0], a[1]]
    };
    let n = grid.samples;
    let mut out = TwoDofResponse {
        time: vec![0.0; n],
        acceleration: [vec![0.0; n], vec![0.0; n]],
    };
    integrate(grid, rhs, |i, t, y| {
        let a = accel(t, y);
        out.time[i] = t;
        out.acceleration[0][i] = a[0];
        out.acceleration[1][i] = a[1];
    })?;
    Ok(out)
}
