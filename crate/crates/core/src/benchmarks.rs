//! Test functions with analytic gradients, and train/validation/test data.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::geometry::{standardizing_map, AffineMap, RngStream};

/// Huber function: `t^2` for `|t| < 1/2`, `|t| - 1/4` otherwise.
pub fn huber(t: f64) -> f64 {
    if t.abs() < 0.5 {
        t * t
    } else {
        t.abs() - 0.25
    }
}

pub fn huber_prime(t: f64) -> f64 {
    if t.abs() < 0.5 {
        2.0 * t
    } else {
        t.signum()
    }
}

fn huber_second(t: f64) -> f64 {
    if t.abs() < 0.5 {
        2.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    Gauss1d,
    PlanarWave,
    Checkmark,
    CornerMax,
    Separable,
    CornerPeak { a: f64 },
    RobotArm,
    Borehole,
}

/// How training abscissas are placed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Tensor grid with `floor(K^(1/d))` nodes per axis.
    Grid,
    #[default]
    UniformRandom,
}

/// Supported names and dimensions.
pub const BENCHMARKS: &[(&str, &str)] = &[
    ("gauss1d", "1"),
    ("planar_wave", "2"),
    ("checkmark", "2, 3, 4"),
    ("corner_max", "2"),
    ("separable", "2"),
    ("corner_peak", "1..=10"),
    ("robot_arm", "even, 2..=10"),
    ("borehole", "8"),
];

const BOREHOLE_BOUNDS: [(f64, f64); 8] = [
    (0.05, 0.15),
    (100.0, 50_000.0),
    (63_070.0, 115_600.0),
    (990.0, 1110.0),
    (63.1, 116.0),
    (700.0, 820.0),
    (1120.0, 1680.0),
    (9855.0, 12_045.0),
];

/// A test function on a raw coordinate box.
#[derive(Clone, Debug)]
pub struct Benchmark {
    name: &'static str,
    kind: Kind,
    bounds: Vec<(f64, f64)>,
    noise_sigma: f64,
}

pub fn make_benchmark(name: &str, d: usize) -> Result<Benchmark> {
    let unknown = || Error::UnknownBenchmark(format!("{name} in d={d}"));
    let cube = |d: usize| {
        let h = 1.0 / (d as f64).sqrt();
        vec![(-h, h); d]
    };
    let (name, kind, bounds, noise): (&'static str, Kind, Vec<(f64, f64)>, f64) = match (name, d) {
        ("gauss1d", 1) => ("gauss1d", Kind::Gauss1d, vec![(-1.0, 1.0)], 0.05),
        ("planar_wave", 2) => ("planar_wave", Kind::PlanarWave, cube(2), 0.0),
        ("checkmark", 2..=4) => ("checkmark", Kind::Checkmark, cube(d), 0.0),
        ("corner_max", 2) => ("corner_max", Kind::CornerMax, cube(2), 0.0),
        ("separable", 2) => ("separable", Kind::Separable, cube(2), 0.0),
        ("corner_peak", 1..=10) => ("corner_peak", Kind::CornerPeak { a: 2.0 }, vec![(0.0, 1.0); d], 0.0),
        ("robot_arm", 2..=10) if d.is_multiple_of(2) => {
            let b = (0..d).map(|i| if i % 2 == 0 { (0.0, 1.0) } else { (0.0, 2.0 * PI) }).collect();
            ("robot_arm", Kind::RobotArm, b, 0.0)
        }
        ("borehole", 8) => ("borehole", Kind::Borehole, BOREHOLE_BOUNDS.to_vec(), 0.0),
        _ => return Err(unknown()),
    };
    let bench = Benchmark { name, kind, bounds, noise_sigma: noise };
    let mut rng = RngStream::new(0x6772_6164, 0);
    let err = bench.gradient_check(100, &mut rng)?;
    if err > GRADIENT_CHECK_TOL {
        return Err(Error::invalid(format!("{name}: analytic gradient fails the finite-difference check ({err:.3e})")));
    }
    Ok(bench)
}

/// Relative tolerance of the finite-difference gradient check.
pub const GRADIENT_CHECK_TOL: f64 = 1e-5;

impl Benchmark {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn with_noise(mut self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("noise level must be nonnegative"));
        }
        self.noise_sigma = sigma;
        Ok(self)
    }

    /// Grid for the one- and two-dimensional examples, uniform random otherwise.
    pub fn default_sampling(&self) -> Sampling {
        match self.kind {
            Kind::Gauss1d | Kind::PlanarWave | Kind::CornerMax | Kind::Separable => Sampling::Grid,
            Kind::Checkmark if self.dim() == 2 => Sampling::Grid,
            _ => Sampling::UniformRandom,
        }
    }

    pub fn map(&self) -> AffineMap {
        standardizing_map(&self.bounds).expect("benchmark boxes are valid")
    }

    /// Function value at a raw point.
    pub fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            Kind::Gauss1d => (-0.5 * (10.0 * x[0]).powi(2)).exp(),
            Kind::PlanarWave => (5.0 * (x[0] - 2f64.sqrt() * x[1])).sin(),
            Kind::Checkmark => {
                let t = checkmark_t(x);
                (-0.5 * t.iter().enumerate().map(|(i, v)| (checkmark_sigma(i) * v).powi(2)).sum::<f64>()).exp()
            }
            Kind::CornerMax => 0f64.max(x[0]).max(x[1]),
            Kind::Separable => (10.0 * x[0]).cos() + huber(7.0 * x[1]),
            Kind::CornerPeak { a } => {
                let d = x.len() as i32;
                10.0 * (1.0 + a * x.iter().sum::<f64>()).powi(-d - 1)
            }
            Kind::RobotArm => {
                let (u, v, _) = robot_arm_parts(x);
                u.hypot(v)
            }
            Kind::Borehole => {
                let p = BoreholeParts::new(x);
                p.num / p.den
            }
        }
    }

    /// Gradient at a raw point; at kinks the first maximizing branch is used.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            Kind::Gauss1d => {
                let f = self.value(x);
                vec![-100.0 * x[0] * f]
            }
            Kind::PlanarWave => {
                let c = 5.0 * (5.0 * (x[0] - 2f64.sqrt() * x[1])).cos();
                vec![c, -2f64.sqrt() * c]
            }
            Kind::Checkmark => checkmark_gradient(x),
            Kind::CornerMax => {
                if x[0] >= x[1] && x[0] > 0.0 {
                    vec![1.0, 0.0]
                } else if x[1] > x[0] && x[1] > 0.0 {
                    vec![0.0, 1.0]
                } else {
                    vec![0.0, 0.0]
                }
            }
            Kind::Separable => vec![-10.0 * (10.0 * x[0]).sin(), 7.0 * huber_prime(7.0 * x[1])],
            Kind::CornerPeak { a } => {
                let d = x.len() as i32;
                let g = -10.0 * (d + 1) as f64 * a * (1.0 + a * x.iter().sum::<f64>()).powi(-d - 2);
                vec![g; x.len()]
            }
            Kind::RobotArm => robot_arm_gradient(x),
            Kind::Borehole => BoreholeParts::new(x).gradient(x),
        }
    }

    /// Hessian at a raw point. Analytic where closed forms are short; central
    /// differences of the analytic gradient for checkmark, robot arm and borehole.
    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        match self.kind {
            Kind::Gauss1d => {
                let f = self.value(x);
                DMatrix::from_element(1, 1, 100.0 * (100.0 * x[0] * x[0] - 1.0) * f)
            }
            Kind::PlanarWave => {
                let c = -25.0 * (5.0 * (x[0] - 2f64.sqrt() * x[1])).sin();
                let r = -2f64.sqrt();
                DMatrix::from_row_slice(2, 2, &[c, c * r, c * r, c * 2.0])
            }
            Kind::CornerMax => DMatrix::zeros(2, 2),
            Kind::Separable => DMatrix::from_row_slice(
                2,
                2,
                &[-100.0 * (10.0 * x[0]).cos(), 0.0, 0.0, 49.0 * huber_second(7.0 * x[1])],
            ),
            Kind::CornerPeak { a } => {
                let di = d as i32;
                let h = 10.0 * ((di + 1) * (di + 2)) as f64 * a * a * (1.0 + a * x.iter().sum::<f64>()).powi(-di - 3);
                DMatrix::from_element(d, d, h)
            }
            Kind::Checkmark | Kind::RobotArm | Kind::Borehole => {
                let mut h = DMatrix::zeros(d, d);
                for j in 0..d {
                    let step = 1e-5 * (self.bounds[j].1 - self.bounds[j].0);
                    let mut xp = x.to_vec();
                    let mut xm = x.to_vec();
                    xp[j] += step;
                    xm[j] -= step;
                    let (gp, gm) = (self.gradient(&xp), self.gradient(&xm));
                    for i in 0..d {
                        h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
                    }
                }
                (&h + h.transpose()) * 0.5
            }
        }
    }

    /// Points within `1e-4` of a set where the gradient is discontinuous or undefined.
    fn near_kink(&self, x: &[f64]) -> bool {
        const EPS: f64 = 1e-4;
        match self.kind {
            Kind::CornerMax => {
                let mut v = [0.0, x[0], x[1]];
                v.sort_by(f64::total_cmp);
                v[2] - v[1] < EPS
            }
            Kind::Separable => ((7.0 * x[1]).abs() - 0.5).abs() < 7.0 * EPS,
            Kind::RobotArm => self.value(x) < EPS,
            _ => false,
        }
    }

    /// Largest `|fd - g|_inf / max(|g|_inf, 1)` over `n` random points, in
    /// standardized coordinates with step `1e-6`.
    pub fn gradient_check(&self, n: usize, rng: &mut RngStream) -> Result<f64> {
        let map = self.map();
        let d = self.dim();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        let mut tries = 0;
        while checked < n {
            tries += 1;
            if tries > 100 * n {
                return Err(Error::invalid(format!("{}: no smooth points found for the gradient check", self.name)));
            }
            let raw: Vec<f64> = self.bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
            if self.near_kink(&raw) {
                continue;
            }
            let x = map.forward(&raw);
            let g = map.pull_gradient(&self.gradient(&raw));
            let scale = g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            for j in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (self.value(&map.inverse(&xp)) - self.value(&map.inverse(&xm))) / (2.0 * h);
                worst = worst.max((fd - g[j]).abs() / scale);
            }
            checked += 1;
        }
        Ok(worst)
    }
}

fn checkmark_sigma(i: usize) -> f64 {
    8.0 * 0.5f64.powi(i as i32)
}

fn checkmark_tail_norm(x: &[f64]) -> f64 {
    x[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn checkmark_t(x: &[f64]) -> Vec<f64> {
    let big_h = -1.0 / 3.0 + 2.0 / 3.0 * huber(3.0 * checkmark_tail_norm(x));
    let mut t = x.to_vec();
    t[0] -= big_h;
    t
}

fn checkmark_gradient(x: &[f64]) -> Vec<f64> {
    let f =
        (-0.5 * checkmark_t(x).iter().enumerate().map(|(i, v)| (checkmark_sigma(i) * v).powi(2)).sum::<f64>()).exp();
    let t = checkmark_t(x);
    let s = checkmark_tail_norm(x);
    // dH/dx_j = 2 h'(3s) x_j / s, which is 12 x_j on the quadratic piece.
    let dh_factor = if 3.0 * s < 0.5 { 12.0 } else { 2.0 / s };
    let s0 = checkmark_sigma(0).powi(2) * t[0];
    let mut g = vec![-f * s0; x.len()];
    for j in 1..x.len() {
        g[j] = -f * (-s0 * dh_factor * x[j] + checkmark_sigma(j).powi(2) * x[j]);
    }
    g
}

/// `(u, v, cumulative angles)` for interleaved `(L_1, theta_1, L_2, ...)`.
fn robot_arm_parts(x: &[f64]) -> (f64, f64, Vec<f64>) {
    let mut angle = 0.0;
    let (mut u, mut v) = (0.0, 0.0);
    let mut angles = Vec::with_capacity(x.len() / 2);
    for seg in x.chunks(2) {
        angle += seg[1];
        angles.push(angle);
        u += seg[0] * angle.cos();
        v += seg[0] * angle.sin();
    }
    (u, v, angles)
}

fn robot_arm_gradient(x: &[f64]) -> Vec<f64> {
    let (u, v, angles) = robot_arm_parts(x);
    let f = u.hypot(v);
    let m = angles.len();
    let mut g = vec![0.0; x.len()];
    if f == 0.0 {
        return g;
    }
    // d f / d theta_j collects the torque of every segment i >= j.
    let mut tail = 0.0;
    for i in (0..m).rev() {
        let (c, s) = (angles[i].cos(), angles[i].sin());
        g[2 * i] = (u * c + v * s) / f;
        tail += x[2 * i] * (-u * s + v * c) / f;
        g[2 * i + 1] = tail;
    }
    g
}

/// Borehole flow `2 pi T_u (H_u - H_l) / D` with
/// `D = ln(r/r_w) (1 + T_u/T_l) + 2 L T_u / (r_w^2 K_w)`.
/// Coordinates: `(r_w, r, T_u, H_u, T_l, H_l, L, K_w)`.
struct BoreholeParts {
    log_ratio: f64,
    num: f64,
    den: f64,
}

impl BoreholeParts {
    fn new(x: &[f64]) -> Self {
        let [rw, r, tu, hu, tl, hl, l, kw] = [x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]];
        let log_ratio = (r / rw).ln();
        let num = 2.0 * PI * tu * (hu - hl);
        let den = log_ratio * (1.0 + tu / tl) + 2.0 * l * tu / (rw * rw * kw);
        BoreholeParts { log_ratio, num, den }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let [rw, r, tu, hu, tl, hl, l, kw] = [x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]];
        let lr = self.log_ratio;
        let q = 1.0 + tu / tl;
        let dnum = [0.0, 0.0, 2.0 * PI * (hu - hl), 2.0 * PI * tu, 0.0, -2.0 * PI * tu, 0.0, 0.0];
        let dden = [
            -q / rw - 4.0 * l * tu / (rw.powi(3) * kw),
            q / r,
            lr / tl + 2.0 * l / (rw * rw * kw),
            0.0,
            -lr * tu / (tl * tl),
            0.0,
            2.0 * tu / (rw * rw * kw),
            -2.0 * l * tu / (rw * rw * kw * kw),
        ];
        let d2 = self.den * self.den;
        (0..8).map(|i| (dnum[i] * self.den - self.num * dden[i]) / d2).collect()
    }
}

/// Train, validation and test splits in standardized coordinates.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: DataSet,
    pub val: DataSet,
    pub test: DataSet,
    pub map: AffineMap,
}

/// Radius of the ball containing the standardized cube.
pub const DATA_RADIUS: f64 = 1.0;

fn grid_points(bounds: &[(f64, f64)], k: usize) -> DMatrix<f64> {
    let d = bounds.len();
    let mut m = 1usize;
    while (m + 1).checked_pow(d as u32).is_some_and(|v| v <= k) {
        m += 1;
    }
    let total = m.pow(d as u32);
    DMatrix::from_fn(total, d, |row, i| {
        let idx = (row / m.pow(i as u32)) % m;
        let (lo, hi) = bounds[i];
        if m == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * idx as f64 / (m - 1) as f64
        }
    })
}

fn random_points(bounds: &[(f64, f64)], k: usize, rng: &mut RngStream) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(k, bounds.len());
    for r in 0..k {
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            x[(r, i)] = rng.random_range(lo..=hi);
        }
    }
    x
}

fn build_split(
    bench: &Benchmark,
    map: &AffineMap,
    raw: &DMatrix<f64>,
    noise: f64,
    rng: &mut RngStream,
) -> Result<DataSet> {
    let (k, d) = raw.shape();
    let mut x = DMatrix::zeros(k, d);
    let mut y = DVector::zeros(k);
    let mut g = DMatrix::zeros(k, d);
    let mut hessians = Vec::with_capacity(k);
    for r in 0..k {
        let p: Vec<f64> = raw.row(r).iter().copied().collect();
        let xs = map.forward(&p);
        let gs = map.pull_gradient(&bench.gradient(&p));
        for i in 0..d {
            x[(r, i)] = xs[i];
            g[(r, i)] = gs[i];
        }
        y[r] = bench.value(&p) + if noise > 0.0 { noise * rng.standard_normal() } else { 0.0 };
        hessians.push(map.pull_hessian(&bench.hessian(&p)));
    }
    let side = 2.0 / (d as f64).sqrt();
    let rho = vec![side.powi(-(d as i32)); k];
    DataSet::new(x, y, DATA_RADIUS)?.with_gradients(g)?.with_hessians(hessians)?.with_rho(rho)
}

/// Draws `k` raw points per split (the grid may hold fewer training points),
/// standardizes them, and attaches gradients, Hessians and the uniform
/// density. Noise enters the training and validation targets only.
pub fn generate_dataset(
    bench: &Benchmark,
    k: usize,
    sampling: Sampling,
    noise_sigma: f64,
    rng: &mut RngStream,
) -> Result<Splits> {
    if k < 10 {
        return Err(Error::invalid("datasets need K >= 10"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid("noise level must be nonnegative"));
    }
    let map = bench.map();
    let mut points = rng.substream("points");
    let mut noise = rng.substream("noise");
    let train_raw = match sampling {
        Sampling::Grid => grid_points(&bench.bounds, k),
        Sampling::UniformRandom => random_points(&bench.bounds, k, &mut points),
    };
    let val_raw = random_points(&bench.bounds, k, &mut points);
    let test_raw = random_points(&bench.bounds, k, &mut points);
    let train = build_split(bench, &map, &train_raw, noise_sigma, &mut noise)?;
    let val = build_split(bench, &map, &val_raw, noise_sigma, &mut noise)?;
    let test = build_split(bench, &map, &test_raw, 0.0, &mut noise)?;
    Ok(Splits { train, val, test, map })
}

/// Writes a split as CSV with header `x_1..x_d,y,g_1..g_d`.
pub fn write_split_csv<W: Write>(out: W, ds: &DataSet) -> Result<()> {
    let d = ds.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    header.push("y".into());
    header.extend((1..=d).map(|i| format!("g_{i}")));
    w.write_record(&header)?;
    let grads = ds.gradients();
    for k in 0..ds.len() {
        let mut rec: Vec<String> = ds.x().row(k).iter().map(|v| format!("{v:e}")).collect();
        rec.push(format!("{:e}", ds.y()[k]));
        match grads {
            Some(g) => rec.extend(g.row(k).iter().map(|v| format!("{v:e}"))),
            None => rec.extend(std::iter::repeat_n(String::new(), d)),
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_examples() {
        assert_eq!(make_benchmark("gauss1d", 1).unwrap().value(&[0.0]), 1.0);
        assert_eq!(make_benchmark("corner_peak", 3).unwrap().value(&[0.0; 3]), 10.0);
        assert_eq!(make_benchmark("corner_max", 2).unwrap().value(&[-0.1, 0.3]), 0.3);
        let arm = make_benchmark("robot_arm", 6).unwrap();
        assert!((arm.value(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]) - 3.0).abs() < 1e-15);
        assert!((arm.value(&[1.0, 0.0, 1.0, PI, 0.5, 0.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn borehole_reference_value() {
        // Midpoint of the input box, evaluated by hand from the formula.
        let b = make_benchmark("borehole", 8).unwrap();
        let x: Vec<f64> = BOREHOLE_BOUNDS.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
        let (rw, r, tu, hu, tl, hl, l, kw) = (0.1, 25_050.0, 89_335.0, 1050.0, 89.55, 760.0, 1400.0, 10_950.0);
        let lr = f64::ln(r / rw);
        let expect = 2.0 * PI * tu * (hu - hl) / (lr * (1.0 + 2.0 * l * tu / (lr * rw * rw * kw) + tu / tl));
        assert!((b.value(&x) - expect).abs() <= 1e-12 * expect);
        assert!(expect > 50.0 && expect < 100.0, "{expect}");
    }

    #[test]
    fn unknown_names_and_dims() {
        assert!(matches!(make_benchmark("nope", 2), Err(Error::UnknownBenchmark(_))));
        assert!(make_benchmark("checkmark", 5).is_err());
        assert!(make_benchmark("robot_arm", 5).is_err());
    }

    #[test]
    fn every_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(17, 0);
        for (name, d) in [
            ("gauss1d", 1),
            ("planar_wave", 2),
            ("checkmark", 2),
            ("checkmark", 3),
            ("checkmark", 4),
            ("corner_max", 2),
            ("separable", 2),
            ("corner_peak", 3),
            ("corner_peak", 4),
            ("robot_arm", 6),
            ("borehole", 8),
        ] {
            let b = make_benchmark(name, d).unwrap();
            let err = b.gradient_check(100, &mut rng).unwrap();
            assert!(err <= GRADIENT_CHECK_TOL, "{name} d={d}: {err}");
        }
    }

    #[test]
    fn hessians_match_gradient_differences() {
        let mut rng = RngStream::new(19, 0);
        for (name, d) in [("gauss1d", 1), ("planar_wave", 2), ("separable", 2), ("corner_peak", 3)] {
            let b = make_benchmark(name, d).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = b.bounds().iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
                if b.near_kink(&x) || ((7.0 * x.get(1).copied().unwrap_or(0.0)).abs() - 0.5).abs() < 1e-3 {
                    continue;
                }
                let h = b.hessian(&x);
                for j in 0..d {
                    let step = 1e-6;
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += step;
                    xm[j] -= step;
                    let (gp, gm) = (b.gradient(&xp), b.gradient(&xm));
                    for i in 0..d {
                        let fd = (gp[i] - gm[i]) / (2.0 * step);
                        assert!(
                            (fd - h[(i, j)]).abs() <= 1e-4 * h.amax().max(1.0),
                            "{name} {i}{j}: {fd} vs {}",
                            h[(i, j)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn grid_abscissas() {
        let g = grid_points(&[(-1.0, 1.0)], 5);
        assert_eq!(g.as_slice(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(grid_points(&[(0.0, 1.0); 2], 1000).nrows(), 961);
        assert_eq!(grid_points(&[(0.0, 1.0); 3], 1000).nrows(), 1000);
    }

    #[test]
    fn noise_free_targets_and_chain_rule() {
        let b = make_benchmark("corner_peak", 3).unwrap();
        let mut rng = RngStream::new(21, 0);
        let s = generate_dataset(&b, 50, Sampling::UniformRandom, 0.0, &mut rng).unwrap();
        for k in 0..s.train.len() {
            let raw = s.map.inverse(&s.train.point(k));
            assert!((s.train.y()[k] - b.value(&raw)).abs() <= 1e-12 * b.value(&raw));
            let x = s.train.point(k);
            let g = s.train.gradients().unwrap();
            for j in 0..3 {
                let h = 1e-6;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (b.value(&s.map.inverse(&xp)) - b.value(&s.map.inverse(&xm))) / (2.0 * h);
                assert!((fd - g[(k, j)]).abs() <= 1e-5 * g[(k, j)].abs().max(1.0));
            }
        }
        assert_eq!(s.test.len(), 50);
        assert!(s.train.x().row_iter().all(|r| r.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn noise_only_in_train_and_val() {
        let b = make_benchmark("gauss1d", 1).unwrap();
        let mut rng = RngStream::new(22, 0);
        let s = generate_dataset(&b, 200, Sampling::Grid, 0.05, &mut rng).unwrap();
        let resid = |ds: &DataSet| {
            (0..ds.len()).map(|k| (ds.y()[k] - b.value(&s.map.inverse(&ds.point(k)))).powi(2)).sum::<f64>()
                / ds.len() as f64
        };
        assert!(resid(&s.train).sqrt() > 0.03);
        assert!(resid(&s.val).sqrt() > 0.03);
        assert_eq!(resid(&s.test), 0.0);
    }

    #[test]
    fn planar_wave_gradients_are_rank_one() {
        let b = make_benchmark("planar_wave", 2).unwrap();
        let s = generate_dataset(&b, 500, Sampling::UniformRandom, 0.0, &mut RngStream::new(23, 0)).unwrap();
        let sv = s.train.gradients().unwrap().clone().singular_values();
        assert!(sv[1] <= 1e-12 * sv[0]);
    }

    #[test]
    fn checkmark_has_no_global_subspace() {
        let b = make_benchmark("checkmark", 2).unwrap();
        let s = generate_dataset(&b, 2000, Sampling::UniformRandom, 0.0, &mut RngStream::new(24, 0)).unwrap();
        let sv = s.train.gradients().unwrap().clone().singular_values();
        let (hi, lo) = (sv.max(), sv.min());
        assert!(lo / hi >= 0.05, "{}", lo / hi);
    }

    #[test]
    fn corner_max_has_three_gradients() {
        let b = make_benchmark("corner_max", 2).unwrap();
        let s = generate_dataset(&b, 400, Sampling::UniformRandom, 0.0, &mut RngStream::new(25, 0)).unwrap();
        let g = s.train.gradients().unwrap();
        let scale = s.map.scale[0];
        for row in g.row_iter() {
            let raw = [row[0] * scale, row[1] * scale];
            let near = |t: [f64; 2]| (raw[0] - t[0]).abs() + (raw[1] - t[1]).abs() <= 1e-14;
            assert!(near([1.0, 0.0]) || near([0.0, 1.0]) || near([0.0, 0.0]), "{raw:?}");
        }
    }

    #[test]
    fn csv_dump_header() {
        let b = make_benchmark("planar_wave", 2).unwrap();
        let s = generate_dataset(&b, 16, Sampling::Grid, 0.0, &mut RngStream::new(26, 0)).unwrap();
        let mut buf = Vec::new();
        write_split_csv(&mut buf, &s.train).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x_1,x_2,y,g_1,g_2");
        assert_eq!(text.lines().count(), 17);
    }
}
