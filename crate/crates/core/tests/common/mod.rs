//! Independent oracles and invariant checks shared by the property suite and
//! the acceptance suite. Nothing here calls the closed-form centroid or loss
//! of the library; the intensity is rebuilt from the field definition.

#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tbdsim::detector::{self, CcdConfig, Frame};
use tbdsim::geometry::{self, TbdGeometry};
use tbdsim::inference::{self, KnownParams, SweepRecord};
use tbdsim::model::{self, BeamParams, DisplacerState, PostSelection};

/// Composite Simpson rule on `nodes` points (forced odd) over `[a, b]`.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, nodes: usize) -> f64 {
    let n = if nodes % 2 == 0 { nodes + 1 } else { nodes }.max(3);
    let h = (b - a) / (n - 1) as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n - 1 {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Intensity built directly from the two-replica field, independent of the
/// library's closed form.
pub fn oracle_intensity(e0: f64, w: f64, dx: f64, phi: f64, beta_deg: f64, x: f64) -> f64 {
    let b = beta_deg.to_radians();
    let h = e0 * b.cos() / 2f64.sqrt() * (-(x - dx).powi(2) / (2.0 * w * w)).exp();
    let v = e0 * b.sin() / 2f64.sqrt() * (-(x + dx).powi(2) / (2.0 * w * w)).exp();
    (Complex64::from_polar(h, phi) + v).norm_sqr()
}

pub const SIMPSON_NODES: usize = 8193;

/// Quadrature centroid of the post-selected profile over `[-10w, 10w]`.
pub fn quadrature_centroid(beam: &BeamParams, dev: &DisplacerState, ps: &PostSelection) -> f64 {
    let w = beam.width_um();
    let f = |x: f64| model::output_intensity(beam, dev, ps, x);
    let num = simpson(|x| x * f(x), -10.0 * w, 10.0 * w, SIMPSON_NODES);
    let den = simpson(f, -10.0 * w, 10.0 * w, SIMPSON_NODES);
    num / den
}

/// Quadrature transmitted fraction `∫I_out / ∫I_in`.
pub fn quadrature_power_ratio(beam: &BeamParams, dev: &DisplacerState, ps: &PostSelection) -> f64 {
    let w = beam.width_um();
    let out = simpson(|x| model::output_intensity(beam, dev, ps, x), -10.0 * w, 10.0 * w, SIMPSON_NODES);
    let inp = simpson(|x| model::input_intensity(beam, x), -10.0 * w, 10.0 * w, SIMPSON_NODES);
    out / inp
}

/// Independent closed-form centroid used to build synthetic data.
pub fn centroid_formula(dx: f64, gamma: f64, phi_deg: f64, beta_deg: f64) -> f64 {
    let b2 = (2.0 * beta_deg).to_radians();
    dx * b2.cos() / (1.0 + gamma * b2.sin() * phi_deg.to_radians().cos())
}

#[derive(Debug, Clone, Copy)]
pub struct ModelCase {
    pub e0: f64,
    pub w: f64,
    pub dx: f64,
    pub beta_deg: f64,
    pub phi_rad: f64,
}

impl ModelCase {
    pub fn beam(&self) -> BeamParams {
        BeamParams::new(self.e0, self.w).unwrap()
    }
    pub fn dev(&self) -> DisplacerState {
        DisplacerState::new(&self.beam(), self.dx, self.phi_rad).unwrap()
    }
    pub fn ps(&self) -> PostSelection {
        PostSelection::from_degrees(self.beta_deg)
    }
}

/// Randomized parameter sets: `w ∈ [100, 2000]`, `Δx ∈ [0, w/2]`, any `β`
/// and `φ`.
pub fn random_cases(seed: u64, n: usize) -> Vec<ModelCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let w = rng.gen_range(100.0..2000.0);
            ModelCase {
                e0: rng.gen_range(0.1..10.0),
                w,
                dx: rng.gen_range(0.0..=0.5 * w),
                beta_deg: rng.gen_range(0.0..180.0),
                phi_rad: rng.gen_range(0.0..std::f64::consts::TAU),
            }
        })
        .collect()
}

pub type Check = Result<(), String>;

/// `|E(x, 0)|²` against the closed-form intensity at `samples` points over
/// `[-6w, 6w]`, relative tolerance.
pub fn check_pointwise(c: &ModelCase, samples: usize, rel_tol: f64) -> Check {
    let (beam, dev, ps) = (c.beam(), c.dev(), c.ps());
    let half = 6.0 * c.w;
    for i in 0..samples {
        let x = -half + 2.0 * half * i as f64 / (samples - 1) as f64;
        let field = model::output_field(&beam, &dev, &ps, x, 0.0).norm_sqr();
        let closed = model::output_intensity(&beam, &dev, &ps, x);
        let err = (field - closed).abs() / closed.abs().max(f64::MIN_POSITIVE);
        if err > rel_tol {
            return Err(format!("{c:?} x={x}: |E|²={field:e} I={closed:e} rel={err:e}"));
        }
        let independent = oracle_intensity(c.e0, c.w, c.dx, c.phi_rad, c.beta_deg, x);
        let err = (independent - closed).abs() / closed.abs().max(f64::MIN_POSITIVE);
        if err > rel_tol {
            return Err(format!("{c:?} x={x}: oracle={independent:e} I={closed:e} rel={err:e}"));
        }
    }
    Ok(())
}

pub fn check_centroid_oracle(c: &ModelCase, abs_tol_in_w: f64) -> Check {
    let (beam, dev, ps) = (c.beam(), c.dev(), c.ps());
    let analytic = model::analytic_centroid(&dev, &ps).map_err(|e| e.to_string())?;
    let quad = quadrature_centroid(&beam, &dev, &ps);
    if (analytic - quad).abs() > abs_tol_in_w * c.w {
        return Err(format!("{c:?}: analytic {analytic} vs quadrature {quad}"));
    }
    Ok(())
}

pub fn check_power_oracle(c: &ModelCase, rel_tol: f64) -> Check {
    let (beam, dev, ps) = (c.beam(), c.dev(), c.ps());
    let quad = quadrature_power_ratio(&beam, &dev, &ps);
    let b2 = (2.0 * c.beta_deg).to_radians();
    let expected = 0.5 * (1.0 + dev.gamma() * b2.sin() * c.phi_rad.cos());
    if ((quad - expected) / expected).abs() > rel_tol {
        return Err(format!("{c:?}: quadrature ratio {quad} vs {expected}"));
    }
    let loss = model::insertion_loss_db(&dev, &ps).map_err(|e| e.to_string())?;
    let from_quad = -10.0 * quad.log10();
    if (loss - from_quad).abs() > 1e-8 {
        return Err(format!("{c:?}: loss {loss} dB vs quadrature {from_quad} dB"));
    }
    Ok(())
}

/// `⟨x⟩(β) = −⟨x⟩(90° − β)` at `φ = 0`.
pub fn check_symmetry(dx: f64, gamma: f64, beta_deg: f64) -> Check {
    let dev = DisplacerState::with_gamma(dx, 0.0, gamma).unwrap();
    let a = model::analytic_centroid(&dev, &PostSelection::from_degrees(beta_deg)).unwrap();
    let b = model::analytic_centroid(&dev, &PostSelection::from_degrees(90.0 - beta_deg)).unwrap();
    if (a + b).abs() > 1e-12 * dx.max(1.0) {
        return Err(format!("dx={dx} γ={gamma} β={beta_deg}: {a} vs {b}"));
    }
    Ok(())
}

/// `|⟨x⟩| ≤ Δx/(1−γ)` for any phase; strictly decreasing in `β` on
/// `(0°, 90°)` at `φ = 0`.
pub fn check_bounds_and_monotonicity(dx: f64, gamma: f64, phi_rad: f64) -> Check {
    let dev = DisplacerState::with_gamma(dx, phi_rad, gamma).unwrap();
    let bound = if gamma < 1.0 { dx / (1.0 - gamma) } else { f64::INFINITY };
    for i in 0..=360 {
        let b = i as f64 * 0.5;
        let c = model::analytic_centroid(&dev, &PostSelection::from_degrees(b)).map_err(|e| e.to_string())?;
        if c.abs() > bound * (1.0 + 1e-12) {
            return Err(format!("dx={dx} γ={gamma} φ={phi_rad} β={b}: |{c}| > {bound}"));
        }
    }
    let flat = DisplacerState::with_gamma(dx, 0.0, gamma).unwrap();
    let mut last = f64::INFINITY;
    for i in 1..900 {
        let b = i as f64 * 0.1;
        let c = model::analytic_centroid(&flat, &PostSelection::from_degrees(b)).unwrap();
        if !(c < last) {
            return Err(format!("dx={dx} γ={gamma}: not decreasing at β={b}"));
        }
        last = c;
    }
    Ok(())
}

pub fn check_endpoints(dx: f64, gamma: f64, phi_rad: f64) -> Check {
    let dev = DisplacerState::with_gamma(dx, phi_rad, gamma).unwrap();
    let c0 = model::analytic_centroid(&dev, &PostSelection::from_degrees(0.0)).unwrap();
    let c90 = model::analytic_centroid(&dev, &PostSelection::from_degrees(90.0)).unwrap();
    if c0 != dx || c90 != -dx {
        return Err(format!("dx={dx} γ={gamma} φ={phi_rad}: endpoints {c0}, {c90}"));
    }
    Ok(())
}

/// `|A| ≤ 0.18` for `β ∈ [40°, 50°]`, `φ = 0`, `γ ≥ 0.9`.
pub fn check_small_amplification(gamma: f64, beta_deg: f64) -> Check {
    let dev = DisplacerState::with_gamma(100.0, 0.0, gamma).unwrap();
    let a = model::amplification_factor(&dev, &PostSelection::from_degrees(beta_deg)).unwrap();
    if a.abs() > 0.18 {
        return Err(format!("γ={gamma} β={beta_deg}: |A| = {}", a.abs()));
    }
    Ok(())
}

pub fn check_geometry_linear(theta_deg: f64) -> Check {
    let g = |t: f64| geometry::theta_to_delta_x(&TbdGeometry::with_theta(t)).map_err(|e| e.to_string());
    let a = g(theta_deg)?;
    let neg = g(-theta_deg)?;
    let half = g(theta_deg / 2.0)?;
    if a != -neg {
        return Err(format!("θ={theta_deg}: not antisymmetric ({a} vs {neg})"));
    }
    if (a - 2.0 * half).abs() > 1e-9 * a.abs().max(1.0) {
        return Err(format!("θ={theta_deg}: not linear ({a} vs 2·{half})"));
    }
    Ok(())
}

pub fn check_gamma_monotone(theta_a: f64, theta_b: f64) -> Check {
    let beam = BeamParams::operating_point();
    let g = |t: f64| model::gamma_of(&beam, geometry::theta_to_delta_x(&TbdGeometry::with_theta(t)).unwrap());
    let (lo, hi) = if theta_a.abs() < theta_b.abs() { (theta_a, theta_b) } else { (theta_b, theta_a) };
    if theta_a.abs() != theta_b.abs() && !(g(hi) < g(lo)) {
        return Err(format!("γ(|{hi}|) = {} not below γ(|{lo}|) = {}", g(hi), g(lo)));
    }
    Ok(())
}

pub fn op_beam_dev(phi_deg: f64) -> (BeamParams, DisplacerState) {
    let beam = BeamParams::operating_point();
    let dev = DisplacerState::new(&beam, 120.0, phi_deg.to_radians()).unwrap();
    (beam, dev)
}

/// Frame wide enough in x that the beam is untruncated; y only scales the
/// total.
pub fn narrow_cfg() -> CcdConfig {
    CcdConfig {
        rows: 64,
        ..CcdConfig::default()
    }
}

/// Multiplying every count by an integer leaves the centroid unchanged.
pub fn check_scale_invariance(beta_deg: f64, factor: u16) -> Check {
    let (beam, dev) = op_beam_dev(54.0);
    let cfg = CcdConfig {
        full_well: u16::MAX,
        ..narrow_cfg()
    };
    let ps = PostSelection::from_degrees(beta_deg);
    let gain = detector::peak_gain(&beam, &dev, &cfg, 0.0).unwrap() / f64::from(factor);
    let base = detector::synthesize_frame_with_gain(&beam, &dev, &ps, &cfg, 0.0, gain).unwrap();
    let scaled: Vec<u16> = base.data().iter().map(|&v| v * factor).collect();
    let scaled = Frame::from_counts(scaled, cfg, 0.0).unwrap();
    let a = detector::estimate_centroid(&base).unwrap().x_um;
    let b = detector::estimate_centroid(&scaled).unwrap().x_um;
    if (a - b).abs() > 1e-9 {
        return Err(format!("β={beta_deg} k={factor}: {a} vs {b}"));
    }
    Ok(())
}

/// Moving the frame by `-k` pixels moves the beam by `+k` pixels on the
/// sensor; the frame-relative centroid shifts by exactly `k·pitch`.
pub fn check_shift_equivariance(beta_deg: f64, k: i32) -> Check {
    let (beam, dev) = op_beam_dev(54.0);
    let cfg = narrow_cfg();
    let ps = PostSelection::from_degrees(beta_deg);
    let gain = detector::peak_gain(&beam, &dev, &cfg, 0.0).unwrap();
    let origin = -f64::from(k) * cfg.pixel_pitch_um;
    let f0 = detector::synthesize_frame_with_gain(&beam, &dev, &ps, &cfg, 0.0, gain).unwrap();
    let f1 = detector::synthesize_frame_with_gain(&beam, &dev, &ps, &cfg, origin, gain).unwrap();
    let r0 = detector::estimate_centroid(&f0).unwrap().x_um - f0.origin_offset_um();
    let r1 = detector::estimate_centroid(&f1).unwrap().x_um - f1.origin_offset_um();
    let expected = f64::from(k) * cfg.pixel_pitch_um;
    if ((r1 - r0) - expected).abs() > 1e-9 {
        return Err(format!("β={beta_deg} k={k}: shift {} vs {expected}", r1 - r0));
    }
    Ok(())
}

pub fn check_determinism(seed: u64) -> Check {
    let (beam, dev) = op_beam_dev(54.0);
    let cfg = CcdConfig {
        cols: 96,
        rows: 64,
        noise_rms: 300.0,
        rng_seed: seed,
        ..CcdConfig::default()
    };
    let ps = PostSelection::from_degrees(25.0);
    let a = detector::synthesize_frame(&beam, &dev, &ps, &cfg, 0.0).unwrap();
    let b = detector::synthesize_frame(&beam, &dev, &ps, &cfg, 0.0).unwrap();
    if a.data() != b.data() {
        return Err(format!("seed {seed}: frames differ"));
    }
    Ok(())
}

/// Error of the frame centroid against the closed form at pitch 9, 4.5,
/// 2.25 µm over a fixed sensor extent.
pub fn convergence_errors(beta_deg: f64) -> Vec<f64> {
    let (beam, dev) = op_beam_dev(54.0);
    let ps = PostSelection::from_degrees(beta_deg);
    let analytic = model::analytic_centroid(&dev, &ps).unwrap();
    [1usize, 2, 4]
        .iter()
        .map(|&s| {
            let cfg = CcdConfig {
                cols: 1530 * s,
                rows: 32 * s,
                pixel_pitch_um: 9.0 / s as f64,
                ..CcdConfig::default()
            };
            let frame = detector::synthesize_frame(&beam, &dev, &ps, &cfg, 0.0).unwrap();
            (detector::estimate_centroid(&frame).unwrap().x_um - analytic).abs()
        })
        .collect()
}

pub fn synthetic_records(dx: f64, gamma: f64, phi_deg: f64, betas: &[f64]) -> Vec<SweepRecord> {
    betas
        .iter()
        .map(|&b| SweepRecord::new(b, centroid_formula(dx, gamma, phi_deg, b)))
        .collect()
}

pub fn check_fit_round_trip(dx: f64, gamma: f64, phi_deg: f64, betas: &[f64], tol_deg: f64) -> Check {
    let data = synthetic_records(dx, gamma, phi_deg, betas);
    let known = KnownParams { delta_x_um: dx, gamma };
    let fit = inference::fit_phi(&data, &known).map_err(|e| e.to_string())?;
    if (fit.phi_hat_deg - phi_deg).abs() > tol_deg {
        return Err(format!("dx={dx} γ={gamma} φ={phi_deg} β={betas:?}: φ̂={}", fit.phi_hat_deg));
    }
    Ok(())
}

fn rms_at(data: &[SweepRecord], known: &KnownParams, phi_deg: f64) -> f64 {
    let ss: f64 = data
        .iter()
        .map(|r| (r.centroid_um - centroid_formula(known.delta_x_um, known.gamma, phi_deg, r.beta_deg)).powi(2))
        .sum();
    (ss / data.len() as f64).sqrt()
}

/// The recovered phase is at least as good as its ±5° neighbours.
pub fn check_objective_sanity(data: &[SweepRecord], known: &KnownParams) -> Check {
    let fit = inference::fit_phi(data, known).map_err(|e| e.to_string())?;
    let at = fit.residual_rms_um;
    for p in [fit.phi_hat_deg - 5.0, fit.phi_hat_deg + 5.0] {
        let other = rms_at(data, known, p);
        if at > other + 1e-12 {
            return Err(format!("rms at φ̂={} is {at} > {other} at {p}", fit.phi_hat_deg));
        }
    }
    Ok(())
}

pub fn check_linear_exact(slope: f64, intercept: f64, betas: &[f64]) -> Check {
    let data: Vec<SweepRecord> = betas.iter().map(|&b| SweepRecord::new(b, slope * b + intercept)).collect();
    let lo = betas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = betas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let fit = inference::linear_region_fit(&data, (lo, hi)).map_err(|e| e.to_string())?;
    let scale = slope.abs().max(intercept.abs()).max(1.0);
    if (fit.slope_um_per_deg - slope).abs() > 1e-9 * scale
        || (fit.intercept_um - intercept).abs() > 1e-9 * scale * hi.abs().max(1.0)
        || (fit.r_squared - 1.0).abs() > 1e-9
    {
        return Err(format!("slope {slope} intercept {intercept}: got {fit:?}"));
    }
    Ok(())
}

pub fn check_sensitivity_homogeneous(slope: f64, res_deg: f64) -> Check {
    let fit = inference::LinearFit {
        slope_um_per_deg: slope,
        intercept_um: 0.0,
        beta_range_deg: (0.0, 90.0),
        r_squared: 1.0,
        points: 2,
    };
    let one = inference::sensitivity(&fit, res_deg).unwrap();
    let two = inference::sensitivity(&fit, 2.0 * res_deg).unwrap();
    if (two - 2.0 * one).abs() > 1e-12 * one.abs().max(1e-300) {
        return Err(format!("slope {slope} res {res_deg}: {two} != 2·{one}"));
    }
    Ok(())
}
